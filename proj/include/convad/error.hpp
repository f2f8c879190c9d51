#pragma once

#include <stdexcept>
#include <string>

namespace convad {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or parameter dimensions disagree. The message names the dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

// Manifest does not follow the documented schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A layer references a weight blob that the blob file does not contain.
class DanglingRefError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace convad
