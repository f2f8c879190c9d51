#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "convad/error.hpp"

namespace convad {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major N-d array. Layer activations are (C,H,W); classifier
/// outputs and flattened features are rank 1.
///
/// Every dimension must be at least 1, except that a rank-3 tensor may have
/// zero channels (the neutral element of channel concatenation).
template <typename Scalar>
class BasicTensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneArray =
      Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Plane = Eigen::Map<PlaneArray>;
  using ConstPlane = Eigen::Map<const PlaneArray>;

  BasicTensor() : shape_{1}, data_(Vector::Zero(1)) {}

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)) {
    check_shape();
    data_ = Vector::Constant(static_cast<Eigen::Index>(shape_product(shape_)),
                             fill);
  }

  BasicTensor(Shape shape, Vector data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (static_cast<std::size_t>(data_.size()) != shape_product(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), to_vector(values)) {}

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return static_cast<std::size_t>(data_.size()); }

  // (C,H,W) accessors; only meaningful for rank-3 tensors.
  std::size_t channels() const { return shape_.at(0); }
  std::size_t height() const { return shape_.at(1); }
  std::size_t width() const { return shape_.at(2); }

  Vector& values() { return data_; }
  const Vector& values() const { return data_; }
  std::span<Scalar> span() { return {data_.data(), size()}; }
  std::span<const Scalar> span() const { return {data_.data(), size()}; }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const {
    return data_[static_cast<Eigen::Index>(i)];
  }

  Scalar& operator()(std::size_t c, std::size_t h, std::size_t w) {
    return data_[static_cast<Eigen::Index>((c * shape_[1] + h) * shape_[2] + w)];
  }
  Scalar operator()(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[static_cast<Eigen::Index>((c * shape_[1] + h) * shape_[2] + w)];
  }

  Plane plane(std::size_t c) {
    return Plane(data_.data() + c * shape_[1] * shape_[2],
                 static_cast<Eigen::Index>(shape_[1]),
                 static_cast<Eigen::Index>(shape_[2]));
  }
  ConstPlane plane(std::size_t c) const {
    return ConstPlane(data_.data() + c * shape_[1] * shape_[2],
                      static_cast<Eigen::Index>(shape_[1]),
                      static_cast<Eigen::Index>(shape_[2]));
  }

  BasicTensor reshaped(Shape shape) const { return BasicTensor(std::move(shape), data_); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  bool operator==(const BasicTensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static Vector to_vector(std::initializer_list<Scalar> values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    std::size_t i = 0;
    for (Scalar x : values) v[static_cast<Eigen::Index>(i++)] = x;
    return v;
  }

  void check_shape() const {
    if (shape_.empty()) throw ShapeError("tensor rank must be at least 1");
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      const bool empty_channels = (i == 0 && shape_.size() == 3);
      if (shape_[i] == 0 && !empty_channels) {
        throw ShapeError("tensor dimension " + std::to_string(i) +
                         " is zero in shape " + shape_to_string(shape_));
      }
    }
  }

  Shape shape_;
  Vector data_;
};

using Tensor = BasicTensor<float>;

template <typename Scalar>
Scalar max_abs_diff(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("cannot compare " + shape_to_string(a.shape()) + " with " +
                     shape_to_string(b.shape()));
  }
  if (a.size() == 0) return Scalar(0);
  return (a.values() - b.values()).cwiseAbs().maxCoeff();
}

}  // namespace convad
