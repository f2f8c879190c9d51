#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <string>

#include "convad/error.hpp"
#include "convad/tensor.hpp"

namespace convad {

using MaskArray =
    Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-cell fractions of unmasked inputs, in [0,1].
using AttributionMap =
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel spatial mask: 1 keeps a position, 0 occludes it. A mask
/// accompanying a (C,H,W) tensor is H x W and shared by all channels; a mask
/// accompanying a rank-1 tensor of length N is 1 x N.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols, bool value = true)
      : cells_(MaskArray::Constant(static_cast<Eigen::Index>(rows),
                                   static_cast<Eigen::Index>(cols),
                                   value ? 1 : 0)) {}

  explicit BinaryMask(MaskArray cells) : cells_(std::move(cells)) {
    if (((cells_ != 0) && (cells_ != 1)).any()) {
      throw ValueError("binary mask cells must be 0 or 1");
    }
  }

  static BinaryMask ones(std::size_t rows, std::size_t cols) { return {rows, cols, true}; }
  static BinaryMask zeros(std::size_t rows, std::size_t cols) { return {rows, cols, false}; }

  std::size_t rows() const { return static_cast<std::size_t>(cells_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(cells_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(cells_.size()); }
  std::size_t count() const { return static_cast<std::size_t>((cells_ != 0).count()); }

  bool operator()(std::size_t r, std::size_t c) const {
    return cells_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) != 0;
  }
  void set(std::size_t r, std::size_t c, bool value) {
    cells_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = value ? 1 : 0;
  }

  const MaskArray& cells() const { return cells_; }

  bool all() const { return (cells_ != 0).all(); }
  bool none() const { return (cells_ == 0).all(); }

  BinaryMask complement() const { return BinaryMask(MaskArray(1 - cells_)); }

  /// Elementwise this <= other.
  bool subset_of(const BinaryMask& other) const {
    return rows() == other.rows() && cols() == other.cols() && (cells_ <= other.cells_).all();
  }

  bool operator==(const BinaryMask& other) const {
    return rows() == other.rows() && cols() == other.cols() && (cells_ == other.cells_).all();
  }

 private:
  MaskArray cells_;
};

inline std::string mask_shape_string(const BinaryMask& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// The (rows, cols) a mask must have to accompany the given activation.
inline std::pair<std::size_t, std::size_t> spatial_extent(const Shape& shape) {
  if (shape.size() == 3) return {shape[1], shape[2]};
  return {1, shape_product(shape)};
}

}  // namespace convad
