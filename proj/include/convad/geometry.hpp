#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "convad/error.hpp"

namespace convad {

/// Window geometry shared by convolution, pooling and the mask
/// position-attribution ops. Channel counts are only used by convolution.
struct ConvGeometry {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t dilation_h = 1;
  std::size_t dilation_w = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  static ConvGeometry square(std::size_t kernel, std::size_t stride = 1,
                             std::size_t pad = 0, std::size_t dilation = 1) {
    ConvGeometry g;
    g.kernel_h = g.kernel_w = kernel;
    g.stride_h = g.stride_w = stride;
    g.pad_h = g.pad_w = pad;
    g.dilation_h = g.dilation_w = dilation;
    return g;
  }

  ConvGeometry& channels(std::size_t in, std::size_t out) {
    in_channels = in;
    out_channels = out;
    return *this;
  }

  void validate() const {
    if (kernel_h == 0 || kernel_w == 0) throw GeometryError("kernel size must be >= 1");
    if (stride_h == 0 || stride_w == 0) throw GeometryError("stride must be >= 1");
    if (dilation_h == 0 || dilation_w == 0) throw GeometryError("dilation must be >= 1");
  }

  bool operator==(const ConvGeometry&) const = default;
};

/// floor((in + 2*pad - dilation*(k-1) - 1) / stride) + 1, or throws when the
/// window does not fit at least once.
inline std::size_t window_output_extent(std::size_t in, std::size_t kernel,
                                        std::size_t stride, std::size_t pad,
                                        std::size_t dilation, const char* axis) {
  const std::size_t padded = in + 2 * pad;
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (span > padded) {
    throw GeometryError(std::string("window extent ") + std::to_string(span) +
                        " exceeds padded input " + std::to_string(padded) +
                        " along " + axis);
  }
  return (padded - span) / stride + 1;
}

inline std::pair<std::size_t, std::size_t> output_hw(const ConvGeometry& g,
                                                     std::size_t h, std::size_t w) {
  g.validate();
  return {window_output_extent(h, g.kernel_h, g.stride_h, g.pad_h, g.dilation_h, "height"),
          window_output_extent(w, g.kernel_w, g.stride_w, g.pad_w, g.dilation_w, "width")};
}

}  // namespace convad
