#include "convad/attribution.hpp"

#include <string>

namespace convad {
namespace {

AttributionMap windowed_fraction(const BinaryMask& mask, const ConvGeometry& g) {
  const std::size_t h = mask.rows();
  const std::size_t w = mask.cols();
  const auto [oh, ow] = output_hw(g, h, w);
  AttributionMap phi(static_cast<Eigen::Index>(oh), static_cast<Eigen::Index>(ow));
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      std::size_t valid = 0;
      std::size_t unmasked = 0;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const auto y = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky * g.dilation_h) -
                       static_cast<std::ptrdiff_t>(g.pad_h);
        if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const auto x = static_cast<std::ptrdiff_t>(ox * g.stride_w + kx * g.dilation_w) -
                         static_cast<std::ptrdiff_t>(g.pad_w);
          if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
          ++valid;
          if (mask(static_cast<std::size_t>(y), static_cast<std::size_t>(x))) ++unmasked;
        }
      }
      phi(static_cast<Eigen::Index>(oy), static_cast<Eigen::Index>(ox)) =
          valid == 0 ? 1.0 : static_cast<double>(unmasked) / static_cast<double>(valid);
    }
  }
  return phi;
}

}  // namespace

AttributionMap position_attribution_conv(const BinaryMask& mask, const ConvGeometry& geom) {
  return windowed_fraction(mask, geom);
}

AttributionMap position_attribution_pool(const BinaryMask& mask, const ConvGeometry& window) {
  return windowed_fraction(mask, window);
}

AttributionMap position_attribution_upsample(const BinaryMask& mask, std::size_t factor) {
  if (factor < 2) throw GeometryError("upsample factor must be >= 2");
  const auto rows = static_cast<Eigen::Index>(mask.rows() * factor);
  const auto cols = static_cast<Eigen::Index>(mask.cols() * factor);
  AttributionMap phi(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      phi(y, x) = mask(static_cast<std::size_t>(y) / factor,
                       static_cast<std::size_t>(x) / factor) ? 1.0 : 0.0;
    }
  }
  return phi;
}

BinaryMask position_attribution_concat(const BinaryMask& mask_a, const BinaryMask& mask_b,
                                       bool include_external) {
  if (mask_a.rows() != mask_b.rows() || mask_a.cols() != mask_b.cols()) {
    throw ShapeError("concat masks differ in spatial extent: " + mask_shape_string(mask_a) +
                     " vs " + mask_shape_string(mask_b));
  }
  if (!include_external) return mask_a;
  return BinaryMask(MaskArray(mask_a.cells().max(mask_b.cells())));
}

BinaryMask position_attribution_flatten(const BinaryMask& mask, std::size_t channels) {
  const std::size_t plane = mask.size();
  MaskArray flat(1, static_cast<Eigen::Index>(channels * plane));
  for (std::size_t c = 0; c < channels; ++c) {
    flat.block(0, static_cast<Eigen::Index>(c * plane), 1, static_cast<Eigen::Index>(plane)) =
        mask.cells().reshaped<Eigen::RowMajor>(1, static_cast<Eigen::Index>(plane));
  }
  return BinaryMask(std::move(flat));
}

BinaryMask threshold_mask(const AttributionMap& phi, double tau) {
  return BinaryMask(MaskArray((phi > tau).cast<std::uint8_t>()));
}

void apply_mask(Tensor& activation, const BinaryMask& mask) {
  const auto [rows, cols] = spatial_extent(activation.shape());
  if (mask.rows() != rows || mask.cols() != cols) {
    throw ShapeError("mask " + mask_shape_string(mask) + " does not match activation " +
                     shape_to_string(activation.shape()));
  }
  const auto keep = mask.cells().cast<float>();
  if (activation.rank() == 3) {
    for (std::size_t c = 0; c < activation.channels(); ++c) activation.plane(c) *= keep;
  } else {
    activation.values().array() *=
        keep.reshaped<Eigen::RowMajor>(static_cast<Eigen::Index>(activation.size()), 1);
  }
}

}  // namespace convad
