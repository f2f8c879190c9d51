#pragma once

// Position attribution: for every cell of an intermediate representation,
// the fraction of unmasked cells among the previous-layer cells that feed it.
// Thresholding that fraction gives the mask that travels with the
// representation.

#include <cstddef>

#include "convad/geometry.hpp"
#include "convad/mask.hpp"
#include "convad/tensor.hpp"

namespace convad {

/// Fraction of unmasked cells inside each convolution window. Padding cells
/// are not counted in the denominator; a window lying entirely in padding
/// has no masked inputs and gets 1.
AttributionMap position_attribution_conv(const BinaryMask& mask, const ConvGeometry& geom);

/// Same windowed fraction over a pooling window.
AttributionMap position_attribution_pool(const BinaryMask& mask, const ConvGeometry& window);

/// Nearest-neighbour upsampling feeds each output cell from exactly one
/// source cell, so the attribution is the replicated mask.
AttributionMap position_attribution_upsample(const BinaryMask& mask, std::size_t factor);

/// Mask of a channel concatenation. The external operand's positions count
/// as unmasked wherever it is unmasked when include_external is set;
/// otherwise only the first operand's mask survives.
BinaryMask position_attribution_concat(const BinaryMask& mask_a, const BinaryMask& mask_b,
                                       bool include_external);

/// Mask of a flattened (C,H,W) tensor: the spatial mask repeated per channel
/// in flat index order, as a 1 x (C*H*W) mask.
BinaryMask position_attribution_flatten(const BinaryMask& mask, std::size_t channels);

/// 1 where phi > tau (strict), 0 elsewhere.
BinaryMask threshold_mask(const AttributionMap& phi, double tau);

/// z <- z (.) mask, broadcasting a spatial mask across channels.
void apply_mask(Tensor& activation, const BinaryMask& mask);

}  // namespace convad
