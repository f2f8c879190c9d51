#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "convad/eval.hpp"
#include "convad/mask.hpp"
#include "convad/model.hpp"
#include "convad/random.hpp"

namespace convad {

/// Fixed-weight detector on 3x16x16 images: two 1x1 convolutions turn each
/// pixel's mean intensity into a triangle response peaking at 0.75 (zero
/// below 0.6 and above 0.9), 8x8 average pooling gives quadrant scores, and a
/// dense layer scores each quadrant against the other three.
/// Classes: none, top_left, top_right, bottom_left, bottom_right.
Model bright_square_model();

inline constexpr std::size_t kSquareSide = 16;

/// Dark noise in [0, 0.35) with a 6x6 square of tone 0.75 +- 0.03 placed
/// inside `quadrant` (0..3, row-major), or no square when quadrant == 4, plus
/// six white specks outside the square.
/// Returns the image and the square's pixel mask.
struct SquareImage {
  Tensor image;
  BinaryMask square;
  std::size_t label = 0;  // quadrant + 1, or 0 without a square
};
SquareImage square_image(Rng& rng, std::size_t quadrant);

/// `count` square images cycling through the four quadrants.
std::vector<LabeledImage> square_dataset(std::uint64_t seed, std::size_t count,
                                         bool include_empty = false);

/// Writes images as PPM plus a labels.csv (file,label).
void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& images,
                   const ModelGraph& graph);

/// Same input and labels as the detector, but every output is constant.
Model constant_model();

enum class Architecture { conv_only, conv_pool, conv_upsample, conv_concat, conv_dense, mixed };

inline constexpr Architecture kAllArchitectures[] = {
    Architecture::conv_only,   Architecture::conv_pool,  Architecture::conv_upsample,
    Architecture::conv_concat, Architecture::conv_dense, Architecture::mixed};

std::string_view to_string(Architecture arch);

/// Small network of the given family with seeded normal weights.
Model random_model(Architecture arch, std::uint64_t seed);

/// Uniform [lo, hi) tensor.
Tensor random_tensor(const Shape& shape, Rng& rng, float lo = -1.0f, float hi = 1.0f);

/// Each cell is 1 with probability `density`.
BinaryMask random_mask(std::size_t rows, std::size_t cols, Rng& rng, double density = 0.5);

}  // namespace convad
