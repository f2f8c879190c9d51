#pragma once

#include <filesystem>
#include <string>

#include "convad/mask.hpp"
#include "convad/tensor.hpp"

namespace convad {

/// Reads PNG, PPM (P3/P6) or PGM (P2/P5) into a (C,H,W) tensor in [0,1].
Tensor read_image(const std::filesystem::path& path);

/// Writes a (1,H,W) or (3,H,W) tensor in [0,1] as binary PGM/PPM.
void write_pnm(const std::filesystem::path& path, const Tensor& image);

/// Nearest-neighbour resize of a (C,H,W) image.
Tensor resize_nearest(const Tensor& image, std::size_t rows, std::size_t cols);

/// 8-bit PGM: 0 -> masked, 255 -> unmasked, cells >= 128 become 1.
BinaryMask read_mask_pgm(const std::filesystem::path& path);
std::string mask_to_pgm(const BinaryMask& mask);
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask);

/// Run-length JSON: {"height":H,"width":W,"start":0|1,"runs":[n0,n1,...]},
/// alternating runs in row-major order beginning with value `start`.
BinaryMask parse_mask_rle(const std::string& json_text);
std::string mask_to_rle(const BinaryMask& mask);

/// Inline RLE JSON (argument starting with '{'), a .json file, or a PGM file.
BinaryMask load_mask(const std::string& argument);

}  // namespace convad
