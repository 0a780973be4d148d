#pragma once

#include <filesystem>

#include "neighcnn/tensor.hpp"

namespace neighcnn {

// Float raster layout (little-endian):
//   bytes 0-3   magic "SPKL"
//   bytes 4-5   version (u16, currently 1)
//   bytes 6-9   height (u32)
//   bytes 10-13 width (u32)
//   bytes 14-15 reserved, zero
//   then height*width float32 values, row-major.
inline constexpr std::uint16_t kRasterVersion = 1;

void write_raster(const std::filesystem::path& path, const Tensor& image);
Tensor read_raster(const std::filesystem::path& path);

// 8-bit grayscale PNG or binary/ASCII PGM, returned as [1,1,H,W] in [0,1]
// (value / 255). Colour PNGs are converted to gray.
Tensor read_gray8(const std::filesystem::path& path);

// Clips to [0,1] and writes round(255 * v).
void write_png8(const std::filesystem::path& path, const Tensor& image);
void write_pgm8(const std::filesystem::path& path, const Tensor& image);

// Reads PNG, PGM or SPKL raster, chosen by the file's magic bytes.
Tensor read_image(const std::filesystem::path& path);

// Rounds values through float32, the precision of the on-disk raster.
Tensor round_to_float(const Tensor& image);

}  // namespace neighcnn
