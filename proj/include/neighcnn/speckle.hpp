#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "neighcnn/tensor.hpp"

namespace neighcnn {

// Number of looks of an intensity SAR image. Always >= 1.
class LookCount {
 public:
  explicit LookCount(int looks);
  int value() const { return looks_; }
  friend auto operator<=>(const LookCount&, const LookCount&) = default;

 private:
  int looks_;
};

// SplitMix64 finalizer; a bijection on 64-bit words, used to derive
// independent per-entry seeds from a global seed.
std::uint64_t mix_seed(std::uint64_t x);

// i.i.d. Gamma(shape = L, scale = 1/L) draws: unit mean, variance 1/L.
// Marsaglia-Tsang squeeze/rejection sampler over a seeded mt19937_64.
Tensor sample_gamma_noise(const Shape& shape, LookCount looks, std::uint64_t seed);

// Clean image, its speckled observation Y = X * N, and the look count.
struct SpecklePair {
  Tensor clean;
  Tensor speckled;
  int looks = 1;
};

// Y = X * N elementwise. Clean values must lie in [0, 1], noise must be
// non-negative.
SpecklePair apply_speckle(const Tensor& clean, const Tensor& noise, LookCount looks);

// Signal-dependent additive residual eta = Y - X.
Tensor speckle_residual(const SpecklePair& pair);

// Aligned patches of size `patch_size` taken every `stride` pixels in raster
// order. With `max_patches`, a seeded subset of that size is kept (still in
// raster order).
std::vector<SpecklePair> extract_patches(const SpecklePair& pair, std::size_t patch_size,
                                         std::size_t stride,
                                         std::optional<std::size_t> max_patches = std::nullopt,
                                         std::uint64_t seed = 0);

// Procedural piecewise-smooth grayscale scene in [0, 1], quantized to 8-bit
// levels. Used as a stand-in clean corpus when no natural images are at hand.
Tensor synthesize_scene(std::size_t size, std::uint64_t seed);

}  // namespace neighcnn
