#include "neighcnn/speckle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "neighcnn/error.hpp"

namespace neighcnn {

LookCount::LookCount(int looks) : looks_(looks) {
  if (looks < 1) {
    throw InvalidArgument("number of looks must be >= 1, got " + std::to_string(looks));
  }
}

std::uint64_t mix_seed(std::uint64_t x) {
  std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

// Marsaglia & Tsang (2000), valid for shape >= 1.
class GammaSampler {
 public:
  explicit GammaSampler(double shape) : d_(shape - 1.0 / 3.0), c_(1.0 / std::sqrt(9.0 * d_)) {}

  template <typename Engine>
  double operator()(Engine& engine) {
    for (;;) {
      double x, v;
      do {
        x = normal_(engine);
        v = 1.0 + c_ * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_(engine);
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d_ * v;
      if (std::log(u) < 0.5 * x2 + d_ * (1.0 - v + std::log(v))) return d_ * v;
    }
  }

 private:
  double d_, c_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace

Tensor sample_gamma_noise(const Shape& shape, LookCount looks, std::uint64_t seed) {
  if (shape.numel() == 0 || shape.rank() == 0) {
    throw ShapeError("sample_gamma_noise: empty shape");
  }
  std::mt19937_64 engine(seed);
  GammaSampler sampler(static_cast<double>(looks.value()));
  const double scale = 1.0 / static_cast<double>(looks.value());
  Tensor out(shape);
  for (double& v : out.data()) v = sampler(engine) * scale;
  return out;
}

SpecklePair apply_speckle(const Tensor& clean, const Tensor& noise, LookCount looks) {
  require_same_shape(clean.shape(), noise.shape(), "apply_speckle");
  for (double v : clean.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("apply_speckle: clean values must be in [0,1]");
  }
  for (double v : noise.data()) {
    if (!(v >= 0.0)) throw InvalidArgument("apply_speckle: noise must be non-negative");
  }
  SpecklePair pair{clean, Tensor(clean.shape()), looks.value()};
  auto y = pair.speckled.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = clean[i] * noise[i];
  return pair;
}

Tensor speckle_residual(const SpecklePair& pair) {
  require_same_shape(pair.clean.shape(), pair.speckled.shape(), "speckle_residual");
  Tensor eta(pair.clean.shape());
  for (std::size_t i = 0; i < eta.numel(); ++i) eta[i] = pair.speckled[i] - pair.clean[i];
  return eta;
}

namespace {

Tensor crop_plane(const Tensor& img, std::size_t y0, std::size_t x0, std::size_t size) {
  const std::size_t w = img.dim(3);
  Tensor out(Shape{1, 1, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      out[y * size + x] = img[(y0 + y) * w + x0 + x];
    }
  }
  return out;
}

}  // namespace

std::vector<SpecklePair> extract_patches(const SpecklePair& pair, std::size_t patch_size,
                                         std::size_t stride,
                                         std::optional<std::size_t> max_patches,
                                         std::uint64_t seed) {
  const Shape& s = pair.clean.shape();
  require_same_shape(s, pair.speckled.shape(), "extract_patches");
  if (s.rank() != 4 || s[0] != 1 || s[1] != 1) {
    throw ShapeError("extract_patches: expected a [1,1,H,W] image, got " + s.str());
  }
  if (patch_size == 0 || stride == 0) throw InvalidArgument("extract_patches: zero patch size or stride");
  if (patch_size > s[2] || patch_size > s[3]) {
    throw ShapeError("extract_patches: patch " + std::to_string(patch_size) +
                     " larger than image " + s.str());
  }
  std::vector<std::pair<std::size_t, std::size_t>> origins;
  for (std::size_t y = 0; y + patch_size <= s[2]; y += stride) {
    for (std::size_t x = 0; x + patch_size <= s[3]; x += stride) origins.emplace_back(y, x);
  }
  if (max_patches && *max_patches < origins.size()) {
    std::vector<std::size_t> order(origins.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 engine(seed);
    std::shuffle(order.begin(), order.end(), engine);
    order.resize(*max_patches);
    std::sort(order.begin(), order.end());
    std::vector<std::pair<std::size_t, std::size_t>> kept;
    for (std::size_t i : order) kept.push_back(origins[i]);
    origins = std::move(kept);
  }
  std::vector<SpecklePair> patches;
  patches.reserve(origins.size());
  for (auto [y, x] : origins) {
    patches.push_back({crop_plane(pair.clean, y, x, patch_size),
                       crop_plane(pair.speckled, y, x, patch_size), pair.looks});
  }
  return patches;
}

Tensor synthesize_scene(std::size_t size, std::uint64_t seed) {
  if (size < 2) throw InvalidArgument("synthesize_scene: size must be >= 2");
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto level = [&] { return 0.08 + 0.84 * unit(engine); };
  const double n = static_cast<double>(size);

  Tensor img(Shape{1, 1, size, size});
  // Background: linear ramp in a random direction.
  const double a0 = level(), a1 = level();
  const double theta = 2.0 * std::numbers::pi * unit(engine);
  const double dx = std::cos(theta), dy = std::sin(theta);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double t = 0.5 + ((x / n - 0.5) * dx + (y / n - 0.5) * dy) / std::sqrt(2.0);
      img[y * size + x] = a0 + (a1 - a0) * t;
    }
  }

  const int shapes = 3 + static_cast<int>(unit(engine) * 6.0);
  for (int s = 0; s < shapes; ++s) {
    const double kind = unit(engine);
    const double cx = unit(engine) * n, cy = unit(engine) * n;
    const double rx = (0.08 + 0.3 * unit(engine)) * n, ry = (0.08 + 0.3 * unit(engine)) * n;
    const double value = level();
    const double freq = 2.0 * std::numbers::pi * (2.0 + 6.0 * unit(engine)) / n;
    const double amp = kind > 0.75 ? 0.08 + 0.1 * unit(engine) : 0.0;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double ux = (static_cast<double>(x) - cx) / rx;
        const double uy = (static_cast<double>(y) - cy) / ry;
        const bool inside = kind < 0.45 ? (std::abs(ux) <= 1.0 && std::abs(uy) <= 1.0)
                                        : (ux * ux + uy * uy <= 1.0);
        if (!inside) continue;
        // Some shapes carry a sinusoidal texture.
        img[y * size + x] = value + amp * std::sin(freq * (static_cast<double>(x) + 0.5 * y));
      }
    }
  }

  for (double& v : img.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

}  // namespace neighcnn
