#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "neighcnn/autograd.hpp"

namespace neighcnn {

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var square(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

// Backward uses 1 / (2 sqrt(x) + kSqrtGradGuard) so a zero argument yields a
// finite gradient.
inline constexpr double kSqrtGradGuard = 1e-12;
Var sqrt(const Var& a);

// Subgradient at exactly 0 is 0.
Var relu(const Var& a);

// ---- reductions ------------------------------------------------------------

// Reduction axes; std::nullopt reduces everything to a scalar. Reduced axes
// are removed from the result shape.
using Axes = std::optional<std::vector<std::size_t>>;

Var sum(const Var& a, const Axes& axes = std::nullopt);
Var mean(const Var& a, const Axes& axes = std::nullopt);

// ---- spatial ---------------------------------------------------------------

// Cross-correlation with zero padding. input [B,Cin,H,W], kernel
// [Cout,Cin,k,k] with odd k, bias [Cout].
Var conv2d(const Var& input, const Var& kernel, const Var& bias, std::size_t padding,
           std::size_t stride = 1);

// Window [y0, y0+h) x [x0, x0+w) of the last two axes of a rank-4 tensor.
Var crop(const Var& input, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

// Non-overlapping 2x2 pooling; spatial extents must be even.
Var avg_pool2x2(const Var& input);
Var max_pool2x2(const Var& input);

// ---- batch normalization ---------------------------------------------------

enum class Mode { train, infer };

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Per-channel normalization of [B,C,H,W]. Train mode uses batch statistics
// (biased variance) and folds them into the running estimates with
// running = (1 - momentum) * running + momentum * batch, using the unbiased
// variance for the running variance. Infer mode reads the running estimates.
Var batch_norm(const Var& input, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, Mode mode, const BatchNormOptions& options = {});

}  // namespace neighcnn
