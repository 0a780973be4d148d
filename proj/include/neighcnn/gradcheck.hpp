#pragma once

#include <functional>
#include <string>
#include <vector>

#include "neighcnn/autograd.hpp"

namespace neighcnn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  // Central-difference step; the step for element i is step * max(1, |x_i|).
  double step = 1e-5;
  double tolerance = 1e-4;
  // Relative errors are taken against max(|analytic|, |numeric|, floor) so
  // gradients that vanish analytically are compared in absolute terms.
  double floor = 1e-6;
  // Negative-control hook: multiply the analytic gradient by this factor.
  double corrupt_analytic = 1.0;
};

using ScalarFunction = std::function<Var(const Var&)>;

// Compares the reverse-mode gradient of `function` at `input` against central
// finite differences. `function` must be pure and return a scalar.
GradCheckReport grad_check(const ScalarFunction& function, const Tensor& input,
                           const GradCheckOptions& options = {});

// Same comparison for a set of parameters that `loss` reads on every call.
GradCheckReport grad_check_parameters(const std::function<Var()>& loss,
                                      const std::vector<Parameter*>& parameters,
                                      const GradCheckOptions& options = {});

// Elementwise relative error between two gradient tensors under `floor`.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor);

}  // namespace neighcnn
