#include "neighcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "neighcnn/error.hpp"

namespace neighcnn {

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  require_same_shape(analytic.shape(), numeric.shape(), "grad_check");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

GradCheckReport grad_check(const ScalarFunction& function, const Tensor& input,
                           const GradCheckOptions& options) {
  Var x = variable(input);
  Var y = function(x);
  backward(y);
  Tensor analytic = x.grad();
  for (double& g : analytic.data()) g *= options.corrupt_analytic;

  Tensor numeric(input.shape());
  Tensor probe = input;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const double h = options.step * std::max(1.0, std::abs(input[i]));
    probe[i] = input[i] + h;
    const double up = function(constant(probe)).value().item();
    probe[i] = input[i] - h;
    const double down = function(constant(probe)).value().item();
    probe[i] = input[i];
    numeric[i] = (up - down) / (2.0 * h);
  }
  GradCheckReport report;
  report.max_relative_error = max_relative_error(analytic, numeric, options.floor);
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

GradCheckReport grad_check_parameters(const std::function<Var()>& loss,
                                      const std::vector<Parameter*>& parameters,
                                      const GradCheckOptions& options) {
  backward(loss());
  GradCheckReport report;
  for (Parameter* p : parameters) {
    if (!p->trainable) throw InvalidArgument("grad_check: parameter " + p->name + " is frozen");
    Tensor analytic = p->grad;
    for (double& g : analytic.data()) g *= options.corrupt_analytic;
    Tensor numeric(p->value.shape());
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double original = p->value[i];
      const double h = options.step * std::max(1.0, std::abs(original));
      p->value[i] = original + h;
      const double up = loss().value().item();
      p->value[i] = original - h;
      const double down = loss().value().item();
      p->value[i] = original;
      numeric[i] = (up - down) / (2.0 * h);
    }
    report.max_relative_error =
        std::max(report.max_relative_error, max_relative_error(analytic, numeric, options.floor));
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace neighcnn
