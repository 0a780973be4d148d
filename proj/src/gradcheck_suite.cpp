#include "neighcnn/gradcheck_suite.hpp"

#include <functional>
#include <random>

#include "neighcnn/losses.hpp"
#include "neighcnn/network.hpp"
#include "neighcnn/ops.hpp"
#include "neighcnn/speckle.hpp"

namespace neighcnn {

namespace {

using Rng = std::mt19937_64;

Tensor normal(const Shape& s, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Tensor t(s);
  for (double& v : t.data()) v = d(rng);
  return t;
}

Tensor uniform(const Shape& s, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(s);
  for (double& v : t.data()) v = d(rng);
  return t;
}

// Values kept at least `gap` away from zero so ReLU kinks are not straddled
// by the finite-difference step.
Tensor away_from_zero(const Shape& s, Rng& rng, double gap) {
  Tensor t = normal(s, rng);
  for (double& v : t.data()) v += v < 0 ? -gap : gap;
  return t;
}

// Reduces an op output to a scalar through a fixed random projection so that
// every output element contributes with its own weight.
ScalarFunction projected(std::function<Var(const Var&)> op, const Shape& out_shape, Rng& rng) {
  Tensor weights = normal(out_shape, rng);
  return [op = std::move(op), weights](const Var& x) { return sum(mul(op(x), constant(weights))); };
}

struct Case {
  std::string name;
  bool network = false;
  std::function<GradCheckReport(Rng&, const GradCheckOptions&)> run;
};

Case input_case(std::string name, Shape in, Shape out, std::function<Var(const Var&)> op,
                std::function<Tensor(const Shape&, Rng&)> make_input = {}) {
  return {std::move(name), false, [=](Rng& rng, const GradCheckOptions& o) {
            Tensor x = make_input ? make_input(in, rng) : normal(in, rng);
            return grad_check(projected(op, out, rng), x, o);
          }};
}

Case scalar_case(std::string name, Shape in, std::function<Var(const Var&)> f,
                 std::function<Tensor(const Shape&, Rng&)> make_input = {}) {
  return {std::move(name), false, [=](Rng& rng, const GradCheckOptions& o) {
            Tensor x = make_input ? make_input(in, rng) : normal(in, rng);
            return grad_check(f, x, o);
          }};
}

Tensor unit_interval(const Shape& s, Rng& rng) { return uniform(s, rng, 0.0, 1.0); }

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  const Shape s4{2, 3, 4, 5};

  // Binary ops, each argument in turn; the other side is a fixed constant.
  auto binary = [&](const std::string& name, Var (*op)(const Var&, const Var&)) {
    cases.push_back({name + ".lhs", false, [op, s4](Rng& rng, const GradCheckOptions& o) {
                       Tensor other = normal(s4, rng);
                       auto f = projected([op, other](const Var& x) { return op(x, constant(other)); },
                                          s4, rng);
                       return grad_check(f, normal(s4, rng), o);
                     }});
    cases.push_back({name + ".rhs", false, [op, s4](Rng& rng, const GradCheckOptions& o) {
                       Tensor other = normal(s4, rng);
                       auto f = projected([op, other](const Var& x) { return op(constant(other), x); },
                                          s4, rng);
                       return grad_check(f, normal(s4, rng), o);
                     }});
  };
  binary("add", add);
  binary("sub", sub);
  binary("mul", mul);
  cases.push_back(input_case("square", s4, s4, [](const Var& x) { return square(x); }));
  cases.push_back(input_case("scale", s4, s4, [](const Var& x) { return scale(x, -2.5); }));
  cases.push_back(input_case("add_scalar", s4, s4, [](const Var& x) { return add_scalar(x, 0.75); }));
  cases.push_back(input_case("sqrt", s4, s4, [](const Var& x) { return sqrt(x); },
                             [](const Shape& s, Rng& rng) { return uniform(s, rng, 0.2, 2.0); }));
  cases.push_back(input_case("relu", s4, s4, [](const Var& x) { return relu(x); },
                             [](const Shape& s, Rng& rng) { return away_from_zero(s, rng, 0.05); }));
  cases.push_back(scalar_case("sum.all", s4, [](const Var& x) { return sum(square(x)); }));
  cases.push_back(input_case("sum.axes12", s4, Shape{2, 5},
                             [](const Var& x) { return sum(x, std::vector<std::size_t>{1, 2}); }));
  cases.push_back(scalar_case("mean.all", s4, [](const Var& x) { return mean(square(x)); }));
  cases.push_back(input_case("mean.axes03", s4, Shape{3, 4},
                             [](const Var& x) { return mean(x, std::vector<std::size_t>{0, 3}); }));

  // Convolution: input, kernel and bias; same padding and a strided variant.
  struct ConvSpec {
    const char* name;
    std::size_t in_hw, pad, stride, out_hw;
  };
  for (ConvSpec spec : {ConvSpec{"conv2d.same", 8, 1, 1, 8}, ConvSpec{"conv2d.stride2", 7, 0, 2, 3}}) {
    const Shape in{2, 3, spec.in_hw, spec.in_hw}, ker{4, 3, 3, 3}, bias{4};
    const Shape out{2, 4, spec.out_hw, spec.out_hw};
    const std::size_t pad = spec.pad, stride = spec.stride;
    const std::string base = spec.name;
    cases.push_back({base + ".input", false, [=](Rng& rng, const GradCheckOptions& o) {
                       Tensor k = normal(ker, rng), b = normal(bias, rng);
                       auto f = projected(
                           [=](const Var& x) { return conv2d(x, constant(k), constant(b), pad, stride); },
                           out, rng);
                       return grad_check(f, normal(in, rng), o);
                     }});
    cases.push_back({base + ".kernel", false, [=](Rng& rng, const GradCheckOptions& o) {
                       Tensor x = normal(in, rng), b = normal(bias, rng);
                       auto f = projected(
                           [=](const Var& k) { return conv2d(constant(x), k, constant(b), pad, stride); },
                           out, rng);
                       return grad_check(f, normal(ker, rng), o);
                     }});
    cases.push_back({base + ".bias", false, [=](Rng& rng, const GradCheckOptions& o) {
                       Tensor x = normal(in, rng), k = normal(ker, rng);
                       auto f = projected(
                           [=](const Var& b) { return conv2d(constant(x), constant(k), b, pad, stride); },
                           out, rng);
                       return grad_check(f, normal(bias, rng), o);
                     }});
  }

  const Shape img{2, 2, 8, 8};
  cases.push_back(input_case("crop", img, Shape{2, 2, 5, 4},
                             [](const Var& x) { return crop(x, 2, 3, 5, 4); }));
  cases.push_back(input_case("avg_pool2x2", img, Shape{2, 2, 4, 4},
                             [](const Var& x) { return avg_pool2x2(x); }));
  cases.push_back(input_case("max_pool2x2", img, Shape{2, 2, 4, 4},
                             [](const Var& x) { return max_pool2x2(x); }));

  // Batch normalization in both modes, w.r.t. input, scale and shift.
  const Shape bn_in{4, 3, 4, 4}, ch{3};
  for (Mode mode : {Mode::train, Mode::infer}) {
    const std::string base = mode == Mode::train ? "batch_norm.train" : "batch_norm.infer";
    enum Which { input, gamma, beta };
    for (Which which : {input, gamma, beta}) {
      const char* suffix = which == input ? ".input" : which == gamma ? ".gamma" : ".beta";
      cases.push_back({base + suffix, false, [=](Rng& rng, const GradCheckOptions& o) {
                         Tensor x = normal(bn_in, rng), g = uniform(ch, rng, 0.5, 1.5),
                                b = normal(ch, rng);
                         Tensor rm = normal(ch, rng), rv = uniform(ch, rng, 0.5, 2.0);
                         auto op = [=](const Var& v) mutable {
                           // Fresh running buffers per call keep the function pure.
                           Tensor m = rm, r = rv;
                           const Var xx = which == input ? v : constant(x);
                           const Var gg = which == gamma ? v : constant(g);
                           const Var bb = which == beta ? v : constant(b);
                           return batch_norm(xx, gg, bb, m, r, mode);
                         };
                         auto f = projected(op, bn_in, rng);
                         const Tensor& start = which == input ? x : which == gamma ? g : b;
                         return grad_check(f, start, o);
                       }});
    }
  }

  // Loss components w.r.t. the prediction, with a fixed clean target.
  const Shape batch{2, 1, 8, 8};
  auto loss_case = [&](const std::string& name,
                       std::function<Var(const Var&, const Var&, const FeatureExtractor&)> loss) {
    cases.push_back({name, false, [=](Rng& rng, const GradCheckOptions& o) {
                       const FeatureExtractor ex = FeatureExtractor::tiny_random(3, rng());
                       Tensor clean = unit_interval(batch, rng);
                       auto f = [=](const Var& p) { return loss(p, constant(clean), ex); };
                       return grad_check(f, unit_interval(batch, rng), o);
                     }});
  };
  loss_case("loss.euclidean",
            [](const Var& p, const Var& c, const FeatureExtractor&) { return euclidean_loss(p, c); });
  loss_case("loss.neighbourhood",
            [](const Var& p, const Var&, const FeatureExtractor&) { return neighbourhood_loss(p); });
  loss_case("loss.perceptual", [](const Var& p, const Var& c, const FeatureExtractor& ex) {
    return perceptual_loss(p, c, ex, 3);
  });
  loss_case("loss.total", [](const Var& p, const Var& c, const FeatureExtractor& ex) {
    // Larger weights than the defaults so every term moves the gradient.
    LossConfig cfg;
    cfg.alpha = 0.3;
    cfg.beta = 0.2;
    return total_loss(p, c, cfg, ex).total;
  });

  // Miniature network end to end: every trainable parameter through the
  // total loss in train mode.
  cases.push_back({"network.end_to_end", true, [batch](Rng& rng, const GradCheckOptions& o) {
                     Model model = Model::build({4, 4, 3}, rng());
                     // Nonzero BN shifts and biases move activations off the ReLU kinks.
                     for (Parameter& p : model.parameters()) {
                       if (p.trainable && p.value.shape().rank() == 1) {
                         p.value = normal(p.value.shape(), rng, 0.1);
                       }
                     }
                     const FeatureExtractor ex = FeatureExtractor::tiny_random(2, rng());
                     LossConfig cfg;
                     cfg.alpha = 0.3;
                     cfg.beta = 0.2;
                     cfg.blocks = 2;
                     const Tensor clean = unit_interval(batch, rng);
                     const Tensor speckled =
                         apply_speckle(clean, sample_gamma_noise(batch, LookCount(4), rng()),
                                       LookCount(4))
                             .speckled;
                     auto loss = [&]() {
                       ForwardResult r = model.forward(speckled, Mode::train);
                       return total_loss(r.despeckled, constant(clean), cfg, ex).total;
                     };
                     return grad_check_parameters(loss, model.trainable_parameters(), o);
                   }});
  return cases;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : build_cases()) names.push_back(c.name);
  return names;
}

std::vector<SuiteResult> run_gradcheck_suite(const SuiteOptions& options,
                                             const std::string& filter) {
  const auto cases = build_cases();
  std::vector<SuiteResult> results;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradCheckOptions o;
    o.tolerance = c.network ? options.network_tolerance : options.tolerance;
    o.corrupt_analytic = options.corrupt_analytic;
    Rng rng(mix_seed(options.seed + i));
    results.push_back({c.name, o.tolerance, c.run(rng, o)});
  }
  return results;
}

}  // namespace neighcnn
