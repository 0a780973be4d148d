#include "neighcnn/losses.hpp"

#include <sstream>

#include "neighcnn/error.hpp"
#include "neighcnn/ops.hpp"

namespace neighcnn {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
  if (!(beta >= 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in [0, 1)");
  if (blocks < 0) throw InvalidArgument("perceptual block count must be >= 0");
  if (!enabled.any()) throw InvalidArgument("at least one loss component must be enabled");
}

std::string LossConfig::label() const {
  std::string out;
  auto append = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  append(enabled.euclidean, "eu");
  append(enabled.perceptual, "per");
  append(enabled.neighbourhood, "n");
  return out;
}

LossComponents parse_components(const std::string& text) {
  LossComponents c{false, false, false};
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "eu" || part == "euclidean") {
      c.euclidean = true;
    } else if (part == "per" || part == "perceptual") {
      c.perceptual = true;
    } else if (part == "n" || part == "neighbourhood" || part == "neighborhood") {
      c.neighbourhood = true;
    } else if (part == "all") {
      c = LossComponents{};
    } else {
      throw InvalidArgument("unknown loss component '" + part + "'");
    }
  }
  if (!c.any()) throw InvalidArgument("no loss components in '" + text + "'");
  return c;
}

namespace {

const Axes kPerImage = std::vector<std::size_t>{1, 2, 3};

void require_image_batch(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + ": expected [B,C,H,W], got " + s.str());
}

// sqrt of the per-image sum of squared differences between two windows.
Var root_sum_squares(const Var& a, const Var& b) { return sqrt(sum(square(sub(a, b)), kPerImage)); }

}  // namespace

Var euclidean_loss(const Var& predicted, const Var& clean) {
  require_same_shape(predicted.shape(), clean.shape(), "euclidean_loss");
  require_image_batch(predicted.shape(), "euclidean_loss");
  return mean(mean(square(sub(predicted, clean)), kPerImage));
}

Var neighbourhood_loss(const Var& predicted) {
  const Shape& s = predicted.shape();
  require_image_batch(s, "neighbourhood_loss");
  if (s[2] < 2 || s[3] < 2) throw ShapeError("neighbourhood_loss needs at least 2x2 images, got " + s.str());
  const std::size_t m = s[2], n = s[3];
  // C = (i, j), S = (i+1, j), E = (i, j+1), SE = (i+1, j+1).
  Var vertical = root_sum_squares(crop(predicted, 1, 0, m - 1, n), crop(predicted, 0, 0, m - 1, n));
  Var horizontal = root_sum_squares(crop(predicted, 0, 1, m, n - 1), crop(predicted, 0, 0, m, n - 1));
  Var diagonal =
      root_sum_squares(crop(predicted, 1, 1, m - 1, n - 1), crop(predicted, 0, 0, m - 1, n - 1));
  Var anti =
      root_sum_squares(crop(predicted, 1, 0, m - 1, n - 1), crop(predicted, 0, 1, m - 1, n - 1));
  return mean(add(add(vertical, horizontal), add(diagonal, anti)));
}

Var perceptual_loss(const Var& predicted, const Var& clean, const FeatureExtractor& extractor,
                    int blocks) {
  require_same_shape(predicted.shape(), clean.shape(), "perceptual_loss");
  if (blocks < 0) throw InvalidArgument("perceptual_loss: blocks must be >= 0");
  const auto pred_features = extractor.extract(predicted, blocks);
  std::vector<Var> clean_features;
  {
    NoGradGuard no_grad;
    clean_features = extractor.extract(constant(clean.value()), blocks);
  }
  const double rho = static_cast<double>((1 << (blocks + 1)) - 1);
  Var total;
  for (std::size_t k = 0; k < pred_features.size(); ++k) {
    const double weight = static_cast<double>(1 << k) / rho;
    Var term = scale(mean(mean(square(sub(pred_features[k], clean_features[k])), kPerImage)), weight);
    total = k == 0 ? term : add(total, term);
  }
  return total;
}

LossValue total_loss(const Var& predicted, const Var& clean, const LossConfig& config,
                     const FeatureExtractor& extractor) {
  config.validate();
  LossValue out;
  std::vector<Var> terms;
  if (config.enabled.euclidean) {
    Var eu = euclidean_loss(predicted, clean);
    out.euclidean = eu.value().item();
    terms.push_back(eu);
  }
  if (config.enabled.perceptual) {
    Var per = perceptual_loss(predicted, clean, extractor, config.blocks);
    out.perceptual = per.value().item();
    terms.push_back(scale(per, config.alpha));
  }
  if (config.enabled.neighbourhood) {
    Var nb = neighbourhood_loss(predicted);
    out.neighbourhood = nb.value().item();
    terms.push_back(scale(nb, config.beta));
  }
  out.total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
  return out;
}

}  // namespace neighcnn
