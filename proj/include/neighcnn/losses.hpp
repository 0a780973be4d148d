#pragma once

#include <optional>
#include <string>

#include "neighcnn/autograd.hpp"
#include "neighcnn/network.hpp"

namespace neighcnn {

struct LossComponents {
  bool euclidean = true;
  bool perceptual = true;
  bool neighbourhood = true;

  bool any() const { return euclidean || perceptual || neighbourhood; }
  friend bool operator==(const LossComponents&, const LossComponents&) = default;
};

struct LossConfig {
  double alpha = 1e-4;  // perceptual weight
  double beta = 1e-3;   // neighbourhood weight
  int blocks = 3;       // feature blocks used by the perceptual term
  LossComponents enabled;

  void validate() const;

  // Short label such as "eu+per+n"; inverse of parse_components.
  std::string label() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

// Parses "eu", "per", "n" joined by '+' (aliases: euclidean, perceptual,
// neighbourhood, neighborhood, all).
LossComponents parse_components(const std::string& text);

// Mean over pixels of the squared difference, averaged over the batch.
Var euclidean_loss(const Var& predicted, const Var& clean);

// Per image: sqrt(sum of squared vertical differences) + horizontal + main
// diagonal + anti-diagonal, each sum over in-bounds pairs only; averaged over
// the batch.
Var neighbourhood_loss(const Var& predicted);

// (1 / (2^(n+1) - 1)) * sum_k 2^k * mean((V_k(pred) - V_k(clean))^2) with
// each block's mean taken over its own channel x height x width extent.
Var perceptual_loss(const Var& predicted, const Var& clean, const FeatureExtractor& extractor,
                    int blocks);

struct LossValue {
  Var total;
  std::optional<double> euclidean;
  std::optional<double> perceptual;
  std::optional<double> neighbourhood;
};

// L = L_eu + alpha * L_per + beta * L_n over the enabled components.
LossValue total_loss(const Var& predicted, const Var& clean, const LossConfig& config,
                     const FeatureExtractor& extractor);

}  // namespace neighcnn
