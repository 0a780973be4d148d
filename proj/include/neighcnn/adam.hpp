#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "neighcnn/autograd.hpp"
#include "neighcnn/checkpoint.hpp"

namespace neighcnn {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// One bias-corrected Adam update of `value` in place; `step` counts from 1.
void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig& config);

class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  // Updates every trainable parameter from its `grad`. Moment buffers are
  // keyed by parameter name and created on first use.
  void step(const std::vector<Parameter*>& parameters);

  long steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  // Moments go in as adam.m.<name> / adam.v.<name>, the step count as
  // metadata adam.step.
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamConfig config_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace neighcnn
