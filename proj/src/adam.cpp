#include "neighcnn/adam.hpp"

#include <cmath>

#include "neighcnn/error.hpp"

namespace neighcnn {

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("Adam epsilon must be positive");
}

void adam_update(std::span<double> value, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, long step, const AdamConfig& c) {
  if (grad.size() != value.size() || m.size() != value.size() || v.size() != value.size()) {
    throw ShapeError("adam_update: state size does not match the parameter");
  }
  if (step < 1) throw InvalidArgument("adam_update: step counts from 1");
  const double t = static_cast<double>(step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    value[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(const std::vector<Parameter*>& parameters) {
  ++step_;
  for (Parameter* p : parameters) {
    if (!p->trainable) continue;
    require_same_shape(p->grad.shape(), p->value.shape(), "adam step");
    auto [it, fresh] = moments_.try_emplace(p->name);
    if (fresh) {
      it->second.m = Tensor(p->value.shape());
      it->second.v = Tensor(p->value.shape());
    }
    require_same_shape(it->second.m.shape(), p->value.shape(), "adam state");
    adam_update(p->value.data(), p->grad.data(), it->second.m.data(), it->second.v.data(), step_,
                config_);
  }
}

void Adam::save(Checkpoint& ckpt) const {
  ckpt.metadata["adam.step"] = std::to_string(step_);
  for (const auto& [name, mom] : moments_) {
    ckpt.put("adam.m." + name, mom.m);
    ckpt.put("adam.v." + name, mom.v);
  }
}

void Adam::load(const Checkpoint& ckpt) {
  step_ = std::stol(ckpt.meta_or("adam.step", "0"));
  moments_.clear();
  const std::string prefix = "adam.m.";
  for (const auto& t : ckpt.tensors()) {
    if (t.name.rfind(prefix, 0) != 0) continue;
    const std::string name = t.name.substr(prefix.size());
    moments_[name] = Moments{t.tensor, ckpt.get("adam.v." + name)};
  }
}

}  // namespace neighcnn
