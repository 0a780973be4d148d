#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "neighcnn/tensor.hpp"

namespace neighcnn {

// A named learnable (or frozen) array. Gradients land in `grad` after
// backward(); non-trainable parameters are skipped by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_, bool trainable_ = true);

  void zero_grad();
};

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;
  // Leaf bound to a parameter; its gradient is written back after backward().
  Parameter* parameter = nullptr;

  // Adds `g` into this node's grad, allocating it on first use.
  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

}  // namespace detail

// Handle to a value recorded on the autograd graph. Cheap to copy; the
// underlying tensor is never mutated once produced.
class Var {
 public:
  Var() = default;

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  // Gradient of the last backward() pass w.r.t. this leaf.
  const Tensor& grad() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Value that never receives a gradient.
Var constant(Tensor value);

// Free leaf whose gradient is kept on the Var itself.
Var variable(Tensor value);

// Leaf bound to a parameter. A frozen (non-trainable) parameter is recorded as
// a constant.
Var parameter(Parameter& p);

// Builds an interior node. `backward` receives the output node and must push
// gradients into the parents via Node::accumulate. Outside a gradient-enabled
// scope, or when no parent requires a gradient, nothing is recorded.
Var make_result(Tensor value, const char* op, std::vector<Var> inputs,
                std::function<void(detail::Node&)> backward);

// Reverse-mode sweep from a scalar loss. Gradients of parameters reached from
// `loss` are overwritten, or summed into the existing gradient when
// `accumulate` is set. A graph can be swept only once.
void backward(const Var& loss, bool accumulate = false);

// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

// Disables graph recording for its lifetime (inference, evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace neighcnn
