#include "neighcnn/autograd.hpp"

#include <unordered_set>

#include "neighcnn/error.hpp"

namespace neighcnn {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Tensor value, bool requires_grad) {
  require_finite(value, "leaf");
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Parameter::Parameter(std::string name_, Tensor value_, bool trainable_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), trainable(trainable_) {}

void Parameter::zero_grad() { grad = Tensor(value.shape()); }

namespace detail {

Tensor& Node::grad_buffer() {
  if (!has_grad) {
    grad = Tensor(value.shape());
    has_grad = true;
  }
  return grad;
}

void Node::accumulate(const Tensor& g) {
  require_same_shape(g.shape(), value.shape(), "gradient accumulation");
  Tensor& buf = grad_buffer();
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

const Tensor& Var::grad() const {
  if (!node_->has_grad) {
    throw GraphError("no gradient recorded for this value");
  }
  return node_->grad;
}

Var constant(Tensor value) { return Var(make_leaf(std::move(value), false)); }

Var variable(Tensor value) { return Var(make_leaf(std::move(value), true)); }

Var parameter(Parameter& p) {
  auto node = make_leaf(p.value, p.trainable);
  if (p.trainable) node->parameter = &p;
  return Var(std::move(node));
}

Var make_result(Tensor value, const char* op, std::vector<Var> inputs,
                std::function<void(detail::Node&)> backward) {
  require_finite(value, op);
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const Var& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (Var& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& loss, bool accumulate) {
  const auto& root = loss.node();
  if (!root) throw GraphError("backward on an empty value");
  if (root->value.numel() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + root->value.shape().str());
  }
  if (root->consumed) {
    throw GraphError("backward already ran on this graph; record it again");
  }
  if (!root->requires_grad) {
    throw GraphError("loss does not depend on any differentiable value");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    node->has_grad = false;
    node->grad = Tensor();
  }
  root->grad_buffer()[0] = 1.0;

  std::vector<Parameter*> touched;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->has_grad) continue;
    if (node->backward_fn) {
      node->backward_fn(*node);
      require_finite(node->grad, node->op);
      // Interior gradients are no longer needed.
      node->grad = Tensor();
      node->has_grad = false;
    } else if (node->parameter) {
      touched.push_back(node->parameter);
    }
  }

  if (!accumulate) {
    for (Parameter* p : touched) p->zero_grad();
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->parameter && node->has_grad) {
      auto dst = node->parameter->grad.data();
      auto src = node->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  root->consumed = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace neighcnn
