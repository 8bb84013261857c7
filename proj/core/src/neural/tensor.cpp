#include "beamkit/neural/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_set>

#include "beamkit/error.hpp"

namespace beamkit::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidArgument("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

std::shared_ptr<Node> leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw InvalidArgument("tensor of shape " + shape_string(shape) + " given " +
                          std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(leaf(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = numel(shape);
  return Tensor(leaf(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(leaf(std::move(shape), std::move(values), true));
}

int Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw InvalidArgument("axis out of range for shape " + shape_string(shape()));
  return node_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (size() != 1) throw InvalidArgument("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

void Tensor::backward() const {
  if (size() != 1) throw InvalidArgument("backward() requires a scalar tensor");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

Tensor make_result(std::string op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> backward) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericError("op '" + op + "' produced a non-finite value (output shape " +
                         shape_string(shape) + ")");
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->inputs.push_back(t.shared());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace beamkit::nn
