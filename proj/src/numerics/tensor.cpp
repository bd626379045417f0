// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/numerics/tensor.hpp"

#include <sstream>
#include <unordered_map>
#include <utility>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

using detail::Node;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data size " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a rank-2 tensor");
  return node_->data[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->is_leaf(); }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

std::span<double> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (!node_->is_leaf()) throw ContractError("mutable_data() on a non-leaf tensor");
  return node_->data;
}

void Tensor::set_requires_grad(bool value) {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (!node_->is_leaf()) throw ContractError("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = value;
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  if (!node_->requires_grad) return *this;
  return Tensor(new_leaf(node_->shape, node_->data, false));
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(new_leaf(shape(), node_->data, requires_grad));
}

void Tensor::backward() const { confhyena::backward(*this); }

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               BackwardFn backward) {
  auto node = new_leaf(std::move(shape), std::move(data), false);
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (any && backward) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (Tensor& in : inputs) node->inputs.push_back(std::move(in.node_));
  }
  return Tensor(std::move(node));
}

Tape::Tape(const Tensor& loss) : loss_(loss.node_) {
  if (!loss_) throw ContractError("backward on an undefined tensor");
  if (shape_numel(loss_->shape) != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss_->shape));
  }
  if (!loss_->requires_grad) {
    throw ContractError("backward on a loss with no differentiable history");
  }
  // Iterative post-order DFS; graphs from deep encoders overflow recursion.
  std::unordered_map<Node*, bool> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss_.get(), 0);
  visited[loss_.get()] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !visited[child]) {
        visited[child] = true;
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order_.push_back(node);
    stack.pop_back();
  }
}

std::size_t Tape::position(const Tensor& t) const {
  for (std::size_t i = 0; i < order_.size(); ++i) {
    if (order_[i] == t.node_.get()) return i;
  }
  return npos;
}

void Tape::run_backward() const {
  // Intermediate gradient buffers are created by their first consumer and
  // released right after use, so only the live frontier is allocated.
  for (Node* n : order_) {
    if (!n->is_leaf()) std::vector<double>().swap(n->grad);
  }
  if (loss_->grad.size() != 1) loss_->grad.assign(1, 0.0);
  loss_->grad[0] += 1.0;

  std::vector<GradSpan> slots;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (n->is_leaf() || n->grad.empty()) continue;
    slots.clear();
    for (auto& in : n->inputs) {
      if (!in->requires_grad) {
        slots.emplace_back();
        continue;
      }
      if (in->grad.size() != in->data.size()) in->grad.assign(in->data.size(), 0.0);
      slots.emplace_back(in->grad);
    }
    n->backward(n->grad, slots);
    // Intermediate gradients are not retained.
    std::vector<double>().swap(n->grad);
  }
}

void backward(const Tensor& loss) { Tape(loss).run_backward(); }

}  // namespace confhyena
