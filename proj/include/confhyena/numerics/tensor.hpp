// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace confhyena {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Gradient view handed to a backward rule for one input. Empty when that
// input does not take part in differentiation.
using GradSpan = std::span<double>;

// Backward rule of a recorded operation: receives the gradient of the output
// and accumulates (+=) into the gradients of its inputs.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<const GradSpan> grad_in)>;

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles with optional reverse-mode gradient
/// tracking. A Tensor is a cheap handle; copies share the same storage.
/// Values are fixed at construction. Only the backward pass (grad buffers)
/// and explicit leaf updates (`mutable_data`) write to an existing tensor.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  // Writable storage of a leaf. Throws ContractError on non-leaf tensors.
  std::span<double> mutable_data();
  // Toggles gradient tracking on a leaf. Throws ContractError on non-leaf tensors.
  void set_requires_grad(bool value);

  // Same values, no history, no gradient.
  Tensor detach() const;
  // Deep copy of values; the copy is a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  // Runs reverse-mode differentiation from this scalar.
  void backward() const;

  std::vector<double> to_vector() const;

  // Identity of the underlying storage (for tape bookkeeping and tests).
  const void* id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);
  friend class Tape;
};

/// Creates the result of an operation. When any input requires a gradient the
/// result records `inputs` and `backward` on the graph; otherwise both are
/// dropped and the result is a constant.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
               BackwardFn backward);

/// Topologically ordered record of every differentiable operation reachable
/// from a loss. Each node appears once and after all of its inputs.
class Tape {
 public:
  explicit Tape(const Tensor& loss);

  std::size_t size() const noexcept { return order_.size(); }
  // Tape position of the node that produced `t`, or npos.
  std::size_t position(const Tensor& t) const;
  // Propagates d(loss)/d(node) from the loss back to every leaf that
  // requires a gradient. Leaf gradients accumulate across calls.
  void run_backward() const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::shared_ptr<detail::Node> loss_;
  std::vector<detail::Node*> order_;
};

/// Convenience: Tape(loss).run_backward(). Throws ContractError when the
/// loss is not a scalar or nothing in its history requires a gradient.
void backward(const Tensor& loss);

}  // namespace confhyena
