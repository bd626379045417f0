// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confhyena/numerics/tensor.hpp"

namespace confhyena {

using Initializer = std::function<void(std::span<double>, std::mt19937_64&)>;

namespace init {
Initializer uniform(double bound);
Initializer normal(double stddev);
Initializer constant(double value);
// Evenly spaced values from first to last (inclusive).
Initializer linspace(double first, double last);
}  // namespace init

struct ParamRef {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return index != static_cast<std::size_t>(-1); }
};

/// Named registry of model parameters and state buffers.
///
/// Modules register shapes at construction; storage is only allocated by
/// materialize(), so a full-size model can be described (and counted)
/// without holding its weights. Each entry is seeded from the run seed and
/// its own name, so values do not depend on registration order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    bool trainable = true;
    Initializer init;
    Tensor value;
  };

  ParamRef add(std::string name, Shape shape, Initializer init);
  // Non-trainable state (batch-norm running statistics).
  ParamRef add_buffer(std::string name, Shape shape, Initializer init);

  void materialize(std::uint64_t seed);
  bool materialized() const noexcept { return materialized_; }

  const Tensor& get(ParamRef ref) const;
  std::span<double> buffer(ParamRef ref);
  std::span<const double> buffer(ParamRef ref) const;
  Tensor& find(std::string_view name);
  const Tensor& find(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }

  // Trainable scalar count, optionally restricted to names with a prefix.
  std::size_t count(std::string_view prefix = {}) const;

  void set_requires_grad(bool value);
  void zero_grad();
  // Plain gradient descent on every trainable entry: w -= lr * grad.
  void sgd_step(double learning_rate);
  double grad_norm() const;

 private:
  ParamRef add_entry(std::string name, Shape shape, Initializer init, bool trainable);
  const Entry& entry(ParamRef ref) const;

  std::vector<Entry> entries_;
  bool materialized_ = false;
  bool requires_grad_ = true;
};

// Forward-pass mode shared by every module.
struct RunContext {
  bool training = false;
  // Source of dropout masks; dropout is skipped when null.
  std::mt19937_64* rng = nullptr;
};

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace confhyena
