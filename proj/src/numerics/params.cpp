// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/numerics/params.hpp"

#include <cmath>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace init {

Initializer uniform(double bound) {
  return [bound](std::span<double> out, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : out) v = dist(rng);
  };
}

Initializer normal(double stddev) {
  return [stddev](std::span<double> out, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : out) v = dist(rng);
  };
}

Initializer constant(double value) {
  return [value](std::span<double> out, std::mt19937_64&) {
    for (double& v : out) v = value;
  };
}

Initializer linspace(double first, double last) {
  return [first, last](std::span<double> out, std::mt19937_64&) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = n == 1 ? first
                      : first + (last - first) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
  };
}

}  // namespace init

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ParamRef ParamStore::add(std::string name, Shape shape, Initializer init) {
  return add_entry(std::move(name), std::move(shape), std::move(init), true);
}

ParamRef ParamStore::add_buffer(std::string name, Shape shape, Initializer init) {
  return add_entry(std::move(name), std::move(shape), std::move(init), false);
}

ParamRef ParamStore::add_entry(std::string name, Shape shape, Initializer init, bool trainable) {
  if (materialized_) throw ContractError("cannot register '" + name + "' after materialize()");
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back(Entry{std::move(name), std::move(shape), trainable, std::move(init), {}});
  return ParamRef{entries_.size() - 1};
}

void ParamStore::materialize(std::uint64_t seed) {
  for (Entry& e : entries_) {
    std::vector<double> data(shape_numel(e.shape), 0.0);
    std::mt19937_64 rng(fnv1a(e.name, seed ^ 0x9e3779b97f4a7c15ULL));
    if (e.init) e.init(data, rng);
    e.value = Tensor::from_data(e.shape, std::move(data), e.trainable && requires_grad_);
  }
  materialized_ = true;
}

const ParamStore::Entry& ParamStore::entry(ParamRef ref) const {
  if (!ref.valid() || ref.index >= entries_.size()) throw ContractError("invalid parameter ref");
  const Entry& e = entries_[ref.index];
  if (!materialized_) throw ContractError("parameter '" + e.name + "' read before materialize()");
  return e;
}

const Tensor& ParamStore::get(ParamRef ref) const { return entry(ref).value; }

std::span<double> ParamStore::buffer(ParamRef ref) {
  entry(ref);
  return entries_[ref.index].value.mutable_data();
}

std::span<const double> ParamStore::buffer(ParamRef ref) const { return entry(ref).value.data(); }

bool ParamStore::contains(std::string_view name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return true;
  return false;
}

Tensor& ParamStore::find(std::string_view name) {
  for (Entry& e : entries_)
    if (e.name == name) return e.value;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamStore::find(std::string_view name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e.value;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

std::size_t ParamStore::count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const Entry& e : entries_) {
    if (e.trainable && e.name.starts_with(prefix)) n += shape_numel(e.shape);
  }
  return n;
}

void ParamStore::set_requires_grad(bool value) {
  requires_grad_ = value;
  if (!materialized_) return;
  for (Entry& e : entries_)
    if (e.trainable) e.value.set_requires_grad(value);
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_)
    if (e.value.defined()) e.value.zero_grad();
}

void ParamStore::sgd_step(double learning_rate) {
  for (Entry& e : entries_) {
    if (!e.trainable || !e.value.has_grad()) continue;
    auto w = e.value.mutable_data();
    auto g = e.value.grad();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const Entry& e : entries_) {
    if (!e.trainable || !e.value.has_grad()) continue;
    for (double g : e.value.grad()) s += g * g;
  }
  return std::sqrt(s);
}

}  // namespace confhyena
