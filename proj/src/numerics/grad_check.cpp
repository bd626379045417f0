// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace {

std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_probes) {
  std::vector<std::size_t> idx;
  if (max_probes == 0 || max_probes >= n) {
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  for (std::size_t p = 0; p < max_probes; ++p) idx.push_back(p * n / max_probes);
  return idx;
}

void score(GradCheckReport& r, const GradCheckOptions& opts) {
  r.rel_error.resize(r.index.size());
  r.max_rel_error = 0.0;
  for (std::size_t i = 0; i < r.index.size(); ++i) {
    const double a = r.analytic[i], n = r.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), opts.floor});
    r.rel_error[i] = std::abs(a - n) / denom;
    if (!(r.rel_error[i] <= r.max_rel_error)) {
      r.max_rel_error = r.rel_error[i];
      r.worst = i;
    }
  }
  r.passed = std::isfinite(r.max_rel_error) && r.max_rel_error < opts.tolerance;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ConfigError("grad_check: step must be positive");
  Tensor leaf = x.clone(true);
  Tensor loss = f(leaf);
  backward(loss);
  std::vector<double> full(leaf.grad().begin(), leaf.grad().end());
  if (full.empty()) full.assign(leaf.numel(), 0.0);

  GradCheckReport r;
  r.index = probe_indices(x.numel(), opts.max_probes);
  for (std::size_t i : r.index) {
    Tensor plus = x.clone(false);
    Tensor minus = x.clone(false);
    plus.mutable_data()[i] += opts.step;
    minus.mutable_data()[i] -= opts.step;
    const double fp = f(plus).item();
    const double fm = f(minus).item();
    r.analytic.push_back(full[i]);
    r.numeric.push_back((fp - fm) / (2.0 * opts.step));
  }
  score(r, opts);
  return r;
}

GradCheckReport grad_check_leaf(const std::function<Tensor()>& loss, Tensor leaf,
                                const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ConfigError("grad_check: step must be positive");
  if (!leaf.is_leaf() || !leaf.requires_grad()) {
    throw ContractError("grad_check_leaf needs a leaf that requires a gradient");
  }
  leaf.zero_grad();
  backward(loss());
  std::vector<double> full(leaf.grad().begin(), leaf.grad().end());
  if (full.empty()) full.assign(leaf.numel(), 0.0);
  leaf.zero_grad();

  GradCheckReport r;
  r.index = probe_indices(leaf.numel(), opts.max_probes);
  auto data = leaf.mutable_data();
  for (std::size_t i : r.index) {
    const double saved = data[i];
    data[i] = saved + opts.step;
    const double fp = loss().item();
    data[i] = saved - opts.step;
    const double fm = loss().item();
    data[i] = saved;
    r.analytic.push_back(full[i]);
    r.numeric.push_back((fp - fm) / (2.0 * opts.step));
  }
  score(r, opts);
  return r;
}

}  // namespace confhyena
