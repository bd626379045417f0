// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "confhyena/numerics/tensor.hpp"

namespace confhyena {

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  // Denominator floor of the relative error, so entries whose true gradient
  // is ~0 are judged on absolute error instead.
  double floor = 1e-6;
  // Probe at most this many evenly spaced elements (0 = every element).
  std::size_t max_probes = 0;
};

struct GradCheckReport {
  std::vector<std::size_t> index;
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> rel_error;
  double max_rel_error = 0.0;
  std::size_t worst = 0;
  bool passed = false;
};

/// Compares the reverse-mode gradient of the scalar function `f` at `x` with
/// central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& opts = {});

/// Same check for a leaf that `loss` closes over (a model parameter). The
/// leaf is perturbed in place and restored before returning.
GradCheckReport grad_check_leaf(const std::function<Tensor()>& loss, Tensor leaf,
                                const GradCheckOptions& opts = {});

}  // namespace confhyena
