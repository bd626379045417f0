// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "confhyena/numerics/tensor.hpp"

// Differentiable operations over Tensor. Sequences are time-major: a
// sequence of L frames with C channels is a (L, C) tensor.
//
// Binary element-wise ops accept a right operand of the same shape, a
// scalar, a row vector ((C) or (1, C)) broadcast over the rows of a (R, C)
// left operand, or a column vector (R, 1) broadcast over its columns.
// add and mul also accept the broadcast operand on the left.

namespace confhyena {

// Row mask convention: true marks a padded (ignored) frame.
using PadMask = std::vector<bool>;

std::size_t count_real(const PadMask& mask);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor sigmoid(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor sine(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);

// (m, k) x (k, n) -> (m, n)
Tensor matmul(const Tensor& a, const Tensor& b);
// (m, k) x (n, k)^T -> (m, n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// x (L, in), weight (out, in), optional bias (out) -> (L, out)
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean over one axis; that axis is kept with extent 1.
Tensor mean(const Tensor& x, std::size_t axis);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
// Splits `axis` into halves [a; b] and returns a * sigmoid(b).
Tensor glu(const Tensor& x, std::size_t axis);

// Normalizes each row of x (.., C) over its last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

enum class NormMode { kTrain, kEval };

struct BatchNormStats {
  std::span<double> running_mean;
  std::span<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Per-channel normalization of x (L, C) over time. Train mode uses the
// statistics of the unpadded rows and updates `stats`; eval mode uses the
// running statistics. Padded rows of the output are zero.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats stats,
                  NormMode mode, const PadMask& mask = {});

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t left_pad = 0;
  std::size_t right_pad = 0;
  std::size_t groups = 1;
};

// x (L, Cin), weight (Cout, Cin / groups, K), optional bias (Cout).
// Output (Lout, Cout), Lout = (L + left_pad + right_pad - K) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv1dOptions opts);
std::size_t conv1d_out_len(std::size_t len, std::size_t kernel, const Conv1dOptions& opts);

// Zeroes the rows flagged in `mask`.
Tensor mask_rows(const Tensor& x, const PadMask& mask);
// Gathers rows of a (R, C) tensor; repeated indices accumulate gradient.
Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[r] = x[r, cols[r]] for a (R, C) tensor; result shape (R).
Tensor pick(const Tensor& x, std::span<const std::size_t> cols);
// Arithmetic mean of each half-open row range [first, second).
Tensor segment_mean(const Tensor& x,
                    std::span<const std::pair<std::size_t, std::size_t>> segments);

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace confhyena
