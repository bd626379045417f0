// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "confhyena/numerics/ops.hpp"
#include "confhyena/numerics/params.hpp"
#include "confhyena/numerics/tensor.hpp"

namespace confhyena {

/// Hyperparameters of one Hyena operator.
struct HyenaSpec {
  std::size_t order = 2;
  std::size_t model_dim = 512;
  // Input projection width in units of model_dim; must equal order + 1.
  std::size_t width_multiplier = 3;
  std::size_t short_kernel = 3;
  std::size_t filter_layers = 4;
  std::size_t filter_hidden = 64;
  bool causal = false;

  // Implicit filter details.
  std::size_t filter_bands = 8;
  // Positions are expressed in units of this length, so features and decay
  // do not depend on the length of the sequence being processed.
  std::size_t filter_max_len = 2048;
  bool decay_window = true;
  bool normalize_kernels = true;

  std::size_t width() const noexcept { return width_multiplier * model_dim; }
  std::size_t feature_dim() const noexcept { return 1 + 2 * filter_bands; }
  // Throws ConfigError when the fields cannot describe an operator.
  void validate() const;
};

/// Positional features for kernel positions 0..len-1: a linear channel
/// t / max_len followed by cos/sin pairs of exp(-i * 2 pi f_j t / max_len) for
/// `bands` frequencies f_j evenly spaced over [1e-4, bands - 1]. Row t only
/// depends on t, so features for a shorter length are a prefix.
Tensor positional_features(std::size_t len, std::size_t bands, std::size_t max_len);

/// Generates long-convolution kernels from positions with a small sine-MLP,
/// so the parameter count does not depend on sequence length.
class ImplicitFilter {
 public:
  ImplicitFilter(ParamStore& store, const std::string& prefix, const HyenaSpec& spec);

  // Kernels of shape (order, len, model_dim). Throws SizeError for len == 0.
  Tensor generate(std::size_t len) const;
  // Same kernels as one (len, order * model_dim) tensor, order-major columns.
  Tensor generate_flat(std::size_t len) const;

  std::size_t param_count() const;

 private:
  ParamStore* store_;
  std::string prefix_;
  HyenaSpec spec_;
  std::vector<ParamRef> weights_;
  std::vector<ParamRef> biases_;
  std::vector<ParamRef> freqs_;
  ParamRef out_weight_;
  ParamRef decay_rates_;
};

/// Depthwise convolution of x (L, C) with weight (C, 1, K) and bias (C).
/// Causal: output t reads inputs t-K+1..t. Non-causal: t-K/2..t+K/2 (K odd,
/// else ConfigError). Output length equals L.
Tensor short_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, bool causal);

/// FFT long convolution of x (L, C) with a same-shape kernel k, per channel.
/// Computes the full linear convolution z[n] = sum_tau k[tau] x[n - tau] on a
/// zero-padded transform of length >= 2L and returns z[offset .. offset + L).
Tensor long_conv(const Tensor& x, const Tensor& k, std::size_t offset);

// offset 0: y[t] = sum_{tau <= t} k[tau] x[t - tau].
Tensor long_conv_causal(const Tensor& x, const Tensor& k);
// offset floor(L/2): same-padding convolution with kernel index L/2 aligned to
// the output position, so y[t] may read every input position.
Tensor long_conv_noncausal(const Tensor& x, const Tensor& k);

/// Order-N Hyena operator: u_0..u_{N-1}, z_0 = ShortConv(W x);
/// z_{i+1} = u_i * LongConv_i(z_i); y = OutProj(z_N).
class HyenaOperator {
 public:
  HyenaOperator(ParamStore& store, const std::string& prefix, const HyenaSpec& spec);

  // x (L, d). With a pad mask, padded frames must form a suffix; the operator
  // runs on the real prefix only and padded output rows are zero.
  Tensor forward(const Tensor& x, const PadMask& mask = {}) const;

  const HyenaSpec& spec() const noexcept { return spec_; }
  const ImplicitFilter& filter() const noexcept { return filter_; }
  std::size_t param_count() const;

 private:
  ParamStore* store_;
  std::string prefix_;
  HyenaSpec spec_;
  ParamRef in_weight_, in_bias_;
  ParamRef conv_weight_, conv_bias_;
  ParamRef out_weight_, out_bias_;
  ImplicitFilter filter_;
};

// Number of leading unpadded frames; throws ContractError if padding is not a suffix.
std::size_t real_prefix_length(const PadMask& mask, std::size_t len);

}  // namespace confhyena
