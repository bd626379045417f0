// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <string>

#include "confhyena/numerics/ops.hpp"
#include "confhyena/numerics/params.hpp"
#include "confhyena/numerics/tensor.hpp"

namespace confhyena {

struct AttentionSpec {
  std::size_t model_dim = 512;
  std::size_t heads = 8;
  // Adds the relative sinusoidal position term with learned content and
  // position biases (self-attention only).
  bool relative = true;

  std::size_t head_dim() const noexcept { return model_dim / heads; }
  void validate() const;
};

/// Sinusoidal encodings of relative distances for a length-`len` sequence:
/// row r holds the encoding of distance (r - len + 1), i.e. i - j for a
/// query i and key j is found at row i - j + len - 1. Shape (2 len - 1, dim).
Tensor relative_position_table(std::size_t len, std::size_t dim);

struct AttentionCoreOptions {
  std::size_t heads = 1;
  bool causal = false;
  // Padded keys (true entries) receive no attention weight.
  PadMask key_mask;
};

/// Multi-head scaled dot-product attention without projections.
///
/// For each head h and query i, key j:
///   s[i, j] = ((q_i + u) . k_j + (q_i + v) . p[i - j + L - 1]) / sqrt(d_k)
/// followed by a softmax over allowed keys and a weighted sum of values.
/// `pos`, `bias_u` and `bias_v` are optional (relative term off when `pos` is
/// undefined; then Lq may differ from Lk). Masked logits get a large negative
/// additive bias. Throws ContractError if a query row has no allowed key.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& pos,
                      const Tensor& bias_u, const Tensor& bias_v,
                      const AttentionCoreOptions& opts);

/// Attention with learned projections. Self-attention may use the relative
/// position term; cross-attention never does.
class MultiHeadAttention {
 public:
  MultiHeadAttention(ParamStore& store, const std::string& prefix, const AttentionSpec& spec);

  // x (L, d). Output rows at padded positions are zero.
  Tensor self_attention(const Tensor& x, const PadMask& mask = {}, bool causal = false) const;
  // query (Lq, d) attends over memory (Lk, d).
  Tensor cross_attention(const Tensor& query, const Tensor& memory,
                         const PadMask& memory_mask = {}) const;

  const AttentionSpec& spec() const noexcept { return spec_; }
  std::size_t param_count() const;

 private:
  Tensor project_out(const Tensor& ctx) const;

  ParamStore* store_;
  std::string prefix_;
  AttentionSpec spec_;
  ParamRef wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
  ParamRef w_pos_, bias_u_, bias_v_;
};

}  // namespace confhyena
