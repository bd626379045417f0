// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "confhyena/attention/attention.hpp"
#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/ops.hpp"
#include "confhyena/numerics/params.hpp"
#include "confhyena/numerics/tensor.hpp"

namespace confhyena {

enum class MixerKind { kAttention, kHyena };

struct LayerSpec {
  std::size_t model_dim = 512;
  std::size_t ffn_dim = 2048;
  std::size_t heads = 8;
  std::size_t conv_kernel = 31;
  double dropout = 0.1;
  MixerKind mixer = MixerKind::kAttention;
  // Used when mixer == kHyena; model_dim is overwritten from this spec.
  HyenaSpec hyena{};
  bool relative_positions = true;

  void validate() const;
  AttentionSpec attention_spec() const;
  HyenaSpec hyena_spec() const;
};

// Pre-norm feed-forward block: x + 0.5 * W2 swish(W1 LN(x)).
class FeedForward {
 public:
  FeedForward(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t hidden);
  Tensor forward(const Tensor& x, const RunContext& ctx, double dropout) const;
  std::size_t param_count() const;

 private:
  ParamStore* store_;
  std::size_t dim_, hidden_;
  ParamRef ln_g_, ln_b_, w1_, b1_, w2_, b2_;
};

// LN -> pointwise (d -> 2d) -> GLU -> depthwise -> BatchNorm -> swish ->
// pointwise -> residual. Padded rows are zeroed before each convolution.
class ConvModule {
 public:
  ConvModule(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t kernel);
  Tensor forward(const Tensor& x, const PadMask& mask, const RunContext& ctx,
                 double dropout) const;
  std::size_t param_count() const;

 private:
  ParamStore* store_;
  std::size_t dim_, kernel_;
  ParamRef ln_g_, ln_b_, pw1_w_, pw1_b_, dw_w_, dw_b_, bn_g_, bn_b_, bn_mean_, bn_var_, pw2_w_,
      pw2_b_;
};

/// One Conformer layer whose mixing slot holds self-attention or a
/// non-causal Hyena operator:
///   x += 0.5 FFN(x); x += Mixer(LN(x)); x = Conv(x); x += 0.5 FFN(x); LN(x)
class EncoderLayer {
 public:
  EncoderLayer(ParamStore& store, const std::string& prefix, const LayerSpec& spec);

  // x (L, d). Padded rows of the output are zero.
  Tensor forward(const Tensor& x, const PadMask& mask, const RunContext& ctx = {}) const;

  const LayerSpec& spec() const noexcept { return spec_; }
  std::size_t param_count() const;
  std::size_t mixer_param_count() const;

  const FeedForward& ffn1() const noexcept { return ffn1_; }
  const ConvModule& conv() const noexcept { return conv_; }

 private:
  ParamStore* store_;
  std::string prefix_;
  LayerSpec spec_;
  FeedForward ffn1_;
  ParamRef mix_ln_g_, mix_ln_b_;
  std::unique_ptr<MultiHeadAttention> attention_;
  std::unique_ptr<HyenaOperator> hyena_;
  ConvModule conv_;
  FeedForward ffn2_;
  ParamRef out_ln_g_, out_ln_b_;
};

// Standalone forms of the layer sub-blocks, built on a caller-owned store.
Tensor macaron_ffn(const FeedForward& ffn, const Tensor& x, const RunContext& ctx = {});
Tensor conv_module(const ConvModule& conv, const Tensor& x, const PadMask& mask,
                   const RunContext& ctx = {});
Tensor encoder_layer(const EncoderLayer& layer, const Tensor& x, const PadMask& mask,
                     const RunContext& ctx = {});

}  // namespace confhyena
