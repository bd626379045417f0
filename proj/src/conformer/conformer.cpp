// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/conformer/conformer.hpp"

#include <cmath>
#include <string>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor maybe_dropout(const Tensor& x, const RunContext& ctx, double rate) {
  if (!ctx.training || ctx.rng == nullptr || rate <= 0.0) return x;
  return dropout(x, rate, *ctx.rng);
}

}  // namespace

void LayerSpec::validate() const {
  if (model_dim == 0 || ffn_dim == 0) throw ConfigError("layer sizes must be positive");
  if (conv_kernel == 0 || conv_kernel % 2 == 0) {
    throw ConfigError("conv_kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (mixer == MixerKind::kAttention) attention_spec().validate();
  else hyena_spec().validate();
}

AttentionSpec LayerSpec::attention_spec() const {
  AttentionSpec a;
  a.model_dim = model_dim;
  a.heads = heads;
  a.relative = relative_positions;
  return a;
}

HyenaSpec LayerSpec::hyena_spec() const {
  HyenaSpec h = hyena;
  h.model_dim = model_dim;
  return h;
}

FeedForward::FeedForward(ParamStore& store, const std::string& prefix, std::size_t dim,
                         std::size_t hidden)
    : store_(&store), dim_(dim), hidden_(hidden) {
  ln_g_ = store.add(prefix + ".norm.weight", {dim}, init::constant(1.0));
  ln_b_ = store.add(prefix + ".norm.bias", {dim}, init::constant(0.0));
  w1_ = store.add(prefix + ".fc1.weight", {hidden, dim}, init::uniform(fan_in_bound(dim)));
  b1_ = store.add(prefix + ".fc1.bias", {hidden}, init::uniform(fan_in_bound(dim)));
  w2_ = store.add(prefix + ".fc2.weight", {dim, hidden}, init::uniform(fan_in_bound(hidden)));
  b2_ = store.add(prefix + ".fc2.bias", {dim}, init::uniform(fan_in_bound(hidden)));
}

std::size_t FeedForward::param_count() const {
  return 2 * dim_ + (hidden_ * dim_ + hidden_) + (dim_ * hidden_ + dim_);
}

Tensor FeedForward::forward(const Tensor& x, const RunContext& ctx, double rate) const {
  const ParamStore& s = *store_;
  Tensor h = layer_norm(x, s.get(ln_g_), s.get(ln_b_));
  h = swish(linear(h, s.get(w1_), s.get(b1_)));
  h = maybe_dropout(h, ctx, rate);
  h = linear(h, s.get(w2_), s.get(b2_));
  h = maybe_dropout(h, ctx, rate);
  return add(x, scale(h, 0.5));
}

ConvModule::ConvModule(ParamStore& store, const std::string& prefix, std::size_t dim,
                       std::size_t kernel)
    : store_(&store), dim_(dim), kernel_(kernel) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw ConfigError("conv module kernel must be odd, got " + std::to_string(kernel));
  }
  ln_g_ = store.add(prefix + ".norm.weight", {dim}, init::constant(1.0));
  ln_b_ = store.add(prefix + ".norm.bias", {dim}, init::constant(0.0));
  // Pointwise convolutions have kernel 1; only the depthwise one spans
  // `kernel` frames.
  const double pw1 = fan_in_bound(dim);
  pw1_w_ = store.add(prefix + ".pointwise1.weight", {2 * dim, dim, 1}, init::uniform(pw1));
  pw1_b_ = store.add(prefix + ".pointwise1.bias", {2 * dim}, init::uniform(pw1));
  const double dw = fan_in_bound(kernel);
  dw_w_ = store.add(prefix + ".depthwise.weight", {dim, 1, kernel}, init::uniform(dw));
  dw_b_ = store.add(prefix + ".depthwise.bias", {dim}, init::uniform(dw));
  bn_g_ = store.add(prefix + ".batch_norm.weight", {dim}, init::constant(1.0));
  bn_b_ = store.add(prefix + ".batch_norm.bias", {dim}, init::constant(0.0));
  bn_mean_ = store.add_buffer(prefix + ".batch_norm.running_mean", {dim}, init::constant(0.0));
  bn_var_ = store.add_buffer(prefix + ".batch_norm.running_var", {dim}, init::constant(1.0));
  const double pw2 = fan_in_bound(dim);
  pw2_w_ = store.add(prefix + ".pointwise2.weight", {dim, dim, 1}, init::uniform(pw2));
  pw2_b_ = store.add(prefix + ".pointwise2.bias", {dim}, init::uniform(pw2));
}

std::size_t ConvModule::param_count() const {
  const std::size_t d = dim_, k = kernel_;
  return 2 * d + (2 * d * d + 2 * d) + (d * k + d) + 2 * d + (d * d + d);
}

Tensor ConvModule::forward(const Tensor& x, const PadMask& mask, const RunContext& ctx,
                           double rate) const {
  ParamStore& s = *store_;
  const Conv1dOptions pointwise;
  Tensor h = layer_norm(x, s.get(ln_g_), s.get(ln_b_));
  h = conv1d(mask_rows(h, mask), s.get(pw1_w_), s.get(pw1_b_), pointwise);
  h = glu(h, 1);
  Conv1dOptions depthwise;
  depthwise.left_pad = kernel_ / 2;
  depthwise.right_pad = kernel_ / 2;
  depthwise.groups = dim_;
  h = conv1d(mask_rows(h, mask), s.get(dw_w_), s.get(dw_b_), depthwise);
  BatchNormStats stats{s.buffer(bn_mean_), s.buffer(bn_var_)};
  h = batch_norm(h, s.get(bn_g_), s.get(bn_b_), stats,
                 ctx.training ? NormMode::kTrain : NormMode::kEval, mask);
  h = swish(h);
  h = conv1d(mask_rows(h, mask), s.get(pw2_w_), s.get(pw2_b_), pointwise);
  h = maybe_dropout(h, ctx, rate);
  return mask_rows(add(x, h), mask);
}

EncoderLayer::EncoderLayer(ParamStore& store, const std::string& prefix, const LayerSpec& spec)
    : store_(&store),
      prefix_(prefix),
      spec_((spec.validate(), spec)),
      ffn1_(store, prefix + ".ffn1", spec.model_dim, spec.ffn_dim),
      conv_(store, prefix + ".conv", spec.model_dim, spec.conv_kernel),
      ffn2_(store, prefix + ".ffn2", spec.model_dim, spec.ffn_dim) {
  const std::size_t d = spec_.model_dim;
  mix_ln_g_ = store.add(prefix + ".mixer_norm.weight", {d}, init::constant(1.0));
  mix_ln_b_ = store.add(prefix + ".mixer_norm.bias", {d}, init::constant(0.0));
  if (spec_.mixer == MixerKind::kAttention) {
    attention_ = std::make_unique<MultiHeadAttention>(store, prefix + ".attention",
                                                      spec_.attention_spec());
  } else {
    hyena_ = std::make_unique<HyenaOperator>(store, prefix + ".hyena", spec_.hyena_spec());
  }
  out_ln_g_ = store.add(prefix + ".final_norm.weight", {d}, init::constant(1.0));
  out_ln_b_ = store.add(prefix + ".final_norm.bias", {d}, init::constant(0.0));
}

std::size_t EncoderLayer::mixer_param_count() const {
  return attention_ ? attention_->param_count() : hyena_->param_count();
}

std::size_t EncoderLayer::param_count() const {
  return ffn1_.param_count() + 2 * spec_.model_dim + mixer_param_count() + conv_.param_count() +
         ffn2_.param_count() + 2 * spec_.model_dim;
}

Tensor EncoderLayer::forward(const Tensor& x, const PadMask& mask, const RunContext& ctx) const {
  if (x.rank() != 2 || x.dim(1) != spec_.model_dim) {
    throw DimensionError("encoder layer: input " + shape_str(x.shape()) + " for model_dim " +
                         std::to_string(spec_.model_dim));
  }
  const ParamStore& s = *store_;
  Tensor h = mask_rows(ffn1_.forward(x, ctx, spec_.dropout), mask);
  Tensor m = layer_norm(h, s.get(mix_ln_g_), s.get(mix_ln_b_));
  m = attention_ ? attention_->self_attention(m, mask) : hyena_->forward(m, mask);
  h = add(h, maybe_dropout(m, ctx, spec_.dropout));
  h = conv_.forward(h, mask, ctx, spec_.dropout);
  h = ffn2_.forward(h, ctx, spec_.dropout);
  return mask_rows(layer_norm(h, s.get(out_ln_g_), s.get(out_ln_b_)), mask);
}

Tensor macaron_ffn(const FeedForward& ffn, const Tensor& x, const RunContext& ctx) {
  return ffn.forward(x, ctx, 0.0);
}

Tensor conv_module(const ConvModule& conv, const Tensor& x, const PadMask& mask,
                   const RunContext& ctx) {
  return conv.forward(x, mask, ctx, 0.0);
}

Tensor encoder_layer(const EncoderLayer& layer, const Tensor& x, const PadMask& mask,
                     const RunContext& ctx) {
  return layer.forward(x, mask, ctx);
}

}  // namespace confhyena
