// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/encoder/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "confhyena/attention/attention.hpp"
#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

PadMask suffix_mask(std::size_t real, std::size_t len) {
  PadMask m(len, false);
  for (std::size_t t = real; t < len; ++t) m[t] = true;
  return m;
}

Conv1dOptions frontend_conv(std::size_t kernel, std::size_t stride) {
  Conv1dOptions o;
  o.stride = stride;
  o.left_pad = kernel / 2;
  o.right_pad = kernel / 2;
  return o;
}

Tensor sinusoidal_positions(std::size_t len, std::size_t dim) {
  std::vector<double> out(len * dim);
  const std::size_t half = dim / 2;
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                   static_cast<double>(std::max<std::size_t>(half - 1, 1)));
      out[t * dim + i] = std::sin(static_cast<double>(t) * freq);
      out[t * dim + half + i] = std::cos(static_cast<double>(t) * freq);
    }
  }
  return Tensor::from_data({len, dim}, std::move(out));
}

}  // namespace

std::size_t frontend_length(std::size_t len, std::size_t downsample) {
  const std::size_t half = (len + 1) / 2;
  return downsample == 4 ? (half + 1) / 2 : half;
}

Frontend::Frontend(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg)
    : store_(&store), downsample_(cfg.downsample), kernel_(cfg.frontend_kernel) {
  const std::size_t ch = cfg.frontend_channels, k = cfg.frontend_kernel, d = cfg.model_dim;
  const double b1 = fan_in_bound(cfg.feature_dim * k);
  c1_w_ = store.add(prefix + ".conv1.weight", {ch, cfg.feature_dim, k}, init::uniform(b1));
  c1_b_ = store.add(prefix + ".conv1.bias", {ch}, init::uniform(b1));
  const double b2 = fan_in_bound(ch / 2 * k);
  c2_w_ = store.add(prefix + ".conv2.weight", {ch, ch / 2, k}, init::uniform(b2));
  c2_b_ = store.add(prefix + ".conv2.bias", {ch}, init::uniform(b2));
  const double b3 = fan_in_bound(ch / 2);
  proj_w_ = store.add(prefix + ".proj.weight", {d, ch / 2}, init::uniform(b3));
  proj_b_ = store.add(prefix + ".proj.bias", {d}, init::uniform(b3));
}

Tensor Frontend::forward(const Tensor& features, const PadMask& mask, PadMask* out_mask) const {
  if (features.rank() != 2) throw DimensionError("frontend: expected (L, features) input");
  const std::size_t len = features.dim(0);
  const std::size_t real = real_prefix_length(mask, len);
  if (real < downsample_) {
    throw SizeError("frontend: " + std::to_string(real) + " frames is fewer than the downsampling factor " +
                    std::to_string(downsample_));
  }
  const ParamStore& s = *store_;
  const std::size_t stride1 = downsample_ == 4 ? 2 : 1;
  Tensor h = conv1d(mask_rows(features, mask), s.get(c1_w_), s.get(c1_b_),
                    frontend_conv(kernel_, stride1));
  h = glu(h, 1);
  const std::size_t real1 = stride1 == 2 ? (real + 1) / 2 : real;
  h = mask_rows(h, suffix_mask(real1, h.dim(0)));
  h = conv1d(h, s.get(c2_w_), s.get(c2_b_), frontend_conv(kernel_, 2));
  h = glu(h, 1);
  const std::size_t real2 = (real1 + 1) / 2;
  PadMask m2 = real2 == h.dim(0) && mask.empty() ? PadMask{} : suffix_mask(real2, h.dim(0));
  h = mask_rows(linear(h, s.get(proj_w_), s.get(proj_b_)), m2);
  if (out_mask) *out_mask = std::move(m2);
  return h;
}

std::size_t CompressionMap::output_length() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) n += (dropped.empty() || !dropped[i]) ? 1 : 0;
  return n;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows: expected (L, V) logits");
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  auto d = logits.data();
  std::vector<std::size_t> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto row = d.subspan(t * v, v);
    out[t] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

CompressionMap runs_of(std::span<const std::size_t> labels) {
  CompressionMap map;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t == labels.size() || labels[t] != labels[start]) {
      map.groups.emplace_back(start, t);
      map.labels.push_back(labels[start]);
      start = t;
    }
  }
  map.dropped.assign(map.groups.size(), false);
  return map;
}

CompressionMap uniform_compression(std::size_t len, std::size_t ratio) {
  if (ratio == 0) throw ConfigError("compression ratio must be positive");
  CompressionMap map;
  for (std::size_t b = 0; b < len; b += ratio) {
    map.groups.emplace_back(b, std::min(len, b + ratio));
    map.labels.push_back(map.labels.size());
  }
  map.dropped.assign(map.groups.size(), false);
  return map;
}

Tensor apply_compression(const Tensor& states, const CompressionMap& map) {
  if (states.rank() != 2 || map.input_length() != states.dim(0)) {
    throw DimensionError("compression map covers " + std::to_string(map.input_length()) +
                         " frames, states have shape " + shape_str(states.shape()));
  }
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (std::size_t i = 0; i < map.groups.size(); ++i)
    if (map.dropped.empty() || !map.dropped[i]) kept.push_back(map.groups[i]);
  return segment_mean(states, kept);
}

std::pair<Tensor, CompressionMap> ctc_compress(const Tensor& states, const Tensor& logits,
                                               bool drop_blank_runs) {
  if (states.rank() != 2 || logits.rank() != 2 || states.dim(0) != logits.dim(0)) {
    throw DimensionError("ctc_compress: states " + shape_str(states.shape()) + " and logits " +
                         shape_str(logits.shape()) + " must have the same rows");
  }
  const auto labels = argmax_rows(logits);
  CompressionMap map = runs_of(labels);
  if (drop_blank_runs) {
    bool any_kept = false;
    for (std::size_t i = 0; i < map.groups.size(); ++i) {
      map.dropped[i] = map.labels[i] == kBlank;
      any_kept = any_kept || !map.dropped[i];
    }
    // An all-blank prediction keeps its single run rather than emptying the sequence.
    if (!any_kept) std::fill(map.dropped.begin(), map.dropped.end(), false);
  }
  Tensor out = apply_compression(states, map);
  return {out, std::move(map)};
}

SpeechModel::SpeechModel(const EncoderConfig& cfg)
    : cfg_((cfg.validate(), cfg)), frontend_(store_, "frontend", cfg_) {
  for (std::size_t i = 1; i <= cfg_.n_layers; ++i) {
    layers_.push_back(std::make_unique<EncoderLayer>(
        store_, "encoder.layers." + std::to_string(i), cfg_.layer_spec(i)));
  }
  const std::size_t d = cfg_.model_dim, v = cfg_.vocab_size;
  ctc_w_ = store_.add("ctc.proj.weight", {v, d}, init::uniform(fan_in_bound(d)));
  ctc_b_ = store_.add("ctc.proj.bias", {v}, init::uniform(fan_in_bound(d)));
  embed_ = store_.add("embed.tokens", {v, d}, init::normal(1.0 / std::sqrt(static_cast<double>(d))));
  AttentionSpec plain;
  plain.model_dim = d;
  plain.heads = cfg_.heads;
  plain.relative = false;
  const std::size_t f = cfg_.decoder_ffn_dim;
  for (std::size_t i = 1; i <= cfg_.decoder_layers; ++i) {
    const std::string p = "decoder.layers." + std::to_string(i);
    DecoderLayer l;
    l.self_attn = std::make_unique<MultiHeadAttention>(store_, p + ".self_attn", plain);
    l.cross_attn = std::make_unique<MultiHeadAttention>(store_, p + ".cross_attn", plain);
    auto norm = [&](const char* name, ParamRef& g, ParamRef& b) {
      g = store_.add(p + "." + name + ".weight", {d}, init::constant(1.0));
      b = store_.add(p + "." + name + ".bias", {d}, init::constant(0.0));
    };
    norm("self_attn_norm", l.ln1_g, l.ln1_b);
    norm("cross_attn_norm", l.ln2_g, l.ln2_b);
    norm("ffn_norm", l.ln3_g, l.ln3_b);
    l.w1 = store_.add(p + ".fc1.weight", {f, d}, init::uniform(fan_in_bound(d)));
    l.b1 = store_.add(p + ".fc1.bias", {f}, init::uniform(fan_in_bound(d)));
    l.w2 = store_.add(p + ".fc2.weight", {d, f}, init::uniform(fan_in_bound(f)));
    l.b2 = store_.add(p + ".fc2.bias", {d}, init::uniform(fan_in_bound(f)));
    decoder_.push_back(std::move(l));
  }
}

EncodeResult SpeechModel::encode(const Tensor& features, const PadMask& mask,
                                 const RunContext& ctx, const EncodeOptions& opts) const {
  if (features.rank() != 2 || features.dim(1) != cfg_.feature_dim) {
    throw DimensionError("encode: features " + shape_str(features.shape()) + ", expected (L, " +
                         std::to_string(cfg_.feature_dim) + ")");
  }
  PadMask fmask;
  const Tensor h = frontend_.forward(features, mask, &fmask);
  return encode_stack(h, fmask, ctx, opts);
}

EncodeResult SpeechModel::encode_stack(const Tensor& frontend_out, const PadMask& mask,
                                       const RunContext& ctx, const EncodeOptions& opts) const {
  if (frontend_out.rank() != 2 || frontend_out.dim(1) != cfg_.model_dim) {
    throw DimensionError("encode_stack: input " + shape_str(frontend_out.shape()) +
                         ", expected (L, " + std::to_string(cfg_.model_dim) + ")");
  }
  Tensor h = frontend_out;
  const PadMask& fmask = mask;
  const std::size_t real = real_prefix_length(fmask, h.dim(0));
  if (real == 0) throw SizeError("encode_stack: no real frames");
  for (std::size_t i = 1; i <= cfg_.compression_layer; ++i) h = layers_[i - 1]->forward(h, fmask, ctx);

  EncodeResult r;
  if (real < h.dim(0)) h = slice(h, 0, 0, real);
  r.frontend_length = real;
  r.ctc_logits = linear(h, store_.get(ctc_w_), store_.get(ctc_b_));
  if (opts.forced_ratio) {
    r.map = uniform_compression(real, *opts.forced_ratio);
    h = apply_compression(h, r.map);
  } else {
    auto [states, map] = ctc_compress(h, r.ctc_logits.detach(), cfg_.drop_blank_runs);
    h = states;
    r.map = std::move(map);
  }
  for (std::size_t i = cfg_.compression_layer + 1; i <= cfg_.n_layers; ++i) {
    h = layers_[i - 1]->forward(h, {}, ctx);
  }
  r.states = h;
  r.compressed_length = h.dim(0);
  return r;
}

Tensor SpeechModel::decode(std::span<const std::size_t> prev, const Tensor& memory,
                           const RunContext& ctx) const {
  if (prev.empty()) throw SizeError("decode: empty decoder input");
  const std::size_t d = cfg_.model_dim;
  const Tensor& embed = store_.get(embed_);
  Tensor x = scale(index_rows(embed, prev), std::sqrt(static_cast<double>(d)));
  x = add(x, sinusoidal_positions(prev.size(), d));
  auto drop = [&](const Tensor& t) {
    return ctx.training && ctx.rng && cfg_.dropout > 0.0 ? dropout(t, cfg_.dropout, *ctx.rng) : t;
  };
  x = drop(x);
  for (const DecoderLayer& l : decoder_) {
    x = layer_norm(add(x, drop(l.self_attn->self_attention(x, {}, true))), store_.get(l.ln1_g),
                   store_.get(l.ln1_b));
    x = layer_norm(add(x, drop(l.cross_attn->cross_attention(x, memory))), store_.get(l.ln2_g),
                   store_.get(l.ln2_b));
    Tensor f = relu(linear(x, store_.get(l.w1), store_.get(l.b1)));
    f = linear(drop(f), store_.get(l.w2), store_.get(l.b2));
    x = layer_norm(add(x, drop(f)), store_.get(l.ln3_g), store_.get(l.ln3_b));
  }
  return matmul_nt(x, embed);
}

ParamBreakdown count_params(const EncoderConfig& cfg) {
  SpeechModel model(cfg);
  const ParamStore& s = model.params();
  ParamBreakdown b;
  b.frontend = s.count("frontend.");
  b.encoder = s.count("encoder.");
  b.ctc = s.count("ctc.");
  b.decoder = s.count("decoder.");
  b.embeddings = s.count("embed.");
  return b;
}

}  // namespace confhyena
