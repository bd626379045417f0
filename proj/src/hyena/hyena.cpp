// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/hyena/hyena.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

void HyenaSpec::validate() const {
  if (order == 0 || order > 4) throw ConfigError("hyena order must lie in [1, 4]");
  if (model_dim == 0) throw ConfigError("hyena model_dim must be positive");
  if (width_multiplier != order + 1) {
    throw ConfigError("hyena width_multiplier " + std::to_string(width_multiplier) +
                      " must equal order + 1 = " + std::to_string(order + 1));
  }
  if (short_kernel == 0 || short_kernel % 2 == 0) {
    throw ConfigError("hyena short_kernel must be odd, got " + std::to_string(short_kernel));
  }
  if (filter_layers < 2) throw ConfigError("hyena filter needs at least 2 layers");
  if (filter_hidden == 0 || filter_bands == 0 || filter_max_len == 0) {
    throw ConfigError("hyena filter sizes must be positive");
  }
}

Tensor positional_features(std::size_t len, std::size_t bands, std::size_t max_len) {
  if (len == 0) throw SizeError("positional_features: length must be positive");
  const std::size_t dim = 1 + 2 * bands;
  std::vector<double> out(len * dim);
  const double ref = static_cast<double>(max_len);
  for (std::size_t t = 0; t < len; ++t) {
    double* row = out.data() + t * dim;
    const double pos = static_cast<double>(t);
    row[0] = pos / ref;
    const double w = 2.0 * std::numbers::pi * pos / ref;
    for (std::size_t j = 0; j < bands; ++j) {
      const double f = bands == 1 ? 1e-4
                                  : 1e-4 + (static_cast<double>(bands - 1) - 1e-4) *
                                               static_cast<double>(j) /
                                               static_cast<double>(bands - 1);
      row[1 + j] = std::cos(f * w);
      row[1 + bands + j] = -std::sin(f * w);
    }
  }
  return Tensor::from_data({len, dim}, std::move(out));
}

namespace {

// Divides every column of x (L, C) by its L2 norm.
Tensor normalize_columns(const Tensor& x) {
  const std::size_t len = x.dim(0), ch = x.dim(1);
  auto xd = x.data();
  std::vector<double> inv(ch, 0.0);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) inv[c] += xd[t * ch + c] * xd[t * ch + c];
  for (double& v : inv) v = 1.0 / std::sqrt(v + 1e-12);
  std::vector<double> out(len * ch);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t c = 0; c < ch; ++c) out[t * ch + c] = xd[t * ch + c] * inv[c];
  std::vector<double> y = out;
  return make_op({len, ch}, std::move(out), {x},
                 [y = std::move(y), inv = std::move(inv), len, ch](
                     std::span<const double> g, std::span<const GradSpan> gin) {
                   // d(x/|x|) = (g - y (y . g)) / |x|
                   std::vector<double> dot(ch, 0.0);
                   for (std::size_t t = 0; t < len; ++t)
                     for (std::size_t c = 0; c < ch; ++c) dot[c] += y[t * ch + c] * g[t * ch + c];
                   for (std::size_t t = 0; t < len; ++t)
                     for (std::size_t c = 0; c < ch; ++c) {
                       const std::size_t i = t * ch + c;
                       gin[0][i] += (g[i] - y[i] * dot[c]) * inv[c];
                     }
                 });
}

}  // namespace

ImplicitFilter::ImplicitFilter(ParamStore& store, const std::string& prefix, const HyenaSpec& spec)
    : store_(&store), prefix_(prefix), spec_(spec) {
  spec_.validate();
  const std::size_t hidden = spec_.filter_hidden;
  std::size_t in = spec_.feature_dim();
  for (std::size_t l = 0; l + 1 < spec_.filter_layers; ++l) {
    const std::string p = prefix_ + ".mlp." + std::to_string(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weights_.push_back(store.add(p + ".weight", {hidden, in}, init::uniform(bound)));
    biases_.push_back(store.add(p + ".bias", {hidden}, init::uniform(bound)));
    freqs_.push_back(store.add(p + ".freq", {hidden}, init::constant(1.0)));
    in = hidden;
  }
  const std::size_t channels = spec_.order * spec_.model_dim;
  out_weight_ = store.add(prefix_ + ".mlp.out.weight", {channels, hidden},
                          init::uniform(1.0 / std::sqrt(static_cast<double>(hidden))));
  if (spec_.decay_window) {
    // Rates giving a 1e-2 attenuation between 30% and 150% of max_len.
    const double slow = -std::log(1e-2) / 1.5;
    const double fast = -std::log(1e-2) / 0.3;
    decay_rates_ = store.add(prefix_ + ".decay", {channels},
                             [slow, fast, d = spec_.model_dim](std::span<double> out,
                                                               std::mt19937_64& rng) {
                               for (std::size_t o = 0; o * d < out.size(); ++o) {
                                 init::linspace(slow, fast)(out.subspan(o * d, d), rng);
                               }
                             });
  }
}

std::size_t ImplicitFilter::param_count() const {
  std::size_t n = 0;
  const std::size_t hidden = spec_.filter_hidden;
  std::size_t in = spec_.feature_dim();
  for (std::size_t l = 0; l + 1 < spec_.filter_layers; ++l) {
    n += hidden * in + 2 * hidden;
    in = hidden;
  }
  n += spec_.order * spec_.model_dim * hidden;
  if (spec_.decay_window) n += spec_.order * spec_.model_dim;
  return n;
}

Tensor ImplicitFilter::generate_flat(std::size_t len) const {
  if (len == 0) throw SizeError("generate_kernels: length must be positive");
  Tensor h = positional_features(len, spec_.filter_bands, spec_.filter_max_len);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = linear(h, store_->get(weights_[l]), store_->get(biases_[l]));
    h = sine(mul(h, store_->get(freqs_[l])));
  }
  Tensor k = linear(h, store_->get(out_weight_));
  if (spec_.decay_window) {
    // Decay with distance from the zero-lag tap (index 0 causal, L/2 otherwise).
    const std::size_t center = spec_.causal ? 0 : len / 2;
    std::vector<double> dist(len);
    for (std::size_t t = 0; t < len; ++t) {
      const double lag = static_cast<double>(t) - static_cast<double>(center);
      dist[t] = -std::abs(lag) / static_cast<double>(spec_.filter_max_len);
    }
    const std::size_t channels = spec_.order * spec_.model_dim;
    Tensor rates = reshape(abs(store_->get(decay_rates_)), {1, channels});
    Tensor window = exp(matmul(Tensor::from_data({len, 1}, std::move(dist)), rates));
    k = mul(k, window);
  }
  if (spec_.normalize_kernels) k = normalize_columns(k);
  return k;
}

Tensor ImplicitFilter::generate(std::size_t len) const {
  Tensor flat = generate_flat(len);
  const std::size_t d = spec_.model_dim;
  std::vector<Tensor> parts;
  for (std::size_t o = 0; o < spec_.order; ++o) {
    parts.push_back(reshape(slice(flat, 1, o * d, (o + 1) * d), {1, len, d}));
  }
  return concat(parts, 0);
}

std::size_t real_prefix_length(const PadMask& mask, std::size_t len) {
  if (mask.empty()) return len;
  if (mask.size() != len) {
    throw DimensionError("pad mask of length " + std::to_string(mask.size()) +
                         " for sequence of length " + std::to_string(len));
  }
  std::size_t real = 0;
  while (real < len && !mask[real]) ++real;
  for (std::size_t t = real; t < len; ++t) {
    if (!mask[t]) throw ContractError("padded frames must form a suffix of the sequence");
  }
  return real;
}

HyenaOperator::HyenaOperator(ParamStore& store, const std::string& prefix, const HyenaSpec& spec)
    : store_(&store),
      prefix_(prefix),
      spec_(spec),
      filter_(store, prefix + ".filter", spec) {
  const std::size_t d = spec_.model_dim, w = spec_.width(), k = spec_.short_kernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  in_weight_ = store.add(prefix_ + ".in_proj.weight", {w, d}, init::uniform(bound));
  in_bias_ = store.add(prefix_ + ".in_proj.bias", {w}, init::uniform(bound));
  const double kbound = 1.0 / std::sqrt(static_cast<double>(k));
  conv_weight_ = store.add(prefix_ + ".short_conv.weight", {w, 1, k}, init::uniform(kbound));
  conv_bias_ = store.add(prefix_ + ".short_conv.bias", {w}, init::uniform(kbound));
  out_weight_ = store.add(prefix_ + ".out_proj.weight", {d, d}, init::uniform(bound));
  out_bias_ = store.add(prefix_ + ".out_proj.bias", {d}, init::uniform(bound));
}

std::size_t HyenaOperator::param_count() const {
  const std::size_t d = spec_.model_dim, w = spec_.width(), k = spec_.short_kernel;
  return (w * d + w) + (w * k + w) + (d * d + d) + filter_.param_count();
}

Tensor HyenaOperator::forward(const Tensor& x, const PadMask& mask) const {
  if (x.rank() != 2 || x.dim(1) != spec_.model_dim) {
    throw DimensionError("hyena: input " + shape_str(x.shape()) + " for model_dim " +
                         std::to_string(spec_.model_dim));
  }
  const std::size_t len = x.dim(0), d = spec_.model_dim, n = spec_.order;
  if (len == 0) throw SizeError("hyena: empty input");
  const std::size_t real = real_prefix_length(mask, len);
  if (real == 0) throw ContractError("hyena: every frame is padded");
  Tensor xr = real == len ? x : slice(x, 0, 0, real);

  Tensor u = linear(xr, store_->get(in_weight_), store_->get(in_bias_));
  u = short_conv(u, store_->get(conv_weight_), store_->get(conv_bias_), spec_.causal);
  Tensor kernels = filter_.generate_flat(real);

  Tensor z = slice(u, 1, n * d, (n + 1) * d);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor gate = slice(u, 1, i * d, (i + 1) * d);
    Tensor k = slice(kernels, 1, i * d, (i + 1) * d);
    Tensor conv = spec_.causal ? long_conv_causal(z, k) : long_conv_noncausal(z, k);
    z = mul(gate, conv);
  }
  Tensor y = linear(z, store_->get(out_weight_), store_->get(out_bias_));
  if (real == len) return y;
  return concat({y, Tensor::zeros({len - real, d})}, 0);
}

}  // namespace confhyena
