// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace oracle {

std::vector<Cplx> dft(const std::vector<Cplx>& x, bool inverse) {
  const std::size_t n = x.size();
  std::vector<Cplx> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t f = 0; f < n; ++f) {
    Cplx acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((f * t) % n) /
                         static_cast<double>(n);
      acc += x[t] * Cplx(std::cos(ang), std::sin(ang));
    }
    out[f] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

std::vector<double> causal_conv(const std::vector<double>& x, const std::vector<double>& k,
                                std::size_t len, std::size_t ch) {
  std::vector<double> y(len * ch, 0.0);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j <= t; ++j) y[t * ch + c] += k[j * ch + c] * x[(t - j) * ch + c];
  return y;
}

std::vector<double> same_conv(const std::vector<double>& x, const std::vector<double>& k,
                              std::size_t len, std::size_t ch) {
  std::vector<double> y(len * ch, 0.0);
  const long centre = static_cast<long>(len / 2);
  for (std::size_t c = 0; c < ch; ++c) {
    for (long t = 0; t < static_cast<long>(len); ++t) {
      for (long s = 0; s < static_cast<long>(len); ++s) {
        const long j = t - s + centre;
        if (j < 0 || j >= static_cast<long>(len)) continue;
        y[t * ch + c] += x[s * ch + c] * k[j * ch + c];
      }
    }
  }
  return y;
}

std::vector<double> depthwise_conv(const std::vector<double>& x, const std::vector<double>& w,
                                   const std::vector<double>& bias, std::size_t len,
                                   std::size_t ch, std::size_t kernel, bool causal) {
  std::vector<double> y(len * ch, 0.0);
  const long left = causal ? static_cast<long>(kernel) - 1 : static_cast<long>(kernel / 2);
  for (std::size_t c = 0; c < ch; ++c) {
    for (long t = 0; t < static_cast<long>(len); ++t) {
      double acc = bias.empty() ? 0.0 : bias[c];
      for (long j = 0; j < static_cast<long>(kernel); ++j) {
        const long src = t - left + j;
        if (src >= 0 && src < static_cast<long>(len)) acc += w[c * kernel + j] * x[src * ch + c];
      }
      y[t * ch + c] = acc;
    }
  }
  return y;
}

std::vector<Run> run_length(const std::vector<std::size_t>& labels) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!runs.empty() && runs.back().label == labels[i]) {
      runs.back().end = i + 1;
    } else {
      runs.push_back({i, i + 1, labels[i]});
    }
  }
  return runs;
}

std::vector<double> attention(const AttentionInputs& in) {
  const std::size_t dk = in.d / in.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> out(in.lq * in.d, 0.0);
  for (std::size_t h = 0; h < in.heads; ++h) {
    for (std::size_t i = 0; i < in.lq; ++i) {
      std::vector<double> s(in.lk, -std::numeric_limits<double>::infinity());
      for (std::size_t j = 0; j < in.lk; ++j) {
        if (!in.key_mask.empty() && in.key_mask[j]) continue;
        if (in.causal && j > i) continue;
        double acc = 0.0;
        for (std::size_t m = 0; m < dk; ++m) {
          const std::size_t col = h * dk + m;
          double qc = in.q[i * in.d + col];
          if (!in.u.empty()) qc += in.u[col];
          acc += qc * in.k[j * in.d + col];
          if (!in.pos.empty()) {
            double qp = in.q[i * in.d + col];
            if (!in.bias_v.empty()) qp += in.bias_v[col];
            const std::size_t row = i + in.lk - 1 - j;
            acc += qp * in.pos[row * in.d + col];
          }
        }
        s[j] = acc * scale;
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (double& e : s) {
        e = std::exp(e - mx);
        z += e;
      }
      for (std::size_t j = 0; j < in.lk; ++j)
        for (std::size_t m = 0; m < dk; ++m)
          out[i * in.d + h * dk + m] += s[j] / z * in.v[j * in.d + h * dk + m];
    }
  }
  return out;
}

std::vector<double> relative_table(std::size_t len, std::size_t d) {
  std::vector<double> t((2 * len - 1) * d);
  for (std::size_t r = 0; r < 2 * len - 1; ++r) {
    const double dist = static_cast<double>(r) - static_cast<double>(len) + 1.0;
    for (std::size_t m = 0; m < d; ++m) {
      const std::size_t even = m - m % 2;
      const double w = std::exp(-std::log(10000.0) * static_cast<double>(even) / static_cast<double>(d));
      t[r * d + m] = m % 2 == 0 ? std::sin(dist * w) : std::cos(dist * w);
    }
  }
  return t;
}

double ctc_brute_force(const std::vector<double>& log_probs, std::size_t frames,
                       std::size_t vocab, const std::vector<std::size_t>& target) {
  std::vector<std::size_t> path(frames, 0);
  double total = 0.0;
  while (true) {
    // Collapse repeats, then drop blanks.
    std::vector<std::size_t> collapsed;
    for (std::size_t t = 0; t < frames; ++t) {
      if (path[t] != 0 && (t == 0 || path[t] != path[t - 1])) collapsed.push_back(path[t]);
    }
    if (collapsed == target) {
      double lp = 0.0;
      for (std::size_t t = 0; t < frames; ++t) lp += log_probs[t * vocab + path[t]];
      total += std::exp(lp);
    }
    std::size_t pos = 0;
    while (pos < frames && ++path[pos] == vocab) path[pos++] = 0;
    if (pos == frames) break;
  }
  return -std::log(total);
}

std::size_t ffn_params(std::size_t d, std::size_t f) { return 2 * d + d * f + f + f * d + d; }

std::size_t conv_module_params(std::size_t d, std::size_t k) {
  const std::size_t norm = 2 * d;
  const std::size_t pointwise1 = 2 * d * d + 2 * d;
  const std::size_t depthwise = d * k + d;
  const std::size_t batch_norm = 2 * d;
  const std::size_t pointwise2 = d * d + d;
  return norm + pointwise1 + depthwise + batch_norm + pointwise2;
}

std::size_t attention_params(std::size_t d, bool relative) {
  return 4 * (d * d + d) + (relative ? d * d + 2 * d : 0);
}

std::size_t filter_params(std::size_t d, std::size_t order, std::size_t bands,
                          std::size_t hidden, std::size_t layers, bool decay) {
  const std::size_t features = 1 + 2 * bands;
  std::size_t n = features * hidden + 2 * hidden;              // first layer + its sine freq
  n += (layers - 2) * (hidden * hidden + 2 * hidden);          // hidden layers
  n += hidden * order * d;                                      // output, no bias
  if (decay) n += order * d;
  return n;
}

std::size_t hyena_params(std::size_t d, std::size_t order, std::size_t short_kernel,
                         std::size_t bands, std::size_t hidden, std::size_t layers, bool decay) {
  const std::size_t w = (order + 1) * d;
  return w * d + w + w * short_kernel + w + d * d + d +
         filter_params(d, order, bands, hidden, layers, decay);
}

std::size_t layer_params(const confhyena::EncoderConfig& c, bool hyena) {
  const std::size_t d = c.model_dim;
  const std::size_t mixer =
      hyena ? hyena_params(d, c.hyena_order, c.hyena_short_kernel, c.hyena_filter_bands,
                           c.hyena_filter_hidden, c.hyena_filter_layers, c.hyena_decay)
            : attention_params(d, true);
  return 2 * ffn_params(d, c.ffn_dim) + conv_module_params(d, c.conv_kernel) + 2 * d + mixer +
         2 * d;
}

std::size_t frontend_params(const confhyena::EncoderConfig& c) {
  const std::size_t ch = c.frontend_channels, k = c.frontend_kernel;
  return ch * c.feature_dim * k + ch + ch * (ch / 2) * k + ch + c.model_dim * (ch / 2) +
         c.model_dim;
}

std::size_t decoder_layer_params(std::size_t d, std::size_t f) {
  return 2 * attention_params(d, false) + 3 * 2 * d + d * f + f + f * d + d;
}

std::size_t model_params(const confhyena::EncoderConfig& c) {
  std::size_t n = frontend_params(c);
  for (std::size_t i = 1; i <= c.n_layers; ++i) n += layer_params(c, c.layer_uses_hyena(i));
  n += c.vocab_size * c.model_dim + c.vocab_size;  // CTC projection
  n += c.decoder_layers * decoder_layer_params(c.model_dim, c.decoder_ffn_dim);
  n += c.vocab_size * c.model_dim;  // tied embeddings
  return n;
}

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace oracle
