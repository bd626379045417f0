// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

// Property suites behind `confhyena check`. Each case compares a fast path
// against a slow reference computed here, or checks an invariance.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include "confhyena/attention/attention.hpp"
#include "confhyena/bench/bench.hpp"
#include "confhyena/conformer/conformer.hpp"
#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/errors.hpp"
#include "confhyena/numerics/fft.hpp"
#include "confhyena/numerics/grad_check.hpp"

namespace confhyena::bench {

namespace {

constexpr double kOracleTol = 1e-9;
constexpr double kPaddingTol = 1e-8;
constexpr double kGradTol = 1e-3;

using Rng = std::mt19937_64;

std::vector<double> gaussian(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

Tensor random_tensor(Shape shape, Rng& rng) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from_data(std::move(shape), gaussian(n, rng));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

CaseResult verdict(std::string name, double metric, double tol, bool pass, std::string detail = {}) {
  return {std::move(name), pass ? "pass" : "fail", metric, tol, std::move(detail)};
}

CaseResult at_most(std::string name, double metric, double tol, std::string detail = {}) {
  return verdict(std::move(name), metric, tol, metric < tol, std::move(detail));
}

// Lengths 8, 32, 128, ... capped by max_len, plus max_len itself.
std::vector<std::size_t> oracle_lengths(std::size_t max_len) {
  std::vector<std::size_t> out;
  for (std::size_t len = 8; len <= max_len; len *= 4) out.push_back(len);
  if (out.empty() || out.back() != max_len) out.push_back(max_len);
  return out;
}

// ---- fft -------------------------------------------------------------------

SuiteResult fft_suite(const CheckOptions& opts) {
  SuiteResult s{"fft", {}};
  Rng rng(opts.seed);
  for (std::size_t n = 1; n <= std::max<std::size_t>(opts.max_len, 1); n *= 2) {
    ComplexBuffer x(gaussian(n, rng), gaussian(n, rng));
    const ComplexBuffer y = fft(x);
    double err = 0.0;
    for (std::size_t f = 0; f < n; ++f) {
      std::complex<double> acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double ang = -2.0 * std::numbers::pi * static_cast<double>((f * t) % n) /
                           static_cast<double>(n);
        acc += std::complex<double>(x.re[t], x.im[t]) * std::polar(1.0, ang);
      }
      err = std::max(err, std::abs(acc - std::complex<double>(y.re[f], y.im[f])));
    }
    s.cases.push_back(at_most("dft n=" + std::to_string(n), err, kOracleTol));
    const ComplexBuffer back = ifft(y);
    const double rt = std::max(max_abs_diff(back.re, x.re), max_abs_diff(back.im, x.im));
    s.cases.push_back(at_most("roundtrip n=" + std::to_string(n), rt, kOracleTol));
  }
  return s;
}

// ---- conv ------------------------------------------------------------------

// Direct evaluation of z[t + offset] where z is the full linear convolution.
std::vector<double> direct_conv(const Tensor& x, const Tensor& k, std::size_t offset) {
  const std::size_t len = x.dim(0), ch = x.dim(1);
  std::vector<double> y(len * ch, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t pos = t + offset;
    for (std::size_t tau = 0; tau <= pos && tau < len; ++tau) {
      const std::size_t src = pos - tau;
      if (src >= len) continue;
      for (std::size_t c = 0; c < ch; ++c) y[t * ch + c] += k.at(tau, c) * x.at(src, c);
    }
  }
  return y;
}

SuiteResult conv_suite(const CheckOptions& opts) {
  SuiteResult s{"conv", {}};
  Rng rng(opts.seed);
  constexpr std::size_t kCases = 50;
  std::uniform_int_distribution<std::size_t> channels(1, 4);
  for (std::size_t len : oracle_lengths(opts.max_len)) {
    for (int causal = 1; causal >= 0; --causal) {
      double worst = 0.0;
      for (std::size_t c = 0; c < kCases; ++c) {
        const std::size_t ch = channels(rng);
        const Tensor x = random_tensor({len, ch}, rng), k = random_tensor({len, ch}, rng);
        const Tensor y = causal ? long_conv_causal(x, k) : long_conv_noncausal(x, k);
        worst = std::max(worst, max_abs_diff(y.data(), direct_conv(x, k, causal ? 0 : len / 2)));
      }
      s.cases.push_back(at_most(std::string(causal ? "causal" : "noncausal") +
                                    " L=" + std::to_string(len),
                                worst, kOracleTol, std::to_string(kCases) + " cases"));
    }
  }
  return s;
}

// ---- causality -------------------------------------------------------------

HyenaSpec small_hyena(bool causal, std::size_t max_len) {
  HyenaSpec spec;
  spec.model_dim = 8;
  spec.filter_hidden = 16;
  spec.filter_bands = 4;
  spec.filter_max_len = std::max<std::size_t>(max_len, 8);
  spec.causal = causal;
  return spec;
}

SuiteResult causality_suite(const CheckOptions& opts) {
  SuiteResult s{"causality", {}};
  Rng rng(opts.seed);
  const std::size_t max_len = std::max<std::size_t>(opts.max_len, 2);
  for (bool causal : {true, false}) {
    ParamStore store;
    HyenaOperator op(store, "hyena", small_hyena(causal, max_len));
    store.materialize(opts.seed);
    store.set_requires_grad(false);
    if (causal) {
      std::uniform_int_distribution<std::size_t> length(2, max_len);
      for (int c = 0; c < 20; ++c) {
        const std::size_t len = length(rng);
        const std::size_t t = std::uniform_int_distribution<std::size_t>(0, len - 2)(rng);
        const Tensor x = random_tensor({len, 8}, rng);
        std::vector<double> xp = x.to_vector();
        std::normal_distribution<double> g(0.0, 1.0);
        for (std::size_t i = (t + 1) * 8; i < xp.size(); ++i) xp[i] += g(rng);
        const Tensor a = op.forward(x), b = op.forward(Tensor::from_data({len, 8}, xp));
        const double err = max_abs_diff(a.data().subspan(0, (t + 1) * 8), b.data().subspan(0, (t + 1) * 8));
        s.cases.push_back(at_most("causal L=" + std::to_string(len) + " t=" + std::to_string(t),
                                  err, kOracleTol));
      }
    } else {
      const std::size_t len = max_len;
      const Tensor x = random_tensor({len, 8}, rng);
      std::vector<double> xp = x.to_vector();
      for (std::size_t j = 0; j < 8; ++j) xp[(len - 1) * 8 + j] += 1.0;
      const Tensor a = op.forward(x), b = op.forward(Tensor::from_data({len, 8}, xp));
      const double d = max_abs_diff(a.data().subspan(0, 8), b.data().subspan(0, 8));
      s.cases.push_back(verdict("noncausal first<-last L=" + std::to_string(len), d, 0.0, d > 0.0,
                                "sensitivity must be non-zero"));
    }
  }
  return s;
}

// ---- padding ---------------------------------------------------------------

SuiteResult padding_suite(const CheckOptions& opts) {
  SuiteResult s{"padding", {}};
  Rng rng(opts.seed);
  const std::size_t max_len = std::max<std::size_t>(opts.max_len, 8);
  for (Variant v : {Variant::kConformer, Variant::kConfHyena, Variant::kHybrid}) {
    EncoderConfig cfg = EncoderConfig::miniature(v);
    cfg.hyena_filter_max_len = max_len + 37;
    SpeechModel model(cfg);
    model.materialize(opts.seed);
    model.params().set_requires_grad(false);
    std::uniform_int_distribution<std::size_t> length(cfg.downsample, max_len), pad(1, 37);
    double worst = 0.0;
    std::size_t worst_len = 0, worst_pad = 0;
    for (int c = 0; c < 20; ++c) {
      const std::size_t len = length(rng), extra = pad(rng);
      const Tensor x = random_tensor({len, cfg.feature_dim}, rng);
      std::vector<double> padded = x.to_vector();
      const std::vector<double> junk = gaussian(extra * cfg.feature_dim, rng);
      padded.insert(padded.end(), junk.begin(), junk.end());
      PadMask mask(len + extra, false);
      std::fill(mask.begin() + static_cast<std::ptrdiff_t>(len), mask.end(), true);
      const EncodeResult a = model.encode(x);
      const EncodeResult b =
          model.encode(Tensor::from_data({len + extra, cfg.feature_dim}, padded), mask);
      double err = std::numeric_limits<double>::infinity();
      if (a.states.shape() == b.states.shape() && a.ctc_logits.shape() == b.ctc_logits.shape()) {
        err = std::max(max_abs_diff(a.states.data(), b.states.data()),
                       max_abs_diff(a.ctc_logits.data(), b.ctc_logits.data()));
      }
      if (err >= worst) {
        worst = err;
        worst_len = len;
        worst_pad = extra;
      }
    }
    std::ostringstream detail;
    detail << "20 cases, worst at L=" << worst_len << " pad=" << worst_pad;
    s.cases.push_back(at_most(std::string(variant_name(v)), worst, kPaddingTol, detail.str()));
  }
  return s;
}

// ---- grad ------------------------------------------------------------------

CaseResult grad_case(const std::string& name, const std::function<Tensor(const Tensor&)>& f,
                     const Tensor& x, Rng& rng) {
  // Random projection of the output so every element contributes.
  const Tensor probe = f(x.detach());
  const Tensor w = random_tensor(probe.shape(), rng);
  GradCheckOptions go;
  go.tolerance = kGradTol;
  go.max_probes = 64;
  const GradCheckReport r = grad_check([&](const Tensor& in) { return sum(mul(f(in), w)); }, x, go);
  return verdict(name, r.max_rel_error, kGradTol, r.passed,
                 std::to_string(r.index.size()) + " probes");
}

SuiteResult grad_suite(const CheckOptions& opts) {
  SuiteResult s{"grad", {}};
  Rng rng(opts.seed);
  const std::size_t len = std::clamp<std::size_t>(opts.max_len / 8, 4, 12);
  for (bool causal : {false, true}) {
    ParamStore store;
    HyenaOperator op(store, "hyena", small_hyena(causal, 64));
    store.materialize(opts.seed);
    store.set_requires_grad(false);
    s.cases.push_back(grad_case(std::string("hyena ") + (causal ? "causal" : "noncausal"),
                                [&](const Tensor& x) { return op.forward(x); },
                                random_tensor({len, 8}, rng), rng));
  }
  {
    ParamStore store;
    AttentionSpec spec;
    spec.model_dim = 8;
    spec.heads = 2;
    MultiHeadAttention attn(store, "attention", spec);
    store.materialize(opts.seed);
    store.set_requires_grad(false);
    s.cases.push_back(grad_case("attention", [&](const Tensor& x) { return attn.self_attention(x); },
                                random_tensor({len, 8}, rng), rng));
  }
  for (MixerKind kind : {MixerKind::kAttention, MixerKind::kHyena}) {
    ParamStore store;
    LayerSpec spec;
    spec.model_dim = 8;
    spec.ffn_dim = 16;
    spec.heads = 2;
    spec.conv_kernel = 5;
    spec.dropout = 0.0;
    spec.mixer = kind;
    spec.hyena = small_hyena(false, 64);
    EncoderLayer layer(store, "layer", spec);
    store.materialize(opts.seed);
    store.set_requires_grad(false);
    s.cases.push_back(grad_case(std::string("encoder layer ") +
                                    (kind == MixerKind::kHyena ? "hyena" : "attention"),
                                [&](const Tensor& x) { return layer.forward(x, {}); },
                                random_tensor({len, 8}, rng), rng));
  }
  return s;
}

}  // namespace

bool SuiteResult::passed() const {
  return std::none_of(cases.begin(), cases.end(), [](const CaseResult& c) { return c.verdict == "fail"; });
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"fft", "conv", "causality", "padding", "grad"};
  return names;
}

SuiteResult run_suite(const std::string& name, const CheckOptions& opts) {
  if (opts.max_len < 2) throw ConfigError("max_len must be at least 2");
  if (name == "fft") return fft_suite(opts);
  if (name == "conv") return conv_suite(opts);
  if (name == "causality") return causality_suite(opts);
  if (name == "padding") return padding_suite(opts);
  if (name == "grad") return grad_suite(opts);
  throw ConfigError("unknown suite '" + name + "'");
}

}  // namespace confhyena::bench
