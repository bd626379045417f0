// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

// Acceptance run: one PASS/FAIL line per criterion. With an argument, runs
// only that criterion (1-10). Exit status is 0 only when every criterion run passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "confhyena/attention/attention.hpp"
#include "confhyena/bench/bench.hpp"
#include "confhyena/conformer/conformer.hpp"
#include "confhyena/encoder/model.hpp"
#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/grad_check.hpp"

using namespace confhyena;

namespace {

constexpr Variant kVariants[] = {Variant::kConformer, Variant::kConfHyena, Variant::kHybrid};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs(std::span<const double> a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

Tensor rand_tensor(Shape shape, std::mt19937_64& rng) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from_data(std::move(shape), oracle::gaussian(n, rng));
}

void oracle_equivalence(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> chans(1, 4);
  double worst_causal = 0.0, worst_same = 0.0;
  for (std::size_t len : {8u, 32u, 128u}) {
    for (int c = 0; c < 50; ++c) {
      const std::size_t ch = chans(rng);
      const Tensor x = rand_tensor({len, ch}, rng), k = rand_tensor({len, ch}, rng);
      worst_causal = std::max(worst_causal, max_abs(long_conv_causal(x, k).data(),
                                                     oracle::causal_conv(x.to_vector(), k.to_vector(), len, ch)));
      worst_same = std::max(worst_same, max_abs(long_conv_noncausal(x, k).data(),
                                                 oracle::same_conv(x.to_vector(), k.to_vector(), len, ch)));
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "150 causal + 150 non-causal cases, max err " << worst_causal << " / " << worst_same
           << ", " << secs << " s. ";
  o.require(worst_causal < 1e-9, "causal error < 1e-9");
  o.require(worst_same < 1e-9, "non-causal error < 1e-9");
  o.require(secs < 60.0, "runtime < 1 min");
}

HyenaSpec acceptance_hyena(bool causal) {
  HyenaSpec s;
  s.model_dim = 8;
  s.filter_hidden = 16;
  s.filter_bands = 4;
  s.filter_max_len = 256;
  s.causal = causal;
  return s;
}

void causality(Outcome& o) {
  std::mt19937_64 rng(102);
  ParamStore store;
  HyenaOperator causal(store, "causal", acceptance_hyena(true));
  HyenaOperator noncausal(store, "noncausal", acceptance_hyena(false));
  store.materialize(102);
  std::uniform_int_distribution<std::size_t> len_d(2, 256);
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t len = len_d(rng);
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, len - 2)(rng);
    std::vector<double> a = oracle::gaussian(len * 8, rng), b = a;
    const auto noise = oracle::gaussian((len - t - 1) * 8, rng);
    for (std::size_t i = 0; i < noise.size(); ++i) b[(t + 1) * 8 + i] += noise[i];
    const Tensor ya = causal.forward(Tensor::from_data({len, 8}, a));
    const Tensor yb = causal.forward(Tensor::from_data({len, 8}, b));
    for (std::size_t i = 0; i < (t + 1) * 8; ++i) worst = std::max(worst, std::abs(ya.at(i) - yb.at(i)));
  }
  // Non-causal: perturb only the last frame and look at the first output row.
  const std::size_t len = 64;
  std::vector<double> a = oracle::gaussian(len * 8, rng), b = a;
  for (std::size_t i = (len - 1) * 8; i < len * 8; ++i) b[i] += 1.0;
  const Tensor ya = noncausal.forward(Tensor::from_data({len, 8}, a));
  const Tensor yb = noncausal.forward(Tensor::from_data({len, 8}, b));
  double sens = 0.0;
  for (std::size_t i = 0; i < 8; ++i) sens = std::max(sens, std::abs(ya.at(i) - yb.at(i)));
  o.detail << "20 (t, L) pairs, max past change " << worst << "; non-causal first-row sensitivity "
           << sens << ". ";
  o.require(worst < 1e-9, "causal invariance < 1e-9");
  o.require(sens > 0.0, "non-causal sensitivity > 0");
}

void padding_safety(Outcome& o) {
  std::mt19937_64 rng(103);
  for (Variant v : kVariants) {
    EncoderConfig cfg = EncoderConfig::miniature(v);
    cfg.hyena_filter_max_len = 256;
    SpeechModel model(cfg);
    model.materialize(103);
    std::uniform_int_distribution<std::size_t> len_d(cfg.downsample, 160), pad_d(1, 37);
    double worst = 0.0;
    for (int c = 0; c < 20; ++c) {
      const std::size_t len = len_d(rng), pad = pad_d(rng);
      const auto real = oracle::gaussian(len * cfg.feature_dim, rng);
      const EncodeResult ref = model.encode(Tensor::from_data({len, cfg.feature_dim}, real));
      std::vector<double> padded = real;
      const auto junk = oracle::gaussian(pad * cfg.feature_dim, rng);
      padded.insert(padded.end(), junk.begin(), junk.end());
      PadMask mask(len + pad, false);
      for (std::size_t i = len; i < len + pad; ++i) mask[i] = true;
      const EncodeResult got = model.encode(Tensor::from_data({len + pad, cfg.feature_dim}, padded), mask);
      worst = std::max(worst, max_abs(got.states.data(), ref.states.to_vector()));
      worst = std::max(worst, max_abs(got.ctc_logits.data(), ref.ctc_logits.to_vector()));
    }
    o.detail << variant_name(v) << " max change " << worst << "; ";
    o.require(worst < 1e-8, std::string(variant_name(v)) + " < 1e-8");
  }
}

bool check_grad(Outcome& o, const std::string& what, const std::function<Tensor(const Tensor&)>& f,
                const Tensor& x) {
  const auto r = grad_check(f, x, {1e-4, 1e-3, 1e-6, 0});
  o.detail << what << " " << r.max_rel_error << "; ";
  o.require(r.passed, what);
  return r.passed;
}

void check_leaf(Outcome& o, const std::string& what, const std::function<Tensor()>& loss, Tensor leaf) {
  leaf.set_requires_grad(true);
  const auto r = grad_check_leaf(loss, leaf, {1e-4, 1e-3, 1e-6, 48});
  o.detail << what << " " << r.max_rel_error << "; ";
  o.require(r.passed, what);
}

void gradient_checks(Outcome& o) {
  std::mt19937_64 rng(104);
  for (bool causal : {false, true}) {
    ParamStore s;
    HyenaSpec spec = acceptance_hyena(causal);
    spec.filter_max_len = 32;
    HyenaOperator op(s, "h", spec);
    s.materialize(104);
    const Tensor x = rand_tensor({10, 8}, rng), w = rand_tensor({10, 8}, rng);
    const std::string tag = causal ? "hyena causal" : "hyena";
    check_grad(o, tag + " input", [&](const Tensor& t) { return sum(mul(op.forward(t), w)); }, x);
    for (const auto& e : s.entries()) {
      check_leaf(o, tag + " " + e.name, [&] { return sum(mul(op.forward(x), w)); }, e.value);
    }
  }
  {
    ParamStore s;
    MultiHeadAttention mha(s, "a", {8, 2, true});
    s.materialize(105);
    const Tensor x = rand_tensor({7, 8}, rng), w = rand_tensor({7, 8}, rng);
    const PadMask mask{false, false, false, false, false, true, true};
    check_grad(o, "attention input", [&](const Tensor& t) { return sum(mul(mha.self_attention(t, mask), w)); }, x);
    for (const auto& e : s.entries()) {
      check_leaf(o, "attention " + e.name, [&] { return sum(mul(mha.self_attention(x, mask), w)); }, e.value);
    }
  }
  for (MixerKind m : {MixerKind::kAttention, MixerKind::kHyena}) {
    LayerSpec spec;
    spec.model_dim = 8;
    spec.ffn_dim = 16;
    spec.heads = 2;
    spec.conv_kernel = 3;
    spec.dropout = 0.0;
    spec.mixer = m;
    spec.hyena = acceptance_hyena(false);
    spec.hyena.filter_max_len = 32;
    ParamStore s;
    EncoderLayer layer(s, "l", spec);
    s.materialize(106);
    const Tensor x = rand_tensor({8, 8}, rng), w = rand_tensor({8, 8}, rng);
    const std::string tag = m == MixerKind::kAttention ? "attention layer" : "hyena layer";
    check_grad(o, tag + " input", [&](const Tensor& t) { return sum(mul(layer.forward(t, {}), w)); }, x);
    for (const auto& e : s.entries()) {
      if (!e.trainable) continue;
      check_leaf(o, tag + " " + e.name, [&] { return sum(mul(layer.forward(x, {}), w)); }, e.value);
    }
  }
  if (o.pass) {
    // Keep the line short when everything passed.
    o.detail.str("");
    o.detail << "input and every parameter of hyena (both modes), attention and both layer types "
                "within 1e-3. ";
  }
}

void parameter_counts(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const double published[] = {114.9e6, 112.0e6, 112.9e6};
  std::size_t totals[3];
  for (int i = 0; i < 3; ++i) {
    const EncoderConfig c = EncoderConfig::preset(kVariants[i]);
    totals[i] = count_params(c).total();
    const double dev = (static_cast<double>(totals[i]) - published[i]) / published[i];
    o.detail << variant_name(kVariants[i]) << " " << totals[i] << " (" << 100.0 * dev << "%); ";
    o.require(std::abs(dev) <= 0.05, std::string(variant_name(kVariants[i])) + " within 5%");
    o.require(totals[i] == oracle::model_params(c), "closed form agrees");
  }
  o.require(totals[1] < totals[2] && totals[2] < totals[0], "ConfHyena < Hybrid < Conformer");
  o.require(seconds_since(t0) < 10.0, "runtime seconds");
}

void complexity_scaling(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  bench::OpBenchOptions opts;
  opts.lengths = {512, 1024, 2048, 4096, 8192};
  opts.model_dim = 256;
  opts.heads = 4;
  opts.timing = {3, 5};
  const bench::OpBench hyena = bench::bench_hyena(opts);
  const bench::OpBench attn = bench::bench_attention(opts);
  const double secs = seconds_since(t0);
  o.detail << "hyena exponent " << hyena.fit.exponent << ", attention exponent " << attn.fit.exponent
           << " (d=256, median of 5, last " << hyena.fit.points << " points), " << secs << " s. ";
  o.require(hyena.fit.valid && hyena.fit.exponent <= 1.3, "hyena exponent <= 1.3");
  o.require(attn.fit.valid && attn.fit.exponent >= 1.7, "attention exponent >= 1.7");
  o.require(secs < 600.0, "runtime < 10 min");
}

void efficiency_direction(Outcome& o) {
  bench::EncoderBenchOptions opts;
  opts.input_length = 3072;
  opts.compression_ratio = 4;
  opts.downsamples = {4};
  opts.timing = {3, 15};
  const bench::EncoderBench r = bench::bench_encoder(opts);
  double t[3] = {0, 0, 0};
  for (const auto& e : r.timings) t[static_cast<int>(e.variant)] = e.point.median_s;
  o.detail << "fwd+bwd medians: conformer " << t[0] << " s, confhyena " << t[1] << " s, hybrid " << t[2]
           << " s; hybrid/conformer " << t[2] / t[0] << ", hybrid/confhyena " << t[2] / t[1] << ". ";
  o.require(t[2] < t[0], "hybrid < conformer");
  o.require(t[2] < t[1], "hybrid < confhyena");
}

void downsample_bookkeeping(Outcome& o) {
  std::mt19937_64 rng(108);
  std::uniform_int_distribution<std::size_t> len_d(4, 5000);
  bool lengths_ok = true;
  for (int c = 0; c < 100; ++c) {
    const std::size_t len = len_d(rng);
    lengths_ok = lengths_ok && frontend_length(len, 4) == (len + 3) / 4 &&
                 frontend_length(len, 2) == (len + 1) / 2;
  }
  // The model itself must produce those lengths, not just the formula.
  for (int c = 0; c < 10; ++c) {
    const std::size_t len = std::uniform_int_distribution<std::size_t>(4, 80)(rng);
    for (std::size_t ds : {2u, 4u}) {
      EncoderConfig cfg = EncoderConfig::miniature(Variant::kHybrid);
      cfg.downsample = ds;
      cfg.hyena_filter_max_len = 128;
      SpeechModel m(cfg);
      m.materialize(108);
      const EncodeResult r = m.encode(rand_tensor({len, cfg.feature_dim}, rng), {}, {}, {4});
      lengths_ok = lengths_ok && r.frontend_length == (len + ds - 1) / ds;
    }
  }
  o.require(lengths_ok, "frontend lengths");
  bench::EncoderBenchOptions opts;
  opts.input_length = 3072;
  opts.downsamples = {2, 4};
  opts.backward = false;
  opts.include_frontend = true;
  opts.timing = {3, 5};
  const bench::EncoderBench r = bench::bench_encoder(opts);
  o.detail << "100 random L ok=" << lengths_ok << "; forward ds2/ds4:";
  for (Variant v : kVariants) {
    double t2 = 0.0, t4 = 0.0;
    for (const auto& e : r.timings) {
      if (e.variant != v) continue;
      (e.downsample == 2 ? t2 : t4) = e.point.median_s;
    }
    o.detail << " " << variant_name(v) << " " << t2 / t4;
    o.require(t2 > t4, std::string(variant_name(v)) + " ds2 > ds4");
  }
  o.detail << ". ";
}

void compression(Outcome& o) {
  std::mt19937_64 rng(109);
  std::uniform_int_distribution<std::size_t> len_d(1, 200), vocab_d(2, 8);
  std::bernoulli_distribution stay(0.6);
  bool groups_ok = true;
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t len = len_d(rng), vocab = vocab_d(rng), d = 5;
    // Sticky random logits so that runs of several frames are common.
    std::vector<double> logits = oracle::gaussian(len * vocab, rng);
    for (std::size_t t = 1; t < len; ++t)
      if (stay(rng))
        for (std::size_t v = 0; v < vocab; ++v) logits[t * vocab + v] = logits[(t - 1) * vocab + v];
    std::vector<std::size_t> labels(len);
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t best = 0;
      for (std::size_t v = 1; v < vocab; ++v)
        if (logits[t * vocab + v] > logits[t * vocab + best]) best = v;
      labels[t] = best;
    }
    const auto runs = oracle::run_length(labels);
    const Tensor states = rand_tensor({len, d}, rng);
    const auto [merged, map] = ctc_compress(states, Tensor::from_data({len, vocab}, logits));
    if (map.groups.size() != runs.size() || merged.dim(0) != runs.size()) {
      groups_ok = false;
      continue;
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
      groups_ok = groups_ok && map.groups[i].first == runs[i].begin && map.groups[i].second == runs[i].end &&
                  map.labels[i] == runs[i].label;
      for (std::size_t k = 0; k < d; ++k) {
        double s = 0.0;
        for (std::size_t t = runs[i].begin; t < runs[i].end; ++t) s += states.at(t, k);
        worst = std::max(worst, std::abs(merged.at(i, k) - s / static_cast<double>(runs[i].end - runs[i].begin)));
      }
    }
  }
  o.detail << "100 sequences, groups match=" << groups_ok << ", max mean error " << worst << ". ";
  o.require(groups_ok, "groups match run-length oracle");
  o.require(worst <= 1e-12, "means within 1e-12");
}

void smoke_training(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  for (Variant v : kVariants) {
    const SmokeResult r = smoke_train(EncoderConfig::miniature(v), {});
    bool finite = true;
    for (double l : r.losses) finite = finite && std::isfinite(l);
    o.detail << variant_name(v) << " " << r.losses.front() << " -> " << r.losses.back() << " (ratio "
             << r.ratio() << "); ";
    o.require(r.losses.size() == 201, std::string(variant_name(v)) + " 200 steps");
    o.require(finite && !r.diverged, std::string(variant_name(v)) + " finite");
    o.require(r.ratio() < 0.7, std::string(variant_name(v)) + " ratio < 0.7");
  }
  const double secs = seconds_since(t0);
  o.detail << secs << " s. ";
  o.require(secs < 300.0, "runtime < 5 min");
}

struct Criterion {
  const char* name;
  void (*run)(Outcome&);
};

const Criterion kCriteria[] = {
    {"oracle equivalence", oracle_equivalence},
    {"causality", causality},
    {"padding safety", padding_safety},
    {"gradient checks", gradient_checks},
    {"parameter counts", parameter_counts},
    {"complexity scaling", complexity_scaling},
    {"efficiency direction", efficiency_direction},
    {"downsample bookkeeping", downsample_bookkeeping},
    {"CTC compression", compression},
    {"smoke training", smoke_training},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) {
    only = std::atoi(argv[1]);
    if (only < 1 || only > 10) {
      std::cerr << "usage: acceptance [1-10]\n";
      return 2;
    }
  }
  bool all = true;
  for (int i = 1; i <= 10; ++i) {
    if (only && i != only) continue;
    Outcome o;
    try {
      kCriteria[i - 1].run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i << " (" << kCriteria[i - 1].name
              << "): " << o.detail.str() << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
