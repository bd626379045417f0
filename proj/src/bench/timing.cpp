// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <chrono>
#include <cmath>
#include <new>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "confhyena/attention/attention.hpp"
#include "confhyena/bench/bench.hpp"
#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/errors.hpp"

namespace confhyena::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_input(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = g(rng);
  return Tensor::from_data({rows, cols}, std::move(v));
}

// Large activations would otherwise be mmapped and page-faulted afresh on
// every call, which adds a cost that grows faster than the kernels under test.
void keep_heap_resident() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}

void require_lengths(const std::vector<std::size_t>& lengths) {
  if (lengths.size() < 2) throw ConfigError("benchmarks need at least two lengths");
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (lengths[i] <= lengths[i - 1]) throw ConfigError("benchmark lengths must be strictly increasing");
  }
}

void require_timing(const TimingOptions& t) {
  if (t.repeats < 3) throw ConfigError("benchmarks need at least 3 repeats");
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mad(const std::vector<double>& v) {
  const double m = median(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::abs(x - m));
  return median(std::move(dev));
}

TimingPoint time_point(std::size_t length, const TimingOptions& opts,
                       const std::function<void()>& fn) {
  TimingPoint p;
  p.length = length;
  try {
    for (std::size_t i = 0; i < opts.warmup; ++i) fn();
    std::vector<double> samples;
    for (std::size_t i = 0; i < opts.repeats; ++i) {
      const auto t0 = Clock::now();
      fn();
      samples.push_back(seconds_since(t0));
    }
    p.repeats = samples.size();
    p.median_s = median(samples);
    p.mad_s = mad(samples);
  } catch (const std::bad_alloc&) {
    p.skipped = true;
    p.note = "out of memory";
  }
  return p;
}

ScalingFit fit_scaling(const std::vector<TimingPoint>& points, std::size_t last) {
  std::vector<const TimingPoint*> usable;
  for (const auto& p : points)
    if (!p.skipped && p.median_s > 0.0) usable.push_back(&p);
  if (usable.size() > last) usable.erase(usable.begin(), usable.end() - static_cast<std::ptrdiff_t>(last));
  ScalingFit fit;
  fit.points = usable.size();
  if (usable.size() < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(usable.size());
  for (const auto* p : usable) {
    const double x = std::log(static_cast<double>(p->length)), y = std::log(p->median_s);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) return fit;
  fit.exponent = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.exponent * sx) / n;
  double ss = 0.0;
  for (const auto* p : usable) {
    const double r = std::log(p->median_s) -
                     (fit.intercept + fit.exponent * std::log(static_cast<double>(p->length)));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  fit.valid = true;
  return fit;
}

OpBench bench_attention(const OpBenchOptions& opts) {
  require_lengths(opts.lengths);
  require_timing(opts.timing);
  keep_heap_resident();
  ParamStore store;
  AttentionSpec spec;
  spec.model_dim = opts.model_dim;
  spec.heads = opts.heads;
  MultiHeadAttention attn(store, "attention", spec);
  store.materialize(opts.seed);
  store.set_requires_grad(false);
  std::mt19937_64 rng(opts.seed);
  OpBench out;
  out.op = "attention";
  for (std::size_t len : opts.lengths) {
    Tensor x = random_input(len, opts.model_dim, rng);
    out.points.push_back(time_point(len, opts.timing, [&] { attn.self_attention(x); }));
  }
  out.fit = fit_scaling(out.points);
  return out;
}

OpBench bench_hyena(const OpBenchOptions& opts) {
  require_lengths(opts.lengths);
  require_timing(opts.timing);
  keep_heap_resident();
  ParamStore store;
  HyenaSpec spec;
  spec.model_dim = opts.model_dim;
  HyenaOperator op(store, "hyena", spec);
  store.materialize(opts.seed);
  store.set_requires_grad(false);
  std::mt19937_64 rng(opts.seed);
  OpBench out;
  out.op = "hyena";
  for (std::size_t len : opts.lengths) {
    Tensor x = random_input(len, opts.model_dim, rng);
    out.points.push_back(time_point(len, opts.timing, [&] { op.forward(x); }));
  }
  out.fit = fit_scaling(out.points);
  return out;
}

EncoderConfig bench_encoder_config(const EncoderBenchOptions& opts, Variant v,
                                   std::size_t downsample) {
  EncoderConfig c = EncoderConfig::preset(v);
  c.model_dim = opts.model_dim;
  c.heads = opts.heads;
  c.ffn_dim = opts.ffn_dim;
  c.frontend_channels = opts.frontend_channels;
  c.downsample = downsample;
  c.dropout = 0.0;
  c.decoder_layers = 0;
  c.validate();
  return c;
}

EncoderBench bench_encoder(const EncoderBenchOptions& opts) {
  require_timing(opts.timing);
  keep_heap_resident();
  if (opts.variants.empty() || opts.downsamples.empty()) {
    throw ConfigError("encoder benchmark needs at least one variant and downsampling factor");
  }
  if (opts.compression_ratio == 0) throw ConfigError("compression ratio must be positive");
  struct Job {
    EncoderTiming timing;
    std::unique_ptr<SpeechModel> model;
    Tensor frontend_out;
    std::vector<double> samples;
  };
  std::vector<Job> jobs;
  for (std::size_t ds : opts.downsamples) {
    for (Variant v : opts.variants) {
      Job j;
      j.timing.variant = v;
      j.timing.downsample = ds;
      j.timing.point.length = opts.input_length;
      j.model = std::make_unique<SpeechModel>(bench_encoder_config(opts, v, ds));
      j.model->materialize(opts.seed);
      j.model->params().set_requires_grad(opts.backward);
      jobs.push_back(std::move(j));
    }
  }
  std::mt19937_64 rng(opts.seed);
  const Tensor features = random_input(opts.input_length, jobs.front().model->config().feature_dim, rng);
  EncodeOptions enc;
  enc.forced_ratio = opts.compression_ratio;

  if (!opts.include_frontend) {
    for (Job& j : jobs) j.frontend_out = j.model->frontend().forward(features, {}).detach();
  }
  auto run = [&](Job& j) {
    EncodeResult r = opts.include_frontend ? j.model->encode(features, {}, {}, enc)
                                           : j.model->encode_stack(j.frontend_out, {}, {}, enc);
    if (opts.backward) {
      backward(mean(r.states));
      j.model->params().zero_grad();
    }
  };
  auto guarded = [&](Job& j, std::vector<double>* samples) {
    if (j.timing.point.skipped) return;
    try {
      const auto t0 = Clock::now();
      run(j);
      if (samples) samples->push_back(seconds_since(t0));
    } catch (const std::bad_alloc&) {
      j.timing.point.skipped = true;
      j.timing.point.note = "out of memory";
    }
  };
  for (std::size_t w = 0; w < opts.timing.warmup; ++w)
    for (Job& j : jobs) guarded(j, nullptr);
  // Serpentine order, so no job always runs right after the same neighbour.
  for (std::size_t r = 0; r < opts.timing.repeats; ++r) {
    if (r % 2 == 0) {
      for (Job& j : jobs) guarded(j, &j.samples);
    } else {
      for (auto it = jobs.rbegin(); it != jobs.rend(); ++it) guarded(*it, &it->samples);
    }
  }

  EncoderBench out;
  out.base = bench_encoder_config(opts, opts.variants.front(), opts.downsamples.front());
  for (Job& j : jobs) {
    if (!j.timing.point.skipped) {
      j.timing.point.repeats = j.samples.size();
      j.timing.point.median_s = median(j.samples);
      j.timing.point.mad_s = mad(j.samples);
    }
    out.timings.push_back(j.timing);
  }
  for (const auto& a : out.timings) {
    for (const auto& b : out.timings) {
      if (&a == &b || a.downsample != b.downsample || a.point.skipped || b.point.skipped) continue;
      std::string key = std::string(variant_name(a.variant)) + "/" +
                        std::string(variant_name(b.variant));
      if (opts.downsamples.size() > 1) key += "@ds" + std::to_string(a.downsample);
      out.ratios[key] = a.point.median_s / b.point.median_s;
    }
  }
  return out;
}

}  // namespace confhyena::bench
