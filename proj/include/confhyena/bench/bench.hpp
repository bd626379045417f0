// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confhyena/encoder/config.hpp"
#include "confhyena/encoder/model.hpp"

namespace confhyena::bench {

inline constexpr int kReportSchemaVersion = 1;

// ---- timing ----------------------------------------------------------------

struct TimingOptions {
  std::size_t warmup = 3;
  std::size_t repeats = 5;
};

struct TimingPoint {
  std::size_t length = 0;
  std::size_t repeats = 0;
  double median_s = 0.0;
  double mad_s = 0.0;
  bool skipped = false;
  std::string note;
};

double median(std::vector<double> v);
// Median absolute deviation from the median.
double mad(const std::vector<double>& v);

// Runs `fn` warmup + repeats times and summarizes the timed repeats. A
// std::bad_alloc marks the point as skipped.
TimingPoint time_point(std::size_t length, const TimingOptions& opts,
                       const std::function<void()>& fn);

struct ScalingFit {
  double exponent = 0.0;
  double intercept = 0.0;  // log(seconds) at log(length) = 0
  double residual = 0.0;   // RMS residual in log space
  std::size_t points = 0;
  bool valid = false;
};

// Least-squares line through (log L, log t) over the largest `last`
// non-skipped points.
ScalingFit fit_scaling(const std::vector<TimingPoint>& points, std::size_t last = 4);

// ---- benchmarks ------------------------------------------------------------

struct OpBenchOptions {
  std::vector<std::size_t> lengths{512, 1024, 2048, 4096, 8192};
  std::size_t model_dim = 256;
  std::size_t heads = 4;
  TimingOptions timing{3, 5};
  std::uint64_t seed = 1;
};

struct OpBench {
  std::string op;
  std::vector<TimingPoint> points;
  ScalingFit fit;
};

// Forward pass of relative-position self-attention over one sequence.
OpBench bench_attention(const OpBenchOptions& opts);
// Forward pass of the non-causal Hyena operator.
OpBench bench_hyena(const OpBenchOptions& opts);

struct EncoderBenchOptions {
  std::size_t input_length = 3072;
  std::size_t compression_ratio = 4;
  std::vector<std::size_t> downsamples{4};
  std::vector<Variant> variants{Variant::kConformer, Variant::kConfHyena, Variant::kHybrid};
  // Reduced-width encoder so a desk run finishes in minutes.
  std::size_t model_dim = 256;
  std::size_t heads = 4;
  std::size_t ffn_dim = 1024;
  std::size_t frontend_channels = 512;
  bool backward = true;
  // The frontend is the same module in every variant; by default only the
  // encoder stack (layers, CTC projection, compression) is timed.
  bool include_frontend = false;
  TimingOptions timing{3, 5};
  std::uint64_t seed = 1;
};

struct EncoderTiming {
  Variant variant = Variant::kConformer;
  std::size_t downsample = 4;
  TimingPoint point;
};

struct EncoderBench {
  std::vector<EncoderTiming> timings;
  // "a/b" -> median(a) / median(b) for every ordered pair with equal downsampling.
  std::map<std::string, double> ratios;
  EncoderConfig base;  // config shared by every variant, for the report
};

EncoderConfig bench_encoder_config(const EncoderBenchOptions& opts, Variant v,
                                   std::size_t downsample);
// Variants are timed round-robin, one repeat each per round in alternating
// order, so slow drift of the machine affects all of them alike.
EncoderBench bench_encoder(const EncoderBenchOptions& opts);

// ---- property suites -------------------------------------------------------

struct CaseResult {
  std::string name;
  std::string verdict;  // "pass", "fail" or "skipped"
  double metric = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

struct SuiteResult {
  std::string name;
  std::vector<CaseResult> cases;
  bool passed() const;
};

struct CheckOptions {
  std::uint64_t seed = 1;
  std::size_t max_len = 128;
};

const std::vector<std::string>& suite_names();
// Throws ConfigError for an unknown suite.
SuiteResult run_suite(const std::string& name, const CheckOptions& opts);

// ---- reports ---------------------------------------------------------------

struct ParamRow {
  std::string config;
  ParamBreakdown counts;
  std::optional<double> expected;
  std::optional<double> tolerance_pct;
  std::string verdict;  // empty when nothing was asserted
};

struct SmokeSummary {
  std::string variant;
  SmokeOptions options;
  SmokeResult result;
  std::string verdict;
};

struct BenchReport {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_text;
  std::uint64_t config_hash = 0;
  std::string timestamp;
  std::string host;
  std::map<std::string, std::string> settings;
  std::vector<OpBench> ops;
  std::optional<EncoderBench> encoder;
  std::vector<ParamRow> params;
  std::vector<SuiteResult> suites;
  std::optional<SmokeSummary> smoke;
};

// Fills timestamp and host.
void stamp(BenchReport& report);
std::string to_json(const BenchReport& report, bool include_timing = true);
std::string to_table(const BenchReport& report);

}  // namespace confhyena::bench
