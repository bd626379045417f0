// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

// confhyena: property checks, scaling benchmarks, parameter counts and smoke
// training. Exit status: 0 pass, 1 property failure, 2 usage or config error.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "confhyena/bench/bench.hpp"
#include "confhyena/numerics/errors.hpp"

namespace {

using namespace confhyena;
using namespace confhyena::bench;

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "table";
  bool omit_wallclock = false;
};

struct CheckArgs {
  std::string suite = "all";
  std::size_t max_len = 128;
};

struct BenchArgs {
  std::string op;
  std::vector<std::size_t> lengths{512, 1024, 2048, 4096, 8192};
  std::size_t repeats = 5;
  std::size_t warmup = 3;
  std::size_t model_dim = 256;
  std::size_t heads = 4;
  std::vector<std::string> variants;
  std::size_t input_length = 3072;
  std::size_t ratio = 4;
  std::vector<std::size_t> downsamples{4};
  bool forward_only = false;
  bool include_frontend = false;
};

struct ParamsArgs {
  std::vector<std::string> configs;
  std::vector<std::string> variants;
  std::optional<double> expect;
  double tol = 5.0;
};

struct SmokeArgs {
  std::string variant = "hybrid";
  std::string config;
  std::size_t steps = 200;
  double lr = 0.05;
  std::size_t examples = 8;
  std::string curve;
};

std::string join(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void emit(const Globals& g, BenchReport& report) {
  if (!g.omit_wallclock) stamp(report);
  const std::string text =
      g.format == "json" ? to_json(report, !g.omit_wallclock) : to_table(report);
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(g.out);
  if (!f) throw ConfigError("cannot write report to " + g.out);
  f << text;
  // Keep a short verdict on the terminal when the report goes to a file.
  if (g.format == "json") std::cout << "report written to " << g.out << "\n";
}

int run_check(const Globals& g, const CheckArgs& a) {
  BenchReport report;
  report.command = "check";
  report.seed = g.seed;
  report.settings = {{"suite", a.suite}, {"max_len", std::to_string(a.max_len)}};
  CheckOptions opts{g.seed, a.max_len};
  std::vector<std::string> names;
  if (a.suite == "all") names = suite_names();
  else names.push_back(a.suite);
  bool ok = true;
  for (const auto& n : names) {
    report.suites.push_back(run_suite(n, opts));
    ok = ok && report.suites.back().passed();
  }
  emit(g, report);
  return ok ? kPass : kFail;
}

int run_bench(const Globals& g, const BenchArgs& a) {
  BenchReport report;
  report.command = "bench";
  report.seed = g.seed;
  const TimingOptions timing{a.warmup, a.repeats};
  report.settings = {{"op", a.op},
                     {"repeats", std::to_string(a.repeats)},
                     {"warmup", std::to_string(a.warmup)}};
  if (a.op == "attention" || a.op == "hyena") {
    OpBenchOptions o;
    o.lengths = a.lengths;
    o.model_dim = a.model_dim;
    o.heads = a.heads;
    o.timing = timing;
    o.seed = g.seed;
    report.settings["lengths"] = join(a.lengths);
    report.settings["model_dim"] = std::to_string(a.model_dim);
    if (a.op == "attention") report.settings["heads"] = std::to_string(a.heads);
    report.ops.push_back(a.op == "attention" ? bench_attention(o) : bench_hyena(o));
  } else {
    EncoderBenchOptions o;
    o.input_length = a.input_length;
    o.compression_ratio = a.ratio;
    o.downsamples = a.downsamples;
    if (!a.variants.empty()) {
      o.variants.clear();
      for (const auto& v : a.variants) o.variants.push_back(parse_variant(v));
    }
    o.model_dim = a.model_dim;
    o.heads = a.heads;
    o.backward = !a.forward_only;
    o.include_frontend = a.include_frontend;
    o.timing = timing;
    o.seed = g.seed;
    report.settings["input_length"] = std::to_string(a.input_length);
    report.settings["compression_ratio"] = std::to_string(a.ratio);
    report.settings["downsample"] = join(a.downsamples);
    report.settings["pass"] = a.forward_only ? "forward" : "forward+backward";
    report.settings["timed"] = a.include_frontend ? "frontend+encoder" : "encoder";
    report.encoder = bench_encoder(o);
    report.config_text = report.encoder->base.to_text();
    report.config_hash = report.encoder->base.hash();
  }
  emit(g, report);
  return kPass;
}

int run_params(const Globals& g, const ParamsArgs& a) {
  BenchReport report;
  report.command = "params";
  report.seed = g.seed;
  std::vector<std::pair<std::string, EncoderConfig>> configs;
  for (const auto& path : a.configs) configs.emplace_back(path, load_config(path));
  for (const auto& v : a.variants) configs.emplace_back(v, EncoderConfig::preset(parse_variant(v)));
  if (configs.empty()) {
    for (Variant v : {Variant::kConformer, Variant::kConfHyena, Variant::kHybrid}) {
      configs.emplace_back(std::string(variant_name(v)), EncoderConfig::preset(v));
    }
  }
  if (a.expect && configs.size() != 1) throw ConfigError("--expect needs exactly one config");
  if (configs.size() == 1) {
    report.config_text = configs.front().second.to_text();
    report.config_hash = configs.front().second.hash();
  }
  bool ok = true;
  for (auto& [name, cfg] : configs) {
    ParamRow row;
    row.config = name;
    row.counts = count_params(cfg);
    if (a.expect) {
      row.expected = *a.expect;
      row.tolerance_pct = a.tol;
      const double dev = std::abs(static_cast<double>(row.counts.total()) - *a.expect) / *a.expect;
      row.verdict = dev * 100.0 <= a.tol ? "pass" : "fail";
      ok = ok && row.verdict == "pass";
    }
    report.params.push_back(row);
  }
  report.settings["tolerance_pct"] = std::to_string(a.tol);
  emit(g, report);
  return ok ? kPass : kFail;
}

int run_smoke(const Globals& g, const SmokeArgs& a) {
  if (a.steps == 0) throw ConfigError("--steps must be at least 1");
  const EncoderConfig cfg =
      a.config.empty() ? EncoderConfig::miniature(parse_variant(a.variant)) : load_config(a.config);
  SmokeOptions opts;
  opts.steps = a.steps;
  opts.learning_rate = a.lr;
  opts.examples = a.examples;
  opts.seed = g.seed;
  SmokeSummary s;
  s.variant = std::string(variant_name(cfg.variant));
  s.options = opts;
  s.result = smoke_train(cfg, opts);
  s.verdict = !s.result.diverged && s.result.ratio() < 0.7 ? "pass" : "fail";
  if (!a.curve.empty()) {
    std::ofstream f(a.curve);
    if (!f) throw ConfigError("cannot write curve to " + a.curve);
    f << "step,loss\n";
    f.precision(17);
    for (std::size_t i = 0; i < s.result.losses.size(); ++i) f << i << "," << s.result.losses[i] << "\n";
  }
  BenchReport report;
  report.command = "train-smoke";
  report.seed = g.seed;
  report.config_text = cfg.to_text();
  report.config_hash = cfg.hash();
  report.smoke = s;
  emit(g, report);
  return s.verdict == "pass" ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyena and Conformer kernel checks and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random draw")->capture_default_str();
  app.add_option("--out", g.out, "Write the report to this path");
  app.add_option("--format", g.format, "Report format")
      ->check(CLI::IsMember({"table", "json"}))
      ->capture_default_str();
  app.add_flag("--omit-wallclock", g.omit_wallclock,
               "Leave timestamps, host and timings out of the report");

  const std::vector<std::string> variant_names{"conformer", "confhyena", "hybrid"};

  CheckArgs check;
  auto* c = app.add_subcommand("check", "Run property suites");
  std::vector<std::string> suites = suite_names();
  suites.push_back("all");
  c->add_option("--suite", check.suite)->check(CLI::IsMember(suites))->capture_default_str();
  c->add_option("--max-len", check.max_len, "Largest sequence length")
      ->check(CLI::Range(2, 1 << 14))
      ->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time operators or whole encoders");
  b->add_option("--op", bench.op)->required()->check(CLI::IsMember({"attention", "hyena", "encoder"}));
  b->add_option("--lengths", bench.lengths, "Sequence lengths, increasing")->delimiter(',');
  b->add_option("--repeats", bench.repeats)->check(CLI::Range(3, 1000))->capture_default_str();
  b->add_option("--warmup", bench.warmup)->check(CLI::Range(3, 1000))->capture_default_str();
  b->add_option("--model-dim", bench.model_dim)->capture_default_str();
  b->add_option("--heads", bench.heads)->capture_default_str();
  b->add_option("--variant", bench.variants, "Encoder variants (default: all)")
      ->check(CLI::IsMember(variant_names))
      ->delimiter(',');
  b->add_option("--input-length", bench.input_length, "Encoder input frames")->capture_default_str();
  b->add_option("--ratio", bench.ratio, "Forced compression ratio")->capture_default_str();
  b->add_option("--downsample", bench.downsamples)
      ->check(CLI::IsMember({2, 4}))
      ->delimiter(',');
  b->add_flag("--forward-only", bench.forward_only, "Skip the backward pass");
  b->add_flag("--include-frontend", bench.include_frontend, "Time the frontend as well");

  ParamsArgs params;
  auto* p = app.add_subcommand("params", "Count parameters");
  p->add_option("--config", params.configs, "Config file")->check(CLI::ExistingFile);
  p->add_option("--variant", params.variants, "Full-size preset")->check(CLI::IsMember(variant_names));
  p->add_option("--expect", params.expect, "Expected total");
  p->add_option("--tol", params.tol, "Tolerance in percent")->capture_default_str();

  SmokeArgs smoke;
  auto* s = app.add_subcommand("train-smoke", "Short training run on the synthetic task");
  s->add_option("--variant", smoke.variant)->check(CLI::IsMember(variant_names))->capture_default_str();
  s->add_option("--config", smoke.config, "Config file (default: miniature preset)")
      ->check(CLI::ExistingFile);
  s->add_option("--steps", smoke.steps)->capture_default_str();
  s->add_option("--lr", smoke.lr)->capture_default_str();
  s->add_option("--examples", smoke.examples)->capture_default_str();
  s->add_option("--curve", smoke.curve, "Write the loss curve as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (c->parsed()) return run_check(g, check);
    if (b->parsed()) return run_bench(g, bench);
    if (p->parsed()) return run_params(g, params);
    if (s->parsed()) return run_smoke(g, smoke);
  } catch (const ParseError& e) {
    std::cerr << "error: config " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
