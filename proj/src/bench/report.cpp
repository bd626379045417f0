// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "confhyena/bench/bench.hpp"

namespace confhyena::bench {

namespace {

using nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ordered_json point_json(const TimingPoint& p, bool timing) {
  ordered_json j;
  j["length"] = p.length;
  j["repeats"] = p.repeats;
  j["skipped"] = p.skipped;
  if (timing && !p.skipped) {
    j["median_s"] = p.median_s;
    j["mad_s"] = p.mad_s;
  }
  if (!p.note.empty()) j["note"] = p.note;
  return j;
}

ordered_json fit_json(const ScalingFit& f, bool timing) {
  ordered_json j;
  j["valid"] = f.valid;
  j["points"] = f.points;
  if (timing && f.valid) {
    j["exponent"] = f.exponent;
    j["intercept"] = f.intercept;
    j["residual"] = f.residual;
  }
  return j;
}

ordered_json counts_json(const ParamBreakdown& c) {
  return {{"frontend", c.frontend}, {"encoder", c.encoder}, {"ctc", c.ctc},
          {"decoder", c.decoder},   {"embeddings", c.embeddings}, {"total", c.total()}};
}

std::string fixed(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

}  // namespace

void stamp(BenchReport& report) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  report.timestamp = os.str();
  char host[256] = {0};
  if (gethostname(host, sizeof(host) - 1) != 0) host[0] = '\0';
  std::ostringstream h;
  h << (host[0] ? host : "unknown") << " (" << sysconf(_SC_NPROCESSORS_ONLN) << " cpus)";
  report.host = h.str();
}

std::string to_json(const BenchReport& r, bool include_timing) {
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["command"] = r.command;
  j["seed"] = r.seed;
  if (include_timing) {
    j["timestamp"] = r.timestamp;
    j["host"] = r.host;
  }
  if (!r.config_text.empty()) {
    j["config_hash"] = hex64(r.config_hash);
    j["config"] = r.config_text;
  }
  j["settings"] = r.settings;
  if (!r.ops.empty()) {
    ordered_json ops = ordered_json::array();
    for (const auto& op : r.ops) {
      ordered_json o;
      o["op"] = op.op;
      o["points"] = ordered_json::array();
      for (const auto& p : op.points) o["points"].push_back(point_json(p, include_timing));
      o["fit"] = fit_json(op.fit, include_timing);
      ops.push_back(std::move(o));
    }
    j["ops"] = std::move(ops);
  }
  if (r.encoder) {
    ordered_json e;
    e["config"] = r.encoder->base.to_text();
    e["timings"] = ordered_json::array();
    for (const auto& t : r.encoder->timings) {
      ordered_json row;
      row["variant"] = std::string(variant_name(t.variant));
      row["downsample"] = t.downsample;
      row["point"] = point_json(t.point, include_timing);
      e["timings"].push_back(std::move(row));
    }
    if (include_timing) e["ratios"] = r.encoder->ratios;
    j["encoder"] = std::move(e);
  }
  if (!r.params.empty()) {
    ordered_json rows = ordered_json::array();
    for (const auto& p : r.params) {
      ordered_json row;
      row["config"] = p.config;
      row["counts"] = counts_json(p.counts);
      if (p.expected) row["expected"] = *p.expected;
      if (p.tolerance_pct) row["tolerance_pct"] = *p.tolerance_pct;
      if (!p.verdict.empty()) row["verdict"] = p.verdict;
      rows.push_back(std::move(row));
    }
    j["params"] = std::move(rows);
  }
  if (!r.suites.empty()) {
    ordered_json suites = ordered_json::array();
    for (const auto& s : r.suites) {
      ordered_json so;
      so["suite"] = s.name;
      so["verdict"] = s.passed() ? "pass" : "fail";
      so["cases"] = ordered_json::array();
      for (const auto& c : s.cases) {
        so["cases"].push_back({{"name", c.name},
                               {"verdict", c.verdict},
                               {"metric", c.metric},
                               {"tolerance", c.tolerance},
                               {"detail", c.detail}});
      }
      suites.push_back(std::move(so));
    }
    j["suites"] = std::move(suites);
  }
  if (r.smoke) {
    const auto& s = *r.smoke;
    ordered_json so;
    so["variant"] = s.variant;
    so["steps"] = s.options.steps;
    so["learning_rate"] = s.options.learning_rate;
    so["examples"] = s.options.examples;
    so["initial_loss"] = s.result.losses.empty() ? 0.0 : s.result.losses.front();
    so["final_loss"] = s.result.losses.empty() ? 0.0 : s.result.losses.back();
    so["ratio"] = s.result.ratio();
    so["initial_grad_norm"] = s.result.initial_grad_norm;
    so["diverged"] = s.result.diverged;
    if (s.result.diverged) so["diverged_step"] = s.result.diverged_step;
    so["verdict"] = s.verdict;
    j["smoke"] = std::move(so);
  }
  return j.dump(2) + "\n";
}

std::string to_table(const BenchReport& r) {
  std::ostringstream os;
  os << "confhyena " << r.command << "  seed=" << r.seed;
  if (!r.config_text.empty()) os << "  config=" << hex64(r.config_hash);
  os << "\n";
  if (!r.timestamp.empty()) os << r.timestamp << "  " << r.host << "\n";
  for (const auto& [k, v] : r.settings) os << "  " << k << ": " << v << "\n";
  for (const auto& op : r.ops) {
    os << "\n" << op.op << "\n  " << std::setw(8) << "length" << std::setw(14) << "median_s"
       << std::setw(14) << "mad_s" << "\n";
    for (const auto& p : op.points) {
      os << "  " << std::setw(8) << p.length;
      if (p.skipped) os << "  skipped (" << p.note << ")\n";
      else os << std::setw(14) << fixed(p.median_s, 6) << std::setw(14) << fixed(p.mad_s, 6) << "\n";
    }
    if (op.fit.valid) {
      os << "  exponent " << fixed(op.fit.exponent, 3) << "  residual " << fixed(op.fit.residual, 4)
         << "  over " << op.fit.points << " points\n";
    } else {
      os << "  exponent unavailable\n";
    }
  }
  if (r.encoder) {
    os << "\nencoder forward+backward\n";
    for (const auto& t : r.encoder->timings) {
      os << "  " << std::setw(10) << variant_name(t.variant) << "  ds" << t.downsample << "  ";
      if (t.point.skipped) os << "skipped (" << t.point.note << ")\n";
      else os << fixed(t.point.median_s, 4) << " s  mad " << fixed(t.point.mad_s, 4) << "\n";
    }
    for (const auto& [k, v] : r.encoder->ratios) os << "  " << k << " = " << fixed(v, 3) << "\n";
  }
  if (!r.params.empty()) {
    os << "\n" << std::setw(12) << "config" << std::setw(12) << "frontend" << std::setw(12)
       << "encoder" << std::setw(10) << "ctc" << std::setw(12) << "decoder" << std::setw(12)
       << "embed" << std::setw(13) << "total" << "\n";
    for (const auto& p : r.params) {
      os << std::setw(12) << p.config << std::setw(12) << p.counts.frontend << std::setw(12)
         << p.counts.encoder << std::setw(10) << p.counts.ctc << std::setw(12) << p.counts.decoder
         << std::setw(12) << p.counts.embeddings << std::setw(13) << p.counts.total();
      if (p.expected) {
        const double dev = 100.0 * (static_cast<double>(p.counts.total()) - *p.expected) / *p.expected;
        os << "  expected " << fixed(*p.expected, 0) << " (" << (dev >= 0 ? "+" : "") << fixed(dev, 2)
           << "%)";
      }
      if (!p.verdict.empty()) os << "  " << p.verdict;
      os << "\n";
    }
  }
  for (const auto& s : r.suites) {
    os << "\nsuite " << s.name << ": " << (s.passed() ? "pass" : "fail") << "\n";
    for (const auto& c : s.cases) {
      os << "  " << std::setw(7) << std::left << c.verdict << std::right << " " << c.name
         << "  metric " << std::scientific << std::setprecision(3) << c.metric << " tol "
         << c.tolerance << std::defaultfloat;
      if (!c.detail.empty()) os << "  (" << c.detail << ")";
      os << "\n";
    }
  }
  if (r.smoke) {
    const auto& s = *r.smoke;
    os << "\nsmoke " << s.variant << ": " << s.result.losses.size() - 1 << " steps, loss "
       << fixed(s.result.losses.front(), 4) << " -> " << fixed(s.result.losses.back(), 4)
       << " (ratio " << fixed(s.result.ratio(), 3) << ")";
    if (s.result.diverged) os << "  diverged at step " << s.result.diverged_step;
    os << "  " << s.verdict << "\n";
  }
  return os.str();
}

}  // namespace confhyena::bench
