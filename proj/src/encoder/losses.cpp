// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "confhyena/encoder/model.hpp"
#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

Tensor ctc_loss(const Tensor& log_probs, std::span<const std::size_t> target) {
  if (log_probs.rank() != 2) throw DimensionError("ctc_loss: expected (T, V) log-probabilities");
  const std::size_t steps = log_probs.dim(0), vocab = log_probs.dim(1);
  std::size_t repeats = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == kBlank || target[i] >= vocab) {
      throw DimensionError("ctc_loss: target label " + std::to_string(target[i]) +
                           " is blank or outside the vocabulary");
    }
    if (i > 0 && target[i] == target[i - 1]) ++repeats;
  }
  if (steps < target.size() + repeats || steps == 0) {
    throw ContractError("ctc_loss: " + std::to_string(steps) + " frames cannot emit " +
                        std::to_string(target.size()) + " labels");
  }

  // Extended label sequence with blanks between and around the targets.
  const std::size_t states = 2 * target.size() + 1;
  std::vector<std::size_t> ext(states, kBlank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto skip_ok = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  auto lp = log_probs.data();
  auto emit = [&](std::size_t t, std::size_t s) { return lp[t * vocab + ext[s]]; };
  std::vector<double> alpha(steps * states, kNegInf), beta(steps * states, kNegInf);
  alpha[0] = emit(0, 0);
  if (states > 1) alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < steps; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double a = alpha[(t - 1) * states + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * states + s - 1]);
      if (skip_ok(s)) a = log_add(a, alpha[(t - 1) * states + s - 2]);
      alpha[t * states + s] = a == kNegInf ? kNegInf : a + emit(t, s);
    }
  }
  const std::size_t last = (steps - 1) * states;
  beta[last + states - 1] = emit(steps - 1, states - 1);
  if (states > 1) beta[last + states - 2] = emit(steps - 1, states - 2);
  for (std::size_t t = steps - 1; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double b = beta[(t + 1) * states + s];
      if (s + 1 < states) b = log_add(b, beta[(t + 1) * states + s + 1]);
      if (s + 2 < states && skip_ok(s + 2)) b = log_add(b, beta[(t + 1) * states + s + 2]);
      beta[t * states + s] = b == kNegInf ? kNegInf : b + emit(t, s);
    }
  }
  double log_p = alpha[last + states - 1];
  if (states > 1) log_p = log_add(log_p, alpha[last + states - 2]);

  return make_op({}, {-log_p}, {log_probs},
                 [alpha = std::move(alpha), beta = std::move(beta), ext = std::move(ext),
                  log_probs, steps, states, vocab, log_p](std::span<const double> g,
                                                          std::span<const GradSpan> gin) {
                   // d(-log p)/d lp[t, k] = -sum_{s: ext[s] = k} alpha_t(s) beta_t(s) / (p y_t(k)).
                   auto lp = log_probs.data();
                   std::vector<double> acc(vocab);
                   for (std::size_t t = 0; t < steps; ++t) {
                     std::fill(acc.begin(), acc.end(), kNegInf);
                     for (std::size_t s = 0; s < states; ++s) {
                       acc[ext[s]] = log_add(acc[ext[s]], alpha[t * states + s] + beta[t * states + s]);
                     }
                     for (std::size_t k = 0; k < vocab; ++k) {
                       if (acc[k] == kNegInf) continue;
                       gin[0][t * vocab + k] -= g[0] * std::exp(acc[k] - lp[t * vocab + k] - log_p);
                     }
                   }
                 });
}

Tensor label_smoothed_ce(const Tensor& logits, std::span<const std::size_t> target, double eps) {
  if (logits.rank() != 2 || logits.dim(0) != target.size()) {
    throw DimensionError("label_smoothed_ce: logits " + shape_str(logits.shape()) + " for " +
                         std::to_string(target.size()) + " targets");
  }
  const double vocab = static_cast<double>(logits.dim(1));
  const double eps_i = eps / (vocab - 1.0);
  Tensor lp = log_softmax(logits, 1);
  Tensor nll = mean(pick(lp, target));
  Tensor smooth = scale(mean(lp), vocab);
  // (1 - eps - eps_i) * nll + eps_i * sum_k(-lp_k), averaged over tokens.
  return scale(add(scale(nll, 1.0 - eps - eps_i), scale(smooth, eps_i)), -1.0);
}

LossParts joint_loss(const SpeechModel& model, const Example& ex, const RunContext& ctx) {
  const EncoderConfig& cfg = model.config();
  EncodeResult enc = model.encode(ex.features, {}, ctx);
  // CTC is normalized by target length so both terms are per-token.
  Tensor ctc = scale(ctc_loss(log_softmax(enc.ctc_logits, 1), ex.labels),
                     1.0 / static_cast<double>(std::max<std::size_t>(ex.labels.size(), 1)));
  std::vector<std::size_t> prev{kBos}, next;
  prev.insert(prev.end(), ex.labels.begin(), ex.labels.end());
  next.assign(ex.labels.begin(), ex.labels.end());
  next.push_back(kBos);
  Tensor ce = label_smoothed_ce(model.decode(prev, enc.states, ctx), next, cfg.label_smoothing);
  LossParts out;
  out.ce = ce.item();
  out.ctc = ctc.item();
  out.joint = add(ce, scale(ctc, cfg.ctc_weight));
  return out;
}

}  // namespace confhyena
