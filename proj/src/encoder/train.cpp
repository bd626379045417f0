// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <random>
#include <vector>

#include "confhyena/encoder/model.hpp"
#include "confhyena/numerics/errors.hpp"

namespace confhyena {

std::vector<Example> synthetic_task(const EncoderConfig& cfg, std::size_t examples,
                                    std::uint64_t seed) {
  const std::size_t labels = cfg.vocab_size - 3;
  const std::size_t dim = cfg.feature_dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> centers(labels, std::vector<double>(dim));
  for (auto& c : centers)
    for (double& v : c) v = gauss(rng);

  std::uniform_int_distribution<std::size_t> first(0, labels - 1), count(2, 4), run(6, 10),
      step(1, 2);
  std::vector<Example> out;
  for (std::size_t e = 0; e < examples; ++e) {
    // Successor grammar: each label advances the previous one by 1 or 2.
    std::vector<std::size_t> seq{first(rng)};
    const std::size_t n = count(rng);
    while (seq.size() < n) seq.push_back((seq.back() + step(rng)) % labels);
    std::vector<double> frames;
    for (std::size_t lab : seq) {
      const std::size_t len = run(rng) * cfg.downsample / 4;
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t j = 0; j < dim; ++j) frames.push_back(centers[lab][j] + 0.5 * gauss(rng));
    }
    Example ex;
    const std::size_t rows = frames.size() / dim;
    ex.features = Tensor::from_data({rows, dim}, std::move(frames));
    for (std::size_t lab : seq) ex.labels.push_back(lab + 3);
    out.push_back(std::move(ex));
  }
  return out;
}

SmokeResult smoke_train(const EncoderConfig& cfg, const SmokeOptions& opts) {
  if (opts.steps == 0) throw ConfigError("smoke training needs at least one step");
  if (opts.examples == 0) throw ConfigError("smoke training needs at least one example");
  SpeechModel model(cfg);
  model.materialize(opts.seed);
  ParamStore& params = model.params();
  params.set_requires_grad(true);
  const auto pool = synthetic_task(cfg, opts.examples, opts.seed + 1);
  std::mt19937_64 rng(opts.seed + 2);
  RunContext ctx{true, &rng};

  SmokeResult result;
  auto evaluate = [&](bool with_grad) {
    Tensor total;
    for (const Example& ex : pool) {
      Tensor l = joint_loss(model, ex, ctx).joint;
      total = total.defined() ? add(total, l) : l;
    }
    total = scale(total, 1.0 / static_cast<double>(pool.size()));
    if (with_grad) {
      params.zero_grad();
      backward(total);
    }
    return total.item();
  };

  for (std::size_t step = 0; step < opts.steps; ++step) {
    const double loss = evaluate(true);
    result.losses.push_back(loss);
    if (!std::isfinite(loss)) {
      result.diverged = true;
      result.diverged_step = step;
      return result;
    }
    if (step == 0) result.initial_grad_norm = params.grad_norm();
    params.sgd_step(opts.learning_rate);
  }
  const double final_loss = evaluate(false);
  result.losses.push_back(final_loss);
  if (!std::isfinite(final_loss)) {
    result.diverged = true;
    result.diverged_step = opts.steps;
  }
  return result;
}

}  // namespace confhyena
