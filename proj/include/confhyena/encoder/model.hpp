// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "confhyena/conformer/conformer.hpp"
#include "confhyena/encoder/config.hpp"
#include "confhyena/numerics/params.hpp"
#include "confhyena/numerics/tensor.hpp"

namespace confhyena {

inline constexpr std::size_t kBlank = 0;
inline constexpr std::size_t kPad = 1;
inline constexpr std::size_t kBos = 2;  // also end of sentence

// Output length of the frontend for `len` input frames.
std::size_t frontend_length(std::size_t len, std::size_t downsample);

/// Two strided GLU convolutions over time followed by a projection to
/// model_dim. downsample 4 uses strides (2, 2); downsample 2 uses (1, 2).
class Frontend {
 public:
  Frontend(ParamStore& store, const std::string& prefix, const EncoderConfig& cfg);
  // features (L, feature_dim) -> (frontend_length(L), model_dim). Padded
  // input frames must form a suffix; `out_mask` receives the output mask.
  Tensor forward(const Tensor& features, const PadMask& mask, PadMask* out_mask = nullptr) const;

 private:
  ParamStore* store_;
  std::size_t downsample_, kernel_;
  ParamRef c1_w_, c1_b_, c2_w_, c2_b_, proj_w_, proj_b_;
};

/// Frames [first, second) of the input were merged into output frame i.
struct CompressionMap {
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  // Per-group argmax label.
  std::vector<std::size_t> labels;
  // Groups left out of the output (blank runs when dropping is enabled).
  std::vector<bool> dropped;

  std::size_t input_length() const { return groups.empty() ? 0 : groups.back().second; }
  std::size_t output_length() const;
};

// Maximal runs of equal labels over the whole sequence.
CompressionMap runs_of(std::span<const std::size_t> labels);
std::vector<std::size_t> argmax_rows(const Tensor& logits);

/// Merges consecutive frames with the same argmax label into their mean.
std::pair<Tensor, CompressionMap> ctc_compress(const Tensor& states, const Tensor& logits,
                                               bool drop_blank_runs = false);
// Merge by an explicit map (groups must partition the rows of `states`).
Tensor apply_compression(const Tensor& states, const CompressionMap& map);
// Fixed groups of `ratio` frames, the last one possibly shorter.
CompressionMap uniform_compression(std::size_t len, std::size_t ratio);

struct EncodeOptions {
  // Replaces the argmax grouping with uniform groups of this many frames.
  std::optional<std::size_t> forced_ratio;
};

struct EncodeResult {
  Tensor states;      // (compressed_length, model_dim), real frames only
  Tensor ctc_logits;  // (frontend_length, vocab) for the real frames
  CompressionMap map;
  std::size_t frontend_length = 0;
  std::size_t compressed_length = 0;
};

/// Frontend, encoder stack with CTC compression, and a small post-norm
/// Transformer decoder with tied input/output embeddings.
class SpeechModel {
 public:
  explicit SpeechModel(const EncoderConfig& cfg);

  const EncoderConfig& config() const noexcept { return cfg_; }
  ParamStore& params() noexcept { return store_; }
  const ParamStore& params() const noexcept { return store_; }
  void materialize(std::uint64_t seed) { store_.materialize(seed); }

  EncodeResult encode(const Tensor& features, const PadMask& mask = {},
                      const RunContext& ctx = {}, const EncodeOptions& opts = {}) const;
  // Encoder layers, CTC projection and compression applied to frontend output
  // (L, model_dim) whose padded rows form a suffix.
  EncodeResult encode_stack(const Tensor& frontend_out, const PadMask& mask = {},
                            const RunContext& ctx = {}, const EncodeOptions& opts = {}) const;
  // Teacher-forced decoder logits (T, vocab) for decoder inputs `prev`.
  Tensor decode(std::span<const std::size_t> prev, const Tensor& memory,
                const RunContext& ctx = {}) const;

  const EncoderLayer& layer(std::size_t i) const { return *layers_.at(i - 1); }
  const Frontend& frontend() const noexcept { return frontend_; }

 private:
  struct DecoderLayer {
    std::unique_ptr<MultiHeadAttention> self_attn, cross_attn;
    ParamRef ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b, w1, b1, w2, b2;
  };

  EncoderConfig cfg_;
  ParamStore store_;
  Frontend frontend_;
  std::vector<std::unique_ptr<EncoderLayer>> layers_;
  ParamRef ctc_w_, ctc_b_;
  ParamRef embed_;
  std::vector<DecoderLayer> decoder_;
};

struct ParamBreakdown {
  std::size_t frontend = 0, encoder = 0, ctc = 0, decoder = 0, embeddings = 0;
  std::size_t total() const { return frontend + encoder + ctc + decoder + embeddings; }
};

// Counts trainable scalars without allocating weights.
ParamBreakdown count_params(const EncoderConfig& cfg);

/// -log p(target | log_probs) under CTC with blank 0. log_probs (T, V) must
/// be log-softmax outputs. Throws ContractError if T is too short for the
/// target.
Tensor ctc_loss(const Tensor& log_probs, std::span<const std::size_t> target);

// Mean label-smoothed cross-entropy over rows of logits (T, V).
Tensor label_smoothed_ce(const Tensor& logits, std::span<const std::size_t> target, double eps);

struct Example {
  Tensor features;
  std::vector<std::size_t> labels;  // no bos/eos, values >= 3
};

struct LossParts {
  Tensor joint;
  double ce = 0.0, ctc = 0.0;
};

// CE + ctc_weight * CTC for one example.
LossParts joint_loss(const SpeechModel& model, const Example& ex, const RunContext& ctx = {});

/// Synthetic tagging task: each label becomes a run of frames drawn around a
/// per-label mean; label sequences follow a fixed successor grammar.
std::vector<Example> synthetic_task(const EncoderConfig& cfg, std::size_t examples,
                                    std::uint64_t seed);

struct SmokeOptions {
  std::size_t steps = 200;
  double learning_rate = 0.05;
  std::size_t examples = 8;
  std::uint64_t seed = 1;
};

struct SmokeResult {
  std::vector<double> losses;  // joint loss before each step, then the final loss
  double initial_grad_norm = 0.0;
  bool diverged = false;
  std::size_t diverged_step = 0;

  double ratio() const { return losses.empty() ? 0.0 : losses.back() / losses.front(); }
};

// Full-batch gradient descent over a fixed synthetic pool.
SmokeResult smoke_train(const EncoderConfig& cfg, const SmokeOptions& opts);

// Binary checkpoint with a format version, the config hash and named blocks.
void save_checkpoint(const SpeechModel& model, const std::string& path);
// Throws ParseError for a corrupt file and ConfigError for a config mismatch.
void load_checkpoint(SpeechModel& model, const std::string& path);

}  // namespace confhyena
