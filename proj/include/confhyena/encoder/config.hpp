// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "confhyena/conformer/conformer.hpp"

namespace confhyena {

enum class Variant { kConformer, kConfHyena, kHybrid };

std::string_view variant_name(Variant v);
// Throws ConfigError for unknown names.
Variant parse_variant(std::string_view name);

/// Full architecture description. The text form (`key = value` per line,
/// `#` comments) uses the field names below verbatim.
struct EncoderConfig {
  Variant variant = Variant::kConformer;
  std::size_t n_layers = 12;
  std::size_t compression_layer = 8;
  std::size_t feature_dim = 80;
  std::size_t downsample = 4;
  std::size_t vocab_size = 8000;
  double ctc_weight = 0.5;
  std::size_t decoder_layers = 6;

  std::size_t model_dim = 512;
  std::size_t ffn_dim = 2048;
  std::size_t heads = 8;
  std::size_t conv_kernel = 31;
  double dropout = 0.1;

  // Convolutional frontend: two GLU convolutions with this many channels
  // before gating and this kernel size.
  std::size_t frontend_channels = 1024;
  std::size_t frontend_kernel = 5;

  std::size_t hyena_order = 2;
  std::size_t hyena_short_kernel = 3;
  std::size_t hyena_filter_layers = 4;
  std::size_t hyena_filter_hidden = 64;
  std::size_t hyena_filter_bands = 8;
  std::size_t hyena_filter_max_len = 2048;
  bool hyena_causal = false;
  bool hyena_decay = true;
  bool hyena_normalize = true;

  std::size_t decoder_ffn_dim = 2048;
  double label_smoothing = 0.1;
  bool drop_blank_runs = false;

  void validate() const;
  // Layer i (1-based) of the encoder stack.
  LayerSpec layer_spec(std::size_t layer) const;
  bool layer_uses_hyena(std::size_t layer) const;

  std::string to_text() const;
  // Stable hash of to_text().
  std::uint64_t hash() const;

  static EncoderConfig preset(Variant v);
  // Small model used by smoke training and the tests.
  static EncoderConfig miniature(Variant v);
};

// Throws ParseError (with line number) on malformed lines, unknown keys or
// bad values, and ConfigError if the result fails validate().
EncoderConfig parse_config(std::string_view text);
EncoderConfig load_config(const std::string& path);

}  // namespace confhyena
