// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/encoder/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>
#include <vector>

#include "confhyena/numerics/errors.hpp"
#include "confhyena/numerics/params.hpp"

namespace confhyena {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kConformer: return "conformer";
    case Variant::kConfHyena: return "confhyena";
    case Variant::kHybrid: return "hybrid";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "conformer") return Variant::kConformer;
  if (name == "confhyena") return Variant::kConfHyena;
  if (name == "hybrid") return Variant::kHybrid;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected conformer, confhyena or hybrid)");
}

namespace {

using FieldPtr = std::variant<std::size_t EncoderConfig::*, double EncoderConfig::*,
                              bool EncoderConfig::*, Variant EncoderConfig::*>;

struct Field {
  const char* key;
  FieldPtr ptr;
};

// Order of this table is the order of to_text().
const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"variant", &EncoderConfig::variant},
      {"n_layers", &EncoderConfig::n_layers},
      {"compression_layer", &EncoderConfig::compression_layer},
      {"feature_dim", &EncoderConfig::feature_dim},
      {"downsample", &EncoderConfig::downsample},
      {"vocab_size", &EncoderConfig::vocab_size},
      {"ctc_weight", &EncoderConfig::ctc_weight},
      {"decoder_layers", &EncoderConfig::decoder_layers},
      {"model_dim", &EncoderConfig::model_dim},
      {"ffn_dim", &EncoderConfig::ffn_dim},
      {"heads", &EncoderConfig::heads},
      {"conv_kernel", &EncoderConfig::conv_kernel},
      {"dropout", &EncoderConfig::dropout},
      {"frontend_channels", &EncoderConfig::frontend_channels},
      {"frontend_kernel", &EncoderConfig::frontend_kernel},
      {"hyena_order", &EncoderConfig::hyena_order},
      {"hyena_short_kernel", &EncoderConfig::hyena_short_kernel},
      {"hyena_filter_layers", &EncoderConfig::hyena_filter_layers},
      {"hyena_filter_hidden", &EncoderConfig::hyena_filter_hidden},
      {"hyena_filter_bands", &EncoderConfig::hyena_filter_bands},
      {"hyena_filter_max_len", &EncoderConfig::hyena_filter_max_len},
      {"hyena_causal", &EncoderConfig::hyena_causal},
      {"hyena_decay", &EncoderConfig::hyena_decay},
      {"hyena_normalize", &EncoderConfig::hyena_normalize},
      {"decoder_ffn_dim", &EncoderConfig::decoder_ffn_dim},
      {"label_smoothing", &EncoderConfig::label_smoothing},
      {"drop_blank_runs", &EncoderConfig::drop_blank_runs},
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void assign(EncoderConfig& cfg, const Field& f, std::string_view value, std::size_t line) {
  auto bad = [&](const char* expected) {
    return ParseError(line, "value '" + std::string(value) + "' for " + f.key + " is not " +
                                expected);
  };
  std::visit(
      [&](auto ptr) {
        using T = std::remove_cvref_t<decltype(cfg.*ptr)>;
        if constexpr (std::is_same_v<T, std::size_t>) {
          std::size_t v = 0;
          auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
          if (ec != std::errc() || end != value.data() + value.size()) {
            throw bad("a non-negative integer");
          }
          cfg.*ptr = v;
        } else if constexpr (std::is_same_v<T, double>) {
          // from_chars for double is unavailable on some toolchains.
          std::string s(value);
          std::size_t used = 0;
          double v = 0.0;
          try {
            v = std::stod(s, &used);
          } catch (const std::exception&) {
            throw bad("a number");
          }
          if (used != s.size()) throw bad("a number");
          cfg.*ptr = v;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true") cfg.*ptr = true;
          else if (value == "false") cfg.*ptr = false;
          else throw bad("true or false");
        } else {
          try {
            cfg.*ptr = parse_variant(value);
          } catch (const ConfigError& e) {
            throw ParseError(line, e.what());
          }
        }
      },
      f.ptr);
}

}  // namespace

void EncoderConfig::validate() const {
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if (compression_layer < 1 || compression_layer > n_layers) {
    throw ConfigError("compression_layer must lie in [1, n_layers]");
  }
  if (downsample != 2 && downsample != 4) throw ConfigError("downsample must be 2 or 4");
  if (vocab_size < 4) throw ConfigError("vocab_size must leave room for blank, pad and bos");
  if (feature_dim == 0 || frontend_channels < 2 || frontend_channels % 2 != 0) {
    throw ConfigError("frontend_channels must be even and feature_dim positive");
  }
  if (frontend_kernel == 0 || frontend_kernel % 2 == 0) {
    throw ConfigError("frontend_kernel must be odd");
  }
  if (ctc_weight < 0.0) throw ConfigError("ctc_weight must be non-negative");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw ConfigError("label_smoothing must lie in [0, 1)");
  }
  if (decoder_ffn_dim == 0) throw ConfigError("decoder_ffn_dim must be positive");
  for (std::size_t i = 1; i <= n_layers; ++i) layer_spec(i).validate();
  if (decoder_layers > 0 && model_dim % heads != 0) {
    throw ConfigError("decoder model_dim not divisible by heads");
  }
}

bool EncoderConfig::layer_uses_hyena(std::size_t layer) const {
  switch (variant) {
    case Variant::kConformer: return false;
    case Variant::kConfHyena: return true;
    case Variant::kHybrid: return layer <= compression_layer;
  }
  return false;
}

LayerSpec EncoderConfig::layer_spec(std::size_t layer) const {
  LayerSpec s;
  s.model_dim = model_dim;
  s.ffn_dim = ffn_dim;
  s.heads = heads;
  s.conv_kernel = conv_kernel;
  s.dropout = dropout;
  s.mixer = layer_uses_hyena(layer) ? MixerKind::kHyena : MixerKind::kAttention;
  s.hyena.order = hyena_order;
  s.hyena.model_dim = model_dim;
  s.hyena.width_multiplier = hyena_order + 1;
  s.hyena.short_kernel = hyena_short_kernel;
  s.hyena.filter_layers = hyena_filter_layers;
  s.hyena.filter_hidden = hyena_filter_hidden;
  s.hyena.filter_bands = hyena_filter_bands;
  s.hyena.filter_max_len = hyena_filter_max_len;
  s.hyena.causal = hyena_causal;
  s.hyena.decay_window = hyena_decay;
  s.hyena.normalize_kernels = hyena_normalize;
  return s;
}

std::string EncoderConfig::to_text() const {
  std::ostringstream os;
  for (const Field& f : fields()) {
    os << f.key << " = ";
    std::visit(
        [&](auto ptr) {
          using T = std::remove_cvref_t<decltype(this->*ptr)>;
          if constexpr (std::is_same_v<T, std::size_t>) os << this->*ptr;
          else if constexpr (std::is_same_v<T, double>) os << format_double(this->*ptr);
          else if constexpr (std::is_same_v<T, bool>) os << (this->*ptr ? "true" : "false");
          else os << variant_name(this->*ptr);
        },
        f.ptr);
    os << '\n';
  }
  return os.str();
}

std::uint64_t EncoderConfig::hash() const { return fnv1a(to_text()); }

EncoderConfig EncoderConfig::preset(Variant v) {
  EncoderConfig c;
  c.variant = v;
  return c;
}

EncoderConfig EncoderConfig::miniature(Variant v) {
  EncoderConfig c;
  c.variant = v;
  c.n_layers = 2;
  c.compression_layer = 1;
  c.feature_dim = 12;
  c.vocab_size = 12;
  c.decoder_layers = 1;
  c.model_dim = 16;
  c.ffn_dim = 32;
  c.heads = 2;
  c.conv_kernel = 5;
  c.dropout = 0.0;
  c.frontend_channels = 32;
  c.frontend_kernel = 3;
  c.hyena_filter_hidden = 16;
  c.hyena_filter_bands = 4;
  c.hyena_filter_max_len = 64;
  c.decoder_ffn_dim = 32;
  return c;
}

EncoderConfig parse_config(std::string_view text) {
  EncoderConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(line_no, "expected 'key = value'");
    const Field* field = nullptr;
    for (const Field& f : fields())
      if (key == f.key) field = &f;
    if (!field) throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
    if (!seen.emplace(key).second) {
      throw ParseError(line_no, "duplicate key '" + std::string(key) + "'");
    }
    assign(cfg, *field, value, line_no);
  }
  cfg.validate();
  return cfg;
}

EncoderConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace confhyena
