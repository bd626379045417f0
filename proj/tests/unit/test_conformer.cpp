// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "confhyena/conformer/conformer.hpp"
#include "confhyena/numerics/errors.hpp"
#include "confhyena/numerics/grad_check.hpp"

using namespace confhyena;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& rng) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from_data(std::move(shape), oracle::gaussian(n, rng));
}

LayerSpec small_layer(MixerKind mixer) {
  LayerSpec s;
  s.model_dim = 8;
  s.ffn_dim = 12;
  s.heads = 2;
  s.conv_kernel = 3;
  s.dropout = 0.0;
  s.mixer = mixer;
  s.hyena.filter_hidden = 8;
  s.hyena.filter_bands = 3;
  s.hyena.filter_layers = 3;
  s.hyena.filter_max_len = 64;
  return s;
}

void fill(ParamStore& s, const std::string& name, double v) {
  for (double& x : s.find(name).mutable_data()) x = v;
}

std::vector<double> ln_rows(const std::vector<double>& x, std::size_t rows, std::size_t d) {
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < rows; ++t) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < d; ++c) m += x[t * d + c] / static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) v += (x[t * d + c] - m) * (x[t * d + c] - m) / static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) y[t * d + c] = (x[t * d + c] - m) / std::sqrt(v + 1e-5);
  }
  return y;
}

}  // namespace

TEST_SUITE("feed_forward") {
  TEST_CASE("half-step residual of a swish MLP on normalized input") {
    std::mt19937_64 rng(41);
    ParamStore s;
    FeedForward ffn(s, "f", 4, 6);
    s.materialize(2);
    const Tensor x = rand_tensor({3, 4}, rng);
    const Tensor y = macaron_ffn(ffn, x);
    const auto w1 = s.find("f.fc1.weight").to_vector(), b1 = s.find("f.fc1.bias").to_vector();
    const auto w2 = s.find("f.fc2.weight").to_vector(), b2 = s.find("f.fc2.bias").to_vector();
    const auto h = ln_rows(x.to_vector(), 3, 4);
    for (std::size_t t = 0; t < 3; ++t) {
      std::vector<double> a(6);
      for (std::size_t o = 0; o < 6; ++o) {
        double acc = b1[o];
        for (std::size_t i = 0; i < 4; ++i) acc += w1[o * 4 + i] * h[t * 4 + i];
        a[o] = acc / (1.0 + std::exp(-acc));
      }
      for (std::size_t o = 0; o < 4; ++o) {
        double acc = b2[o];
        for (std::size_t i = 0; i < 6; ++i) acc += w2[o * 6 + i] * a[i];
        CHECK(y.at(t, o) == doctest::Approx(x.at(t, o) + 0.5 * acc).epsilon(1e-12));
      }
    }
    CHECK(ffn.param_count() == oracle::ffn_params(4, 6));
  }

  TEST_CASE("zeroed output projection leaves the residual path") {
    std::mt19937_64 rng(42);
    ParamStore s;
    FeedForward ffn(s, "f", 4, 6);
    s.materialize(3);
    fill(s, "f.fc2.weight", 0.0);
    fill(s, "f.fc2.bias", 0.0);
    const Tensor x = rand_tensor({5, 4}, rng);
    CHECK(macaron_ffn(ffn, x).to_vector() == x.to_vector());
  }
}

TEST_SUITE("conv_module") {
  TEST_CASE("zeroed last pointwise convolution leaves the residual path") {
    std::mt19937_64 rng(43);
    ParamStore s;
    ConvModule conv(s, "c", 4, 5);
    s.materialize(4);
    fill(s, "c.pointwise2.weight", 0.0);
    fill(s, "c.pointwise2.bias", 0.0);
    const Tensor x = rand_tensor({6, 4}, rng);
    CHECK(conv_module(conv, x, {}).to_vector() == x.to_vector());
    CHECK(conv.param_count() == oracle::conv_module_params(4, 5));
    CHECK(s.count() == conv.param_count());
  }

  TEST_CASE("eval mode matches a loop-based rebuild") {
    std::mt19937_64 rng(44);
    ParamStore s;
    const std::size_t d = 4, k = 3, len = 6;
    ConvModule conv(s, "c", d, k);
    s.materialize(5);
    const Tensor x = rand_tensor({len, d}, rng);
    auto v = [&](const char* n) { return s.find(std::string("c.") + n).to_vector(); };
    const auto h = ln_rows(x.to_vector(), len, d);
    const auto w1 = v("pointwise1.weight"), b1 = v("pointwise1.bias");
    std::vector<double> g(len * d);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t o = 0; o < d; ++o) {
        double a = b1[o], b = b1[o + d];
        for (std::size_t i = 0; i < d; ++i) {
          a += w1[o * d + i] * h[t * d + i];
          b += w1[(o + d) * d + i] * h[t * d + i];
        }
        g[t * d + o] = a / (1.0 + std::exp(-b));
      }
    auto dw = oracle::depthwise_conv(g, v("depthwise.weight"), v("depthwise.bias"), len, d, k, false);
    const auto rm = s.find("c.batch_norm.running_mean").to_vector();
    const auto rv = s.find("c.batch_norm.running_var").to_vector();
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < d; ++c) {
        double z = (dw[t * d + c] - rm[c]) / std::sqrt(rv[c] + 1e-5);
        dw[t * d + c] = z / (1.0 + std::exp(-z));
      }
    const auto w2 = v("pointwise2.weight"), b2 = v("pointwise2.bias");
    const Tensor y = conv_module(conv, x, {});
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t o = 0; o < d; ++o) {
        double acc = b2[o];
        for (std::size_t i = 0; i < d; ++i) acc += w2[o * d + i] * dw[t * d + i];
        CHECK(y.at(t, o) == doctest::Approx(x.at(t, o) + acc).epsilon(1e-12));
      }
  }

  TEST_CASE("even kernels are rejected") {
    ParamStore s;
    CHECK_THROWS_AS(ConvModule(s, "c", 4, 4), ConfigError);
  }
}

TEST_SUITE("encoder_layer") {
  TEST_CASE("parameter counts match the closed form for both mixers") {
    for (MixerKind m : {MixerKind::kAttention, MixerKind::kHyena}) {
      ParamStore s;
      const LayerSpec spec = small_layer(m);
      EncoderLayer layer(s, "l", spec);
      const std::size_t mixer = m == MixerKind::kAttention
                                    ? oracle::attention_params(8, true)
                                    : oracle::hyena_params(8, 2, 3, 3, 8, 3, true);
      const std::size_t want = 2 * oracle::ffn_params(8, 12) + oracle::conv_module_params(8, 3) +
                               2 * 8 + mixer + 2 * 8;
      CHECK(layer.param_count() == want);
      CHECK(layer.mixer_param_count() == mixer);
      CHECK(s.count() == want);
    }
  }

  TEST_CASE("padding does not change real rows in eval mode") {
    std::mt19937_64 rng(45);
    for (MixerKind m : {MixerKind::kAttention, MixerKind::kHyena}) {
      ParamStore s;
      EncoderLayer layer(s, "l", small_layer(m));
      s.materialize(6);
      const Tensor x = rand_tensor({7, 8}, rng);
      const Tensor ref = encoder_layer(layer, x, {});
      std::vector<double> data = x.to_vector();
      const auto junk = oracle::gaussian(5 * 8, rng);
      data.insert(data.end(), junk.begin(), junk.end());
      PadMask mask(12, false);
      for (std::size_t i = 7; i < 12; ++i) mask[i] = true;
      const Tensor y = encoder_layer(layer, Tensor::from_data({12, 8}, data), mask);
      double diff = 0.0;
      for (std::size_t i = 0; i < ref.numel(); ++i) diff = std::max(diff, std::abs(ref.at(i) - y.at(i)));
      CHECK(diff < 1e-12);
      for (std::size_t i = ref.numel(); i < y.numel(); ++i) CHECK(y.at(i) == 0.0);
    }
  }

  TEST_CASE("output rows are layer-normalized") {
    std::mt19937_64 rng(46);
    ParamStore s;
    EncoderLayer layer(s, "l", small_layer(MixerKind::kHyena));
    s.materialize(7);
    const Tensor y = encoder_layer(layer, rand_tensor({5, 8}, rng), {});
    for (std::size_t t = 0; t < 5; ++t) {
      double m = 0.0;
      for (std::size_t c = 0; c < 8; ++c) m += y.at(t, c);
      CHECK(std::abs(m) < 1e-10);
    }
  }

  TEST_CASE("input gradients pass finite differences for both mixers") {
    std::mt19937_64 rng(47);
    for (MixerKind m : {MixerKind::kAttention, MixerKind::kHyena}) {
      ParamStore s;
      EncoderLayer layer(s, "l", small_layer(m));
      s.materialize(8);
      const Tensor x = rand_tensor({6, 8}, rng), w = rand_tensor({6, 8}, rng);
      const auto r = grad_check([&](const Tensor& t) { return sum(mul(encoder_layer(layer, t, {}), w)); }, x);
      CHECK_MESSAGE(r.passed, r.max_rel_error);
    }
  }

  TEST_CASE("dropout only acts in training mode with a generator") {
    std::mt19937_64 rng(48);
    LayerSpec spec = small_layer(MixerKind::kAttention);
    spec.dropout = 0.3;
    ParamStore s;
    EncoderLayer layer(s, "l", spec);
    s.materialize(9);
    const Tensor x = rand_tensor({5, 8}, rng);
    // Batch norm uses batch statistics in training mode, so each mode is
    // compared against itself with and without a generator.
    CHECK(encoder_layer(layer, x, {}).to_vector() ==
          encoder_layer(layer, x, {}, RunContext{false, &rng}).to_vector());
    const Tensor plain = encoder_layer(layer, x, {}, RunContext{true, nullptr});
    const Tensor dropped = encoder_layer(layer, x, {}, RunContext{true, &rng});
    double diff = 0.0;
    for (std::size_t i = 0; i < plain.numel(); ++i)
      diff = std::max(diff, std::abs(plain.at(i) - dropped.at(i)));
    CHECK(diff > 1e-6);
  }

  TEST_CASE("invalid layer specs") {
    LayerSpec s = small_layer(MixerKind::kAttention);
    s.heads = 3;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_layer(MixerKind::kHyena);
    s.dropout = 1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = small_layer(MixerKind::kHyena);
    s.hyena.short_kernel = 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    ParamStore store;
    EncoderLayer layer(store, "l", small_layer(MixerKind::kAttention));
    store.materialize(1);
    CHECK_THROWS_AS(encoder_layer(layer, Tensor::zeros({3, 7}), {}), DimensionError);
  }
}
