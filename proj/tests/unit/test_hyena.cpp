// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/errors.hpp"
#include "confhyena/numerics/grad_check.hpp"

using namespace confhyena;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& rng) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from_data(std::move(shape), oracle::gaussian(n, rng));
}

double max_diff(std::span<const double> a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

HyenaSpec small_spec(bool causal) {
  HyenaSpec s;
  s.model_dim = 6;
  s.filter_hidden = 8;
  s.filter_bands = 3;
  s.filter_layers = 3;
  s.filter_max_len = 64;
  s.causal = causal;
  return s;
}

std::vector<double> values(const ParamStore& s, const std::string& name) {
  return s.find(name).to_vector();
}

// Kernels (len, order * d) rebuilt with plain loops from the stored weights.
std::vector<double> reference_kernels(const ParamStore& s, const HyenaSpec& spec, std::size_t len) {
  const std::size_t bands = spec.filter_bands, hidden = spec.filter_hidden;
  const std::size_t ch = spec.order * spec.model_dim;
  std::vector<double> out(len * ch);
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> h(1 + 2 * bands);
    const double pos = static_cast<double>(t) / static_cast<double>(spec.filter_max_len);
    h[0] = pos;
    for (std::size_t j = 0; j < bands; ++j) {
      const double f = 1e-4 + (static_cast<double>(bands) - 1.0 - 1e-4) * static_cast<double>(j) /
                                  static_cast<double>(bands - 1);
      h[1 + j] = std::cos(2.0 * std::numbers::pi * f * pos);
      h[1 + bands + j] = -std::sin(2.0 * std::numbers::pi * f * pos);
    }
    for (std::size_t l = 0; l + 1 < spec.filter_layers; ++l) {
      const std::string p = "f.filter.mlp." + std::to_string(l);
      const auto w = values(s, p + ".weight"), b = values(s, p + ".bias"), fr = values(s, p + ".freq");
      std::vector<double> next(hidden);
      for (std::size_t o = 0; o < hidden; ++o) {
        double acc = b[o];
        for (std::size_t i = 0; i < h.size(); ++i) acc += w[o * h.size() + i] * h[i];
        next[o] = std::sin(fr[o] * acc);
      }
      h = next;
    }
    const auto w = values(s, "f.filter.mlp.out.weight");
    const auto rates = values(s, "f.filter.decay");
    const double centre = spec.causal ? 0.0 : static_cast<double>(len / 2);
    const double dist = std::abs(static_cast<double>(t) - centre) / static_cast<double>(spec.filter_max_len);
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hidden; ++i) acc += w[c * hidden + i] * h[i];
      out[t * ch + c] = acc * std::exp(-std::abs(rates[c]) * dist);
    }
  }
  for (std::size_t c = 0; c < ch; ++c) {
    double n2 = 0.0;
    for (std::size_t t = 0; t < len; ++t) n2 += out[t * ch + c] * out[t * ch + c];
    for (std::size_t t = 0; t < len; ++t) out[t * ch + c] /= std::sqrt(n2 + 1e-12);
  }
  return out;
}

// Whole operator rebuilt from oracle convolutions and explicit loops.
std::vector<double> reference_hyena(const ParamStore& s, const HyenaSpec& spec,
                                    const std::vector<double>& x, std::size_t len) {
  const std::size_t d = spec.model_dim, w = spec.width(), n = spec.order;
  const auto wi = values(s, "f.in_proj.weight"), bi = values(s, "f.in_proj.bias");
  std::vector<double> u(len * w);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t o = 0; o < w; ++o) {
      double acc = bi[o];
      for (std::size_t i = 0; i < d; ++i) acc += wi[o * d + i] * x[t * d + i];
      u[t * w + o] = acc;
    }
  u = oracle::depthwise_conv(u, values(s, "f.short_conv.weight"), values(s, "f.short_conv.bias"),
                             len, w, spec.short_kernel, spec.causal);
  const auto kernels = reference_kernels(s, spec, len);
  auto column_block = [&](const std::vector<double>& src, std::size_t stride, std::size_t b) {
    std::vector<double> out(len * d);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t c = 0; c < d; ++c) out[t * d + c] = src[t * stride + b * d + c];
    return out;
  };
  std::vector<double> z = column_block(u, w, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = column_block(kernels, n * d, i);
    const auto conv = spec.causal ? oracle::causal_conv(z, k, len, d) : oracle::same_conv(z, k, len, d);
    const auto gate = column_block(u, w, i);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] = gate[j] * conv[j];
  }
  const auto wo = values(s, "f.out_proj.weight"), bo = values(s, "f.out_proj.bias");
  std::vector<double> y(len * d);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t o = 0; o < d; ++o) {
      double acc = bo[o];
      for (std::size_t i = 0; i < d; ++i) acc += wo[o * d + i] * z[t * d + i];
      y[t * d + o] = acc;
    }
  return y;
}

}  // namespace

TEST_SUITE("long_conv") {
  TEST_CASE("causal and same-padding convolutions match direct sums") {
    std::mt19937_64 rng(21);
    for (std::size_t len : {1u, 2u, 7u, 8u, 33u, 100u}) {
      for (std::size_t ch : {1u, 2u, 3u}) {
        const Tensor x = rand_tensor({len, ch}, rng), k = rand_tensor({len, ch}, rng);
        CHECK_MESSAGE(max_diff(long_conv_causal(x, k).data(),
                               oracle::causal_conv(x.to_vector(), k.to_vector(), len, ch)) < 1e-10,
                      "len=" << len << " ch=" << ch);
        CHECK_MESSAGE(max_diff(long_conv_noncausal(x, k).data(),
                               oracle::same_conv(x.to_vector(), k.to_vector(), len, ch)) < 1e-10,
                      "len=" << len << " ch=" << ch);
      }
    }
  }

  TEST_CASE("gradients flow to both signal and kernel") {
    std::mt19937_64 rng(22);
    for (bool causal : {true, false}) {
      const Tensor x = rand_tensor({9, 3}, rng), k = rand_tensor({9, 3}, rng), w = rand_tensor({9, 3}, rng);
      auto f = [&](const Tensor& a, const Tensor& b) {
        return sum(mul(causal ? long_conv_causal(a, b) : long_conv_noncausal(a, b), w));
      };
      CHECK(grad_check([&](const Tensor& t) { return f(t, k); }, x).passed);
      CHECK(grad_check([&](const Tensor& t) { return f(x, t); }, k).passed);
    }
  }

  TEST_CASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(long_conv_causal(Tensor::zeros({4, 2}), Tensor::zeros({4, 3})), DimensionError);
    CHECK_THROWS_AS(long_conv_causal(Tensor::zeros({4}), Tensor::zeros({4})), DimensionError);
  }
}

TEST_SUITE("short_conv") {
  TEST_CASE("matches the depthwise oracle with and without causality") {
    std::mt19937_64 rng(23);
    for (bool causal : {true, false}) {
      for (std::size_t len : {1u, 2u, 5u, 12u}) {
        const std::size_t ch = 4, kk = 3;
        const Tensor x = rand_tensor({len, ch}, rng), w = rand_tensor({ch, 1, kk}, rng),
                     b = rand_tensor({ch}, rng);
        CHECK(max_diff(short_conv(x, w, b, causal).data(),
                       oracle::depthwise_conv(x.to_vector(), w.to_vector(), b.to_vector(), len, ch,
                                              kk, causal)) < 1e-12);
      }
    }
  }

  TEST_CASE("even kernels need causality") {
    CHECK_THROWS_AS(short_conv(Tensor::zeros({4, 2}), Tensor::zeros({2, 1, 2}), Tensor::zeros({2}), false),
                    ConfigError);
  }
}

TEST_SUITE("filter") {
  TEST_CASE("positional features follow the closed form and extend by prefix") {
    const Tensor a = positional_features(10, 4, 32), b = positional_features(6, 4, 32);
    for (std::size_t i = 0; i < b.numel(); ++i) CHECK(a.at(i) == b.at(i));
    CHECK(a.at(3, 0) == doctest::Approx(3.0 / 32.0));
    const double f1 = 1e-4 + (3.0 - 1e-4) / 3.0;
    CHECK(a.at(5, 2) == doctest::Approx(std::cos(2 * std::numbers::pi * f1 * 5.0 / 32.0)));
    CHECK(a.at(5, 6) == doctest::Approx(-std::sin(2 * std::numbers::pi * f1 * 5.0 / 32.0)));
    CHECK_THROWS_AS(positional_features(0, 4, 32), SizeError);
  }

  TEST_CASE("generated kernels match a loop-based rebuild") {
    for (bool causal : {true, false}) {
      ParamStore s;
      const HyenaSpec spec = small_spec(causal);
      HyenaOperator op(s, "f", spec);
      s.materialize(3);
      for (std::size_t len : {1u, 5u, 16u}) {
        CHECK(max_diff(op.filter().generate_flat(len).data(), reference_kernels(s, spec, len)) < 1e-12);
      }
      const Tensor g = op.filter().generate(5);
      CHECK(g.shape() == Shape{2, 5, 6});
      CHECK(g.at(1 * 30 + 2 * 6 + 4) == op.filter().generate_flat(5).at(2, 6 + 4));
    }
  }

  TEST_CASE("parameter count is independent of sequence length") {
    ParamStore s;
    const HyenaSpec spec = small_spec(false);
    ImplicitFilter f(s, "f", spec);
    CHECK(f.param_count() == oracle::filter_params(6, 2, 3, 8, 3, true));
    CHECK(s.count() == f.param_count());
  }
}

TEST_SUITE("hyena_operator") {
  TEST_CASE("forward matches the loop-based recurrence") {
    std::mt19937_64 rng(24);
    for (bool causal : {true, false}) {
      for (std::size_t order : {1u, 2u, 3u}) {
        HyenaSpec spec = small_spec(causal);
        spec.order = order;
        spec.width_multiplier = order + 1;
        ParamStore s;
        HyenaOperator op(s, "f", spec);
        s.materialize(5 + order);
        for (std::size_t len : {1u, 7u, 16u}) {
          const Tensor x = rand_tensor({len, 6}, rng);
          CHECK_MESSAGE(max_diff(op.forward(x).data(), reference_hyena(s, spec, x.to_vector(), len)) < 1e-10,
                        "order=" << order << " len=" << len << " causal=" << causal);
        }
      }
    }
  }

  TEST_CASE("parameter count matches the closed form") {
    for (std::size_t order : {1u, 2u, 4u}) {
      HyenaSpec spec = small_spec(false);
      spec.order = order;
      spec.width_multiplier = order + 1;
      spec.decay_window = order != 4;
      ParamStore s;
      HyenaOperator op(s, "f", spec);
      const std::size_t want = oracle::hyena_params(6, order, 3, 3, 8, 3, spec.decay_window);
      CHECK(op.param_count() == want);
      CHECK(s.count() == want);
    }
  }

  TEST_CASE("causal output ignores the future; non-causal output sees it") {
    std::mt19937_64 rng(25);
    for (bool causal : {true, false}) {
      ParamStore s;
      HyenaOperator op(s, "f", small_spec(causal));
      s.materialize(7);
      const std::size_t len = 20, t = 9;
      std::vector<double> a = oracle::gaussian(len * 6, rng), b = a;
      for (std::size_t i = (t + 1) * 6; i < b.size(); ++i) b[i] += 1.0;
      const Tensor ya = op.forward(Tensor::from_data({len, 6}, a));
      const Tensor yb = op.forward(Tensor::from_data({len, 6}, b));
      double diff = 0.0;
      for (std::size_t i = 0; i <= t * 6 + 5; ++i) diff = std::max(diff, std::abs(ya.at(i) - yb.at(i)));
      if (causal) CHECK(diff < 1e-12);
      else CHECK(diff > 1e-6);
    }
  }

  TEST_CASE("padded suffix frames do not change real outputs") {
    std::mt19937_64 rng(26);
    ParamStore s;
    HyenaOperator op(s, "f", small_spec(false));
    s.materialize(8);
    const Tensor x = rand_tensor({11, 6}, rng);
    const Tensor ref = op.forward(x);
    for (std::size_t pad : {1u, 4u, 13u}) {
      std::vector<double> data = x.to_vector();
      std::vector<double> junk = oracle::gaussian(pad * 6, rng);
      data.insert(data.end(), junk.begin(), junk.end());
      PadMask mask(11 + pad, false);
      for (std::size_t i = 11; i < mask.size(); ++i) mask[i] = true;
      const Tensor y = op.forward(Tensor::from_data({11 + pad, 6}, data), mask);
      double diff = 0.0;
      for (std::size_t i = 0; i < ref.numel(); ++i) diff = std::max(diff, std::abs(ref.at(i) - y.at(i)));
      CHECK(diff < 1e-12);
      for (std::size_t i = ref.numel(); i < y.numel(); ++i) CHECK(y.at(i) == 0.0);
    }
  }

  TEST_CASE("input and parameter gradients pass finite differences") {
    std::mt19937_64 rng(27);
    for (bool causal : {true, false}) {
      ParamStore s;
      HyenaOperator op(s, "f", small_spec(causal));
      s.materialize(9);
      const Tensor x = rand_tensor({7, 6}, rng), w = rand_tensor({7, 6}, rng);
      const auto r = grad_check([&](const Tensor& t) { return sum(mul(op.forward(t), w)); }, x);
      CHECK_MESSAGE(r.passed, r.max_rel_error);
      for (const char* name : {"f.filter.mlp.0.weight", "f.filter.mlp.1.freq", "f.filter.decay",
                               "f.short_conv.weight", "f.in_proj.bias"}) {
        Tensor leaf = s.find(name);
        leaf.set_requires_grad(true);
        const auto rp =
            grad_check_leaf([&] { return sum(mul(op.forward(x), w)); }, leaf, {1e-5, 1e-3, 1e-6, 32});
        CHECK_MESSAGE(rp.passed, name << " " << rp.max_rel_error);
      }
    }
  }

  TEST_CASE("invalid specs and inputs raise typed errors") {
    HyenaSpec bad = small_spec(false);
    bad.width_multiplier = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_spec(false);
    bad.short_kernel = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_spec(false);
    bad.filter_layers = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = small_spec(false);
    bad.order = 0;
    CHECK_THROWS(bad.validate());

    ParamStore s;
    HyenaOperator op(s, "f", small_spec(false));
    s.materialize(1);
    CHECK_THROWS_AS(op.forward(Tensor::zeros({4, 5})), DimensionError);
    CHECK_THROWS_AS(op.forward(Tensor::zeros({3, 6}), {true, true, true}), ContractError);
    CHECK_THROWS_AS(op.forward(Tensor::zeros({3, 6}), {true, false, false}), ContractError);
    CHECK(real_prefix_length({false, false, true}, 3) == 2);
    CHECK(real_prefix_length({}, 3) == 3);
  }
}
