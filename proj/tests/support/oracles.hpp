// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

// Slow, independent reference implementations used only by the tests. They
// share no code with the library beyond plain containers.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "confhyena/encoder/config.hpp"

namespace oracle {

using Cplx = std::complex<double>;

std::vector<Cplx> dft(const std::vector<Cplx>& x, bool inverse = false);

// Row-major (L, C) buffers. y[t] = sum_{j<=t} k[j] x[t-j].
std::vector<double> causal_conv(const std::vector<double>& x, const std::vector<double>& k,
                                std::size_t len, std::size_t ch);
// Kernel index floor(L/2) aligned with the output position:
// y[t] = sum_s x[s] k[t - s + floor(L/2)] over valid kernel indices.
std::vector<double> same_conv(const std::vector<double>& x, const std::vector<double>& k,
                              std::size_t len, std::size_t ch);

// Depthwise convolution with a (C, K) kernel. Causal reads t-K+1..t, otherwise
// t-K/2..t+K/2 with zero padding.
std::vector<double> depthwise_conv(const std::vector<double>& x, const std::vector<double>& w,
                                   const std::vector<double>& bias, std::size_t len,
                                   std::size_t ch, std::size_t kernel, bool causal);

struct Run {
  std::size_t begin, end, label;
};
std::vector<Run> run_length(const std::vector<std::size_t>& labels);

// Multi-head scaled dot-product attention written with explicit loops over
// (head, i, j). When pos is non-empty it has 2L-1 rows, row i - j + L - 1
// holding the projected encoding of distance i - j, and u, v are the content
// and position biases.
struct AttentionInputs {
  std::vector<double> q, k, v;  // (Lq, d), (Lk, d), (Lk, d)
  std::vector<double> pos;      // (2L - 1, d) or empty
  std::vector<double> u, bias_v;
  std::size_t lq = 0, lk = 0, d = 0, heads = 1;
  bool causal = false;
  std::vector<bool> key_mask;
};
std::vector<double> attention(const AttentionInputs& in);

// Sinusoids of distance r - L + 1 at frequencies 10000^(-m/d), m even:
// column m holds sin, column m + 1 holds cos.
std::vector<double> relative_table(std::size_t len, std::size_t d);

// -log of the total probability of all CTC alignments of `target`, found by
// enumerating every path of length T over V symbols (keep T and V tiny).
double ctc_brute_force(const std::vector<double>& log_probs, std::size_t frames,
                       std::size_t vocab, const std::vector<std::size_t>& target);

// Closed-form parameter counts.
std::size_t ffn_params(std::size_t d, std::size_t f);
std::size_t conv_module_params(std::size_t d, std::size_t k);
std::size_t attention_params(std::size_t d, bool relative);
std::size_t filter_params(std::size_t d, std::size_t order, std::size_t bands,
                          std::size_t hidden, std::size_t layers, bool decay);
std::size_t hyena_params(std::size_t d, std::size_t order, std::size_t short_kernel,
                         std::size_t bands, std::size_t hidden, std::size_t layers, bool decay);
std::size_t layer_params(const confhyena::EncoderConfig& c, bool hyena);
std::size_t frontend_params(const confhyena::EncoderConfig& c);
std::size_t decoder_layer_params(std::size_t d, std::size_t f);
std::size_t model_params(const confhyena::EncoderConfig& c);

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng);

}  // namespace oracle
