// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/numerics/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

ComplexBuffer::ComplexBuffer(std::vector<double> real, std::vector<double> imag)
    : re(std::move(real)), im(std::move(imag)) {
  if (re.size() != im.size()) {
    throw DimensionError("complex buffer with " + std::to_string(re.size()) + " real and " +
                         std::to_string(im.size()) + " imaginary parts");
  }
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (!is_power_of_two(n)) {
    throw SizeError("FFT length " + std::to_string(n) + " is not a power of two");
  }
  bitrev_.resize(n);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
  // bitrev is an involution, so it maps bins back to positions too.
  mirror_.resize(n);
  for (std::size_t p = 0; p < n; ++p) mirror_[p] = bitrev_[(n - bitrev_[p]) & (n - 1)];
  // Twiddles of the stage with half-length h occupy [h, 2h), so each
  // butterfly loop reads them contiguously.
  cos_.assign(std::max<std::size_t>(n, 2), 1.0);
  sin_.assign(std::max<std::size_t>(n, 2), 0.0);
  for (std::size_t half = 1; half < n; half <<= 1) {
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = -std::numbers::pi * static_cast<double>(k) / static_cast<double>(half);
      cos_[half + k] = std::cos(angle);
      sin_[half + k] = std::sin(angle);
    }
  }
}

void FftPlan::check(std::span<double> re, std::span<double> im) const {
  if (re.size() != n_ || im.size() != n_) {
    throw SizeError("FFT plan of length " + std::to_string(n_) + " applied to buffer of length " +
                    std::to_string(re.size()));
  }
}

void FftPlan::forward(std::span<double> re, std::span<double> im) const {
  check(re, im);
  permute(re.data(), im.data());
  dit(re.data(), im.data(), 1.0);
}

void FftPlan::inverse(std::span<double> re, std::span<double> im) const {
  check(re, im);
  permute(re.data(), im.data());
  dit(re.data(), im.data(), -1.0);
  scale(re.data(), im.data());
}

void FftPlan::forward_scrambled(std::span<double> re, std::span<double> im) const {
  check(re, im);
  dif(re.data(), im.data(), 1.0);
}

void FftPlan::inverse_scrambled(std::span<double> re, std::span<double> im) const {
  check(re, im);
  dit(re.data(), im.data(), -1.0);
  scale(re.data(), im.data());
}

void FftPlan::permute(double* re, double* im) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
}

void FftPlan::scale(double* re, double* im) const {
  const double s = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    re[i] *= s;
    im[i] *= s;
  }
}

namespace {

// Decimation-in-time butterflies of one stage over [0, len).
void dit_stage(double* re, double* im, std::size_t len, std::size_t half, const double* wr,
               const double* ws, double sign) {
  for (std::size_t start = 0; start < len; start += 2 * half) {
    double* __restrict ar = re + start;
    double* __restrict ai = im + start;
    double* __restrict br = re + start + half;
    double* __restrict bi = im + start + half;
    for (std::size_t k = 0; k < half; ++k) {
      const double wi = sign * ws[k];
      const double tr = br[k] * wr[k] - bi[k] * wi;
      const double ti = br[k] * wi + bi[k] * wr[k];
      br[k] = ar[k] - tr;
      bi[k] = ai[k] - ti;
      ar[k] += tr;
      ai[k] += ti;
    }
  }
}

// Decimation-in-frequency butterflies: the twiddle multiplies the difference.
void dif_stage(double* re, double* im, std::size_t len, std::size_t half, const double* wr,
               const double* ws, double sign) {
  for (std::size_t start = 0; start < len; start += 2 * half) {
    double* __restrict ar = re + start;
    double* __restrict ai = im + start;
    double* __restrict br = re + start + half;
    double* __restrict bi = im + start + half;
    for (std::size_t k = 0; k < half; ++k) {
      const double wi = sign * ws[k];
      const double dr = ar[k] - br[k], di = ai[k] - bi[k];
      ar[k] += br[k];
      ai[k] += bi[k];
      br[k] = dr * wr[k] - di * wi;
      bi[k] = dr * wi + di * wr[k];
    }
  }
}

// Half-lengths 1 and 2 fused; their twiddles are 1 and -/+i. In DIT order the
// half-1 stage comes first, in DIF order last.
void radix4_dit(double* r, double* m, std::size_t len, double sign) {
  for (std::size_t b = 0; b < len; b += 4) {
    const double s0r = r[b] + r[b + 1], s0i = m[b] + m[b + 1];
    const double d0r = r[b] - r[b + 1], d0i = m[b] - m[b + 1];
    const double s1r = r[b + 2] + r[b + 3], s1i = m[b + 2] + m[b + 3];
    const double d1r = r[b + 2] - r[b + 3], d1i = m[b + 2] - m[b + 3];
    // d1 * (-i sign)
    const double tr = sign * d1i, ti = -sign * d1r;
    r[b] = s0r + s1r;
    m[b] = s0i + s1i;
    r[b + 2] = s0r - s1r;
    m[b + 2] = s0i - s1i;
    r[b + 1] = d0r + tr;
    m[b + 1] = d0i + ti;
    r[b + 3] = d0r - tr;
    m[b + 3] = d0i - ti;
  }
}

void radix4_dif(double* r, double* m, std::size_t len, double sign) {
  for (std::size_t b = 0; b < len; b += 4) {
    const double a0r = r[b] + r[b + 2], a0i = m[b] + m[b + 2];
    const double a2r = r[b] - r[b + 2], a2i = m[b] - m[b + 2];
    const double a1r = r[b + 1] + r[b + 3], a1i = m[b + 1] + m[b + 3];
    const double dr = r[b + 1] - r[b + 3], di = m[b + 1] - m[b + 3];
    // (x1 - x3) * (-i sign)
    const double a3r = sign * di, a3i = -sign * dr;
    r[b] = a0r + a1r;
    m[b] = a0i + a1i;
    r[b + 1] = a0r - a1r;
    m[b + 1] = a0i - a1i;
    r[b + 2] = a2r + a3r;
    m[b + 2] = a2i + a3i;
    r[b + 3] = a2r - a3r;
    m[b + 3] = a2i - a3i;
  }
}

}  // namespace

// Stages small enough to stay in L1 run block by block; the rest sweep the
// whole buffer.
void FftPlan::dit(double* re, double* im, double sign) const {
  const std::size_t block = std::min(n_, kBlock);
  for (std::size_t b0 = 0; b0 < n_; b0 += block) {
    std::size_t half = 1;
    if (block >= 4) {
      radix4_dit(re + b0, im + b0, block, sign);
      half = 4;
    }
    for (; half < block; half <<= 1) {
      dit_stage(re + b0, im + b0, block, half, cos_.data() + half, sin_.data() + half, sign);
    }
  }
  for (std::size_t half = block; half < n_; half <<= 1) {
    dit_stage(re, im, n_, half, cos_.data() + half, sin_.data() + half, sign);
  }
}

void FftPlan::dif(double* re, double* im, double sign) const {
  const std::size_t block = std::min(n_, kBlock);
  for (std::size_t half = n_ / 2; half >= block && half > 0; half >>= 1) {
    dif_stage(re, im, n_, half, cos_.data() + half, sin_.data() + half, sign);
  }
  for (std::size_t b0 = 0; b0 < n_; b0 += block) {
    const std::size_t last = block >= 4 ? 4 : 1;
    for (std::size_t half = block / 2; half >= last; half >>= 1) {
      dif_stage(re + b0, im + b0, block, half, cos_.data() + half, sin_.data() + half, sign);
    }
    if (block >= 4) radix4_dif(re + b0, im + b0, block, sign);
  }
}

ComplexBuffer fft(const ComplexBuffer& x) {
  FftPlan plan(x.size());
  ComplexBuffer out = x;
  plan.forward(out.re, out.im);
  return out;
}

ComplexBuffer ifft(const ComplexBuffer& x) {
  FftPlan plan(x.size());
  ComplexBuffer out = x;
  plan.inverse(out.re, out.im);
  return out;
}

}  // namespace confhyena
