// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace confhyena {

// Split-storage complex array. re and im always have equal length.
struct ComplexBuffer {
  std::vector<double> re;
  std::vector<double> im;

  ComplexBuffer() = default;
  explicit ComplexBuffer(std::size_t n) : re(n, 0.0), im(n, 0.0) {}
  ComplexBuffer(std::vector<double> real, std::vector<double> imag);

  std::size_t size() const noexcept { return re.size(); }
};

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

/// Precomputed radix-2 transform of one power-of-two length.
///
/// Forward is unnormalized: X[k] = sum_n x[n] exp(-2 pi i k n / N).
/// Inverse carries the 1/N factor, so inverse(forward(x)) == x.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  void forward(std::span<double> re, std::span<double> im) const;
  void inverse(std::span<double> re, std::span<double> im) const;

  // Forward transform leaving bin bitrev(p) at position p. Skipping the
  // permutation pays off for convolution, where spectra are only multiplied
  // pointwise before inverse_scrambled brings them back to natural order.
  void forward_scrambled(std::span<double> re, std::span<double> im) const;
  // Inverse (with 1/N) of a spectrum stored in scrambled order.
  void inverse_scrambled(std::span<double> re, std::span<double> im) const;
  // Position of bin (N - k) mod N, where k is the bin held at position p.
  std::size_t mirror(std::size_t p) const noexcept { return mirror_[p]; }

 private:
  void check(std::span<double> re, std::span<double> im) const;
  void permute(double* re, double* im) const;
  void dit(double* re, double* im, double sign) const;
  void dif(double* re, double* im, double sign) const;
  void scale(double* re, double* im) const;

  // Complex points per cache block (16 KiB of data plus twiddles).
  static constexpr std::size_t kBlock = 1024;

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::size_t> mirror_;
  // Stage twiddles: entry h + k holds exp(-i pi k / h) for k < h.
  std::vector<double> cos_;
  std::vector<double> sin_;
};

ComplexBuffer fft(const ComplexBuffer& x);
ComplexBuffer ifft(const ComplexBuffer& x);

}  // namespace confhyena
