// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "confhyena/hyena/hyena.hpp"
#include "confhyena/numerics/errors.hpp"
#include "confhyena/numerics/fft.hpp"

namespace confhyena {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Channel-major copy of a time-major (L, C) buffer.
RowMat to_channels(std::span<const double> data, std::size_t len, std::size_t ch) {
  return Eigen::Map<const RowMat>(data.data(), len, ch).transpose();
}

// Transform of a + ib for two real signals a, b, in the plan's scrambled bin
// order. The individual spectra are recovered on the fly from bins f and N - f.
struct PackedSpectrum {
  std::vector<double> re, im;
  explicit PackedSpectrum(std::size_t n) : re(n), im(n) {}
};

class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(std::size_t n) : plan_(n), re_(n), im_(n) {}

  // a (and b when non-null) are length-`len` signals placed at `offset`.
  void spectrum(const double* a, const double* b, std::size_t len, std::size_t offset,
                PackedSpectrum& out) const {
    std::fill(out.re.begin(), out.re.end(), 0.0);
    std::fill(out.im.begin(), out.im.end(), 0.0);
    std::copy_n(a, len, out.re.begin() + static_cast<std::ptrdiff_t>(offset));
    if (b) std::copy_n(b, len, out.im.begin() + static_cast<std::ptrdiff_t>(offset));
    plan_.forward_scrambled(out.re, out.im);
  }

  // Inverse transform of P_a * op(Q_a) + i * P_b * op(Q_b), where op is the
  // identity or complex conjugation; writes samples [offset, offset + len).
  void product_inverse(const PackedSpectrum& p, const PackedSpectrum& q, bool conj_q,
                       std::size_t offset, std::size_t len, double* out_a, double* out_b) {
    const std::size_t n = plan_.size();
    const double s = conj_q ? -1.0 : 1.0;
    for (std::size_t f = 0; f < n; ++f) {
      const std::size_t nf = plan_.mirror(f);
      const double par = 0.5 * (p.re[f] + p.re[nf]), pai = 0.5 * (p.im[f] - p.im[nf]);
      const double pbr = 0.5 * (p.im[f] + p.im[nf]), pbi = -0.5 * (p.re[f] - p.re[nf]);
      const double qar = 0.5 * (q.re[f] + q.re[nf]), qai = s * 0.5 * (q.im[f] - q.im[nf]);
      const double qbr = 0.5 * (q.im[f] + q.im[nf]), qbi = -s * 0.5 * (q.re[f] - q.re[nf]);
      const double yar = par * qar - pai * qai;
      const double yai = par * qai + pai * qar;
      const double ybr = pbr * qbr - pbi * qbi;
      const double ybi = pbr * qbi + pbi * qbr;
      re_[f] = yar - ybi;
      im_[f] = yai + ybr;
    }
    plan_.inverse_scrambled(re_, im_);
    std::copy_n(re_.begin() + static_cast<std::ptrdiff_t>(offset), len, out_a);
    if (out_b) std::copy_n(im_.begin() + static_cast<std::ptrdiff_t>(offset), len, out_b);
  }

 private:
  FftPlan plan_;
  std::vector<double> re_, im_;
};

}  // namespace

Tensor long_conv(const Tensor& x, const Tensor& k, std::size_t offset) {
  if (x.rank() != 2 || x.shape() != k.shape()) {
    throw DimensionError("long_conv: input " + shape_str(x.shape()) + " and kernel " +
                         shape_str(k.shape()) + " must be equal (L, C) shapes");
  }
  const std::size_t len = x.dim(0), ch = x.dim(1);
  if (len == 0) throw SizeError("long_conv: empty sequence");
  if (offset >= len) throw SizeError("long_conv: selection offset beyond sequence");
  const std::size_t n = next_power_of_two(2 * len);
  const std::size_t pairs = (ch + 1) / 2;
  const bool keep = x.requires_grad() || k.requires_grad();

  RowMat xc = to_channels(x.data(), len, ch);
  RowMat kc = to_channels(k.data(), len, ch);
  RowMat yc(ch, len);
  SpectralWorkspace ws(n);
  // Spectra are kept for the backward pass, which then needs one forward
  // transform per channel pair instead of three.
  auto xs = std::make_shared<std::vector<PackedSpectrum>>();
  auto ks = std::make_shared<std::vector<PackedSpectrum>>();
  const std::size_t slots = keep ? pairs : 1;
  xs->assign(slots, PackedSpectrum(n));
  ks->assign(slots, PackedSpectrum(n));
  for (std::size_t p = 0; p < pairs; ++p) {
    const std::size_t c = 2 * p;
    const bool pair = c + 1 < ch;
    PackedSpectrum& px = (*xs)[keep ? p : 0];
    PackedSpectrum& pk = (*ks)[keep ? p : 0];
    ws.spectrum(xc.row(c).data(), pair ? xc.row(c + 1).data() : nullptr, len, 0, px);
    ws.spectrum(kc.row(c).data(), pair ? kc.row(c + 1).data() : nullptr, len, 0, pk);
    ws.product_inverse(px, pk, false, offset, len, yc.row(c).data(),
                       pair ? yc.row(c + 1).data() : nullptr);
  }
  std::vector<double> out(len * ch);
  Eigen::Map<RowMat>(out.data(), len, ch) = yc.transpose();

  return make_op(
      {len, ch}, std::move(out), {x, k},
      [xs, ks, len, ch, n, offset](std::span<const double> g, std::span<const GradSpan> gin) {
        // dL/dx[s] = sum_t g[t] k[t + offset - s]; dL/dk[m] = sum_t g[t] x[t + offset - m].
        // Both are cross-correlations of g (placed at `offset`) with k or x.
        RowMat gc = to_channels(g, len, ch);
        RowMat gxc(ch, len), gkc(ch, len);
        SpectralWorkspace ws(n);
        PackedSpectrum pg(n);
        const bool need_x = !gin[0].empty(), need_k = !gin[1].empty();
        for (std::size_t p = 0; p < xs->size(); ++p) {
          const std::size_t c = 2 * p;
          const bool pair = c + 1 < ch;
          ws.spectrum(gc.row(c).data(), pair ? gc.row(c + 1).data() : nullptr, len, offset, pg);
          if (need_x) {
            ws.product_inverse(pg, (*ks)[p], true, 0, len, gxc.row(c).data(),
                               pair ? gxc.row(c + 1).data() : nullptr);
          }
          if (need_k) {
            ws.product_inverse(pg, (*xs)[p], true, 0, len, gkc.row(c).data(),
                               pair ? gkc.row(c + 1).data() : nullptr);
          }
        }
        if (need_x) Eigen::Map<RowMat>(gin[0].data(), len, ch) += gxc.transpose();
        if (need_k) Eigen::Map<RowMat>(gin[1].data(), len, ch) += gkc.transpose();
      });
}

Tensor long_conv_causal(const Tensor& x, const Tensor& k) { return long_conv(x, k, 0); }

Tensor long_conv_noncausal(const Tensor& x, const Tensor& k) {
  if (x.rank() != 2) throw DimensionError("long_conv_noncausal: expected (L, C) input");
  return long_conv(x, k, x.dim(0) / 2);
}

Tensor short_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, bool causal) {
  if (x.rank() != 2 || x.dim(0) == 0) throw SizeError("short_conv: empty input");
  if (weight.rank() != 3 || weight.dim(0) != x.dim(1) || weight.dim(1) != 1) {
    throw DimensionError("short_conv: weight " + shape_str(weight.shape()) + " for input " +
                         shape_str(x.shape()));
  }
  const std::size_t k = weight.dim(2);
  if (k == 0) throw ConfigError("short_conv: empty kernel");
  Conv1dOptions opts;
  opts.groups = x.dim(1);
  if (causal) {
    opts.left_pad = k - 1;
  } else {
    if (k % 2 == 0) {
      throw ConfigError("short_conv: non-causal kernel size " + std::to_string(k) +
                        " must be odd");
    }
    opts.left_pad = k / 2;
    opts.right_pad = k / 2;
  }
  return conv1d(x, weight, bias, opts);
}

}  // namespace confhyena
