// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_str(t.shape()));
  }
}

enum class Broadcast { kNone, kSame, kScalar, kRow, kCol };

Broadcast classify(const Shape& big, const Shape& small) {
  if (big == small) return Broadcast::kSame;
  const std::size_t n = shape_numel(small);
  if (n == 1) return Broadcast::kScalar;
  if (big.empty()) return Broadcast::kNone;
  const std::size_t last = big.back();
  if (n == last && (small.size() == 1 || (small.size() == 2 && small[0] == 1))) {
    return Broadcast::kRow;
  }
  if (big.size() == 2 && small.size() == 2 && small[0] == big[0] && small[1] == 1) {
    return Broadcast::kCol;
  }
  return Broadcast::kNone;
}

inline std::size_t bindex(Broadcast bc, std::size_t i, std::size_t cols) {
  switch (bc) {
    case Broadcast::kSame: return i;
    case Broadcast::kScalar: return 0;
    case Broadcast::kRow: return i % cols;
    case Broadcast::kCol: return i / cols;
    case Broadcast::kNone: break;
  }
  return 0;
}

// Element-wise binary op with the broadcast operand in `b`.
// fwd(a, b) -> value, da(a, b) and db(a, b) -> partial derivatives.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, Broadcast bc, F fwd, DA da, DB db) {
  const std::size_t n = a.numel();
  const std::size_t cols = a.rank() ? a.shape().back() : 1;
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[bindex(bc, i, cols)]);
  return make_op(a.shape(), std::move(out), {a, b},
                 [a, b, bc, cols, n, da, db](std::span<const double> g,
                                             std::span<const GradSpan> gin) {
                   auto ad = a.data();
                   auto bd = b.data();
                   if (!gin[0].empty()) {
                     for (std::size_t i = 0; i < n; ++i) {
                       gin[0][i] += g[i] * da(ad[i], bd[bindex(bc, i, cols)]);
                     }
                   }
                   if (!gin[1].empty()) {
                     for (std::size_t i = 0; i < n; ++i) {
                       std::size_t j = bindex(bc, i, cols);
                       gin[1][j] += g[i] * db(ad[i], bd[j]);
                     }
                   }
                 });
}

template <class F, class D>
Tensor unary(const Tensor& x, F fwd, D deriv) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  if (!x.requires_grad()) return Tensor::from_data(x.shape(), std::move(out));
  std::vector<double> y = out;
  return make_op(x.shape(), std::move(out), {x},
                 [x, y = std::move(y), deriv](std::span<const double> g,
                                              std::span<const GradSpan> gin) {
                   auto xd = x.data();
                   for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] * deriv(xd[i], y[i]);
                 });
}

inline double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

std::size_t count_real(const PadMask& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), false));
}

Tensor add(const Tensor& a, const Tensor& b) {
  Broadcast bc = classify(a.shape(), b.shape());
  if (bc == Broadcast::kNone) {
    if (classify(b.shape(), a.shape()) != Broadcast::kNone) return add(b, a);
    throw DimensionError("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  return binary(
      a, b, bc, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Broadcast bc = classify(a.shape(), b.shape());
  if (bc == Broadcast::kNone) {
    throw DimensionError("sub: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  return binary(
      a, b, bc, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Broadcast bc = classify(a.shape(), b.shape());
  if (bc == Broadcast::kNone) {
    if (classify(b.shape(), a.shape()) != Broadcast::kNone) return mul(b, a);
    throw DimensionError("mul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  return binary(
      a, b, bc, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, sigm, [](double, double y) { return y * (1.0 - y); });
}

Tensor swish(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigm(v); },
      [](double v, double) {
        double s = sigm(v);
        return s + v * s * (1.0 - s);
      });
}

Tensor sine(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapM(out.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
  return make_op({m, n}, std::move(out), {a, b},
                 [a, b, m, k, n](std::span<const double> g, std::span<const GradSpan> gin) {
                   MapC G(g.data(), m, n);
                   if (!gin[0].empty()) {
                     MapM(gin[0].data(), m, k).noalias() +=
                         G * MapC(b.data().data(), k, n).transpose();
                   }
                   if (!gin[1].empty()) {
                     MapM(gin[1].data(), k, n).noalias() +=
                         MapC(a.data().data(), m, k).transpose() * G;
                   }
                 });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         "^T");
  }
  std::vector<double> out(m * n);
  MapM(out.data(), m, n).noalias() =
      MapC(a.data().data(), m, k) * MapC(b.data().data(), n, k).transpose();
  return make_op({m, n}, std::move(out), {a, b},
                 [a, b, m, k, n](std::span<const double> g, std::span<const GradSpan> gin) {
                   MapC G(g.data(), m, n);
                   if (!gin[0].empty()) {
                     MapM(gin[0].data(), m, k).noalias() += G * MapC(b.data().data(), n, k);
                   }
                   if (!gin[1].empty()) {
                     MapM(gin[1].data(), n, k).noalias() +=
                         G.transpose() * MapC(a.data().data(), m, k);
                   }
                 });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " with weight " +
                         shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != out_dim) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(out_dim) + " outputs");
  }
  std::vector<double> out(rows * out_dim);
  MapM Y(out.data(), rows, out_dim);
  Y.noalias() = MapC(x.data().data(), rows, in) * MapC(weight.data().data(), out_dim, in).transpose();
  if (has_bias) {
    Eigen::Map<const Eigen::RowVectorXd> b(bias.data().data(), out_dim);
    Y.rowwise() += b;
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op(
      {rows, out_dim}, std::move(out), std::move(inputs),
      [x, weight, rows, in, out_dim, has_bias](std::span<const double> g,
                                               std::span<const GradSpan> gin) {
        MapC G(g.data(), rows, out_dim);
        if (!gin[0].empty()) {
          MapM(gin[0].data(), rows, in).noalias() += G * MapC(weight.data().data(), out_dim, in);
        }
        if (!gin[1].empty()) {
          MapM(gin[1].data(), out_dim, in).noalias() +=
              G.transpose() * MapC(x.data().data(), rows, in);
        }
        if (has_bias && !gin[2].empty()) {
          // Row by row: colwise().sum() picks its summation order from the
          // buffer alignment, which makes reruns differ in the last bit.
          Eigen::Map<Eigen::RowVectorXd> gb(gin[2].data(), out_dim);
          for (Eigen::Index r = 0; r < G.rows(); ++r) gb += G.row(r);
        }
      });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  MapM(out.data(), c, r) = MapC(x.data().data(), r, c).transpose();
  return make_op({c, r}, std::move(out), {x},
                 [r, c](std::span<const double> g, std::span<const GradSpan> gin) {
                   MapM(gin[0].data(), r, c) += MapC(g.data(), c, r).transpose();
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto d = x.data();
  return make_op(std::move(shape), {d.begin(), d.end()}, {x},
                 [](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                 });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  AxisSplit s = split_axis(x.shape(), axis, "slice");
  if (begin > end || end > s.extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") on axis of extent " + std::to_string(s.extent));
  }
  const std::size_t len = end - begin;
  Shape shape = x.shape();
  shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * s.extent + begin) * s.inner),
                len * s.inner, out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
  }
  return make_op(std::move(shape), std::move(out), {x},
                 [s, begin, len](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     const double* src = g.data() + o * len * s.inner;
                     double* dst = gin[0].data() + (o * s.extent + begin) * s.inner;
                     for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  AxisSplit s0 = split_axis(ref, axis, "concat");
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& ps = p.shape();
    bool ok = ps.size() == ref.size();
    for (std::size_t i = 0; ok && i < ps.size(); ++i) ok = (i == axis) || ps[i] == ref[i];
    if (!ok) {
      throw DimensionError("concat: " + shape_str(ps) + " incompatible with " + shape_str(ref));
    }
    extents.push_back(ps[axis]);
    total += ps[axis];
  }
  Shape shape = ref;
  shape[axis] = total;
  std::vector<double> out(s0.outer * total * s0.inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pd = parts[p].data();
    const std::size_t chunk = extents[p] * s0.inner;
    for (std::size_t o = 0; o < s0.outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * s0.inner));
    }
    offset += extents[p];
  }
  const std::size_t outer = s0.outer, inner = s0.inner;
  return make_op(std::move(shape), std::move(out), parts,
                 [extents, total, outer, inner](std::span<const double> g,
                                                std::span<const GradSpan> gin) {
                   std::size_t offset = 0;
                   for (std::size_t p = 0; p < extents.size(); ++p) {
                     const std::size_t chunk = extents[p] * inner;
                     if (!gin[p].empty()) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* src = g.data() + (o * total + offset) * inner;
                         double* dst = gin[p].data() + o * chunk;
                         for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                       }
                     }
                     offset += extents[p];
                   }
                 });
}

Tensor sum(const Tensor& x) {
  auto d = x.data();
  double s = std::accumulate(d.begin(), d.end(), 0.0);
  return make_op({}, {s}, {x}, [](std::span<const double> g, std::span<const GradSpan> gin) {
    for (double& v : gin[0]) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor mean(const Tensor& x, std::size_t axis) {
  AxisSplit s = split_axis(x.shape(), axis, "mean");
  Shape shape = x.shape();
  shape[axis] = 1;
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto xd = x.data();
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += xd[(o * s.extent + e) * s.inner + i] * inv;
  return make_op(std::move(shape), std::move(out), {x},
                 [s, inv](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t o = 0; o < s.outer; ++o)
                     for (std::size_t e = 0; e < s.extent; ++e)
                       for (std::size_t i = 0; i < s.inner; ++i)
                         gin[0][(o * s.extent + e) * s.inner + i] += g[o * s.inner + i] * inv;
                 });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  AxisSplit s = split_axis(x.shape(), axis, "softmax");
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xd[base + e * s.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        double v = std::exp(xd[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        z += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= z;
    }
  }
  if (!x.requires_grad()) return Tensor::from_data(x.shape(), std::move(out));
  std::vector<double> y = out;
  return make_op(x.shape(), std::move(out), {x},
                 [s, y = std::move(y)](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     for (std::size_t i = 0; i < s.inner; ++i) {
                       const std::size_t base = o * s.extent * s.inner + i;
                       double dot = 0.0;
                       for (std::size_t e = 0; e < s.extent; ++e) {
                         dot += g[base + e * s.inner] * y[base + e * s.inner];
                       }
                       for (std::size_t e = 0; e < s.extent; ++e) {
                         const std::size_t k = base + e * s.inner;
                         gin[0][k] += y[k] * (g[k] - dot);
                       }
                     }
                   }
                 });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xd[base + e * s.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) z += std::exp(xd[base + e * s.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[base + e * s.inner] = xd[base + e * s.inner] - lz;
      }
    }
  }
  if (!x.requires_grad()) return Tensor::from_data(x.shape(), std::move(out));
  std::vector<double> y = out;
  return make_op(x.shape(), std::move(out), {x},
                 [s, y = std::move(y)](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     for (std::size_t i = 0; i < s.inner; ++i) {
                       const std::size_t base = o * s.extent * s.inner + i;
                       double gs = 0.0;
                       for (std::size_t e = 0; e < s.extent; ++e) gs += g[base + e * s.inner];
                       for (std::size_t e = 0; e < s.extent; ++e) {
                         const std::size_t k = base + e * s.inner;
                         gin[0][k] += g[k] - std::exp(y[k]) * gs;
                       }
                     }
                   }
                 });
}

Tensor glu(const Tensor& x, std::size_t axis) {
  AxisSplit s = split_axis(x.shape(), axis, "glu");
  if (s.extent % 2 != 0) {
    throw DimensionError("glu: axis extent " + std::to_string(s.extent) + " is odd");
  }
  const std::size_t half = s.extent / 2;
  Shape shape = x.shape();
  shape[axis] = half;
  auto xd = x.data();
  std::vector<double> out(s.outer * half * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < half; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double a = xd[(o * s.extent + e) * s.inner + i];
        const double b = xd[(o * s.extent + e + half) * s.inner + i];
        out[(o * half + e) * s.inner + i] = a * sigm(b);
      }
  return make_op(std::move(shape), std::move(out), {x},
                 [x, s, half](std::span<const double> g, std::span<const GradSpan> gin) {
                   auto xd = x.data();
                   for (std::size_t o = 0; o < s.outer; ++o)
                     for (std::size_t e = 0; e < half; ++e)
                       for (std::size_t i = 0; i < s.inner; ++i) {
                         const std::size_t ia = (o * s.extent + e) * s.inner + i;
                         const std::size_t ib = (o * s.extent + e + half) * s.inner + i;
                         const double gv = g[(o * half + e) * s.inner + i];
                         const double sb = sigm(xd[ib]);
                         gin[0][ia] += gv * sb;
                         gin[0][ib] += gv * xd[ia] * sb * (1.0 - sb);
                       }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: affine parameters do not match " + std::to_string(c) +
                         " channels");
  }
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * c + j] = h;
      out[r * c + j] = h * gd[j] + bd[j];
    }
  }
  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c](
          std::span<const double> g, std::span<const GradSpan> gin) {
        auto gd = gamma.data();
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * c;
          const double* hr = xhat.data() + r * c;
          if (!gin[1].empty())
            for (std::size_t j = 0; j < c; ++j) gin[1][j] += gr[j] * hr[j];
          if (!gin[2].empty())
            for (std::size_t j = 0; j < c; ++j) gin[2][j] += gr[j];
          if (!gin[0].empty()) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double dh = gr[j] * gd[j];
              m1 += dh;
              m2 += dh * hr[j];
            }
            m1 *= inv_c;
            m2 *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
              const double dh = gr[j] * gd[j];
              gin[0][r * c + j] += inv_std[r] * (dh - m1 - hr[j] * m2);
            }
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats stats,
                  NormMode mode, const PadMask& mask) {
  require_rank(x, 2, "batch_norm");
  const std::size_t len = x.dim(0), c = x.dim(1);
  if (gamma.numel() != c || beta.numel() != c || stats.running_mean.size() != c ||
      stats.running_var.size() != c) {
    throw DimensionError("batch_norm: parameters do not match " + std::to_string(c) +
                         " channels");
  }
  if (!mask.empty() && mask.size() != len) {
    throw DimensionError("batch_norm: mask length " + std::to_string(mask.size()) +
                         " for sequence length " + std::to_string(len));
  }
  auto real = [&mask](std::size_t t) { return mask.empty() || !mask[t]; };
  std::size_t n = 0;
  for (std::size_t t = 0; t < len; ++t) n += real(t) ? 1 : 0;
  if (n == 0) throw ContractError("batch_norm: every frame is padded");

  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> mu(c, 0.0), inv_std(c);
  if (mode == NormMode::kTrain) {
    std::vector<double> var(c, 0.0);
    for (std::size_t t = 0; t < len; ++t)
      if (real(t))
        for (std::size_t j = 0; j < c; ++j) mu[j] += xd[t * c + j];
    for (double& m : mu) m /= static_cast<double>(n);
    for (std::size_t t = 0; t < len; ++t)
      if (real(t))
        for (std::size_t j = 0; j < c; ++j) {
          const double d = xd[t * c + j] - mu[j];
          var[j] += d * d;
        }
    for (std::size_t j = 0; j < c; ++j) {
      const double biased = var[j] / static_cast<double>(n);
      inv_std[j] = 1.0 / std::sqrt(biased + stats.eps);
      const double unbiased = n > 1 ? var[j] / static_cast<double>(n - 1) : biased;
      stats.running_mean[j] = (1.0 - stats.momentum) * stats.running_mean[j] + stats.momentum * mu[j];
      stats.running_var[j] = (1.0 - stats.momentum) * stats.running_var[j] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + stats.eps);
    }
  }

  std::vector<double> out(len * c, 0.0);
  std::vector<double> xhat(len * c, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    if (!real(t)) continue;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xd[t * c + j] - mu[j]) * inv_std[j];
      xhat[t * c + j] = h;
      out[t * c + j] = h * gd[j] + bd[j];
    }
  }
  const bool train = mode == NormMode::kTrain;
  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), mask, len, c, n, train](
          std::span<const double> g, std::span<const GradSpan> gin) {
        auto gd = gamma.data();
        auto real = [&mask](std::size_t t) { return mask.empty() || !mask[t]; };
        std::vector<double> sum_dh(c, 0.0), sum_dh_h(c, 0.0);
        for (std::size_t t = 0; t < len; ++t) {
          if (!real(t)) continue;
          for (std::size_t j = 0; j < c; ++j) {
            const double gv = g[t * c + j];
            const double h = xhat[t * c + j];
            if (!gin[1].empty()) gin[1][j] += gv * h;
            if (!gin[2].empty()) gin[2][j] += gv;
            sum_dh[j] += gv * gd[j];
            sum_dh_h[j] += gv * gd[j] * h;
          }
        }
        if (gin[0].empty()) return;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t t = 0; t < len; ++t) {
          if (!real(t)) continue;
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = g[t * c + j] * gd[j];
            if (train) {
              gin[0][t * c + j] +=
                  inv_std[j] * (dh - sum_dh[j] * inv_n - xhat[t * c + j] * sum_dh_h[j] * inv_n);
            } else {
              gin[0][t * c + j] += inv_std[j] * dh;
            }
          }
        }
      });
}

std::size_t conv1d_out_len(std::size_t len, std::size_t kernel, const Conv1dOptions& opts) {
  const std::size_t padded = len + opts.left_pad + opts.right_pad;
  if (opts.stride == 0) throw ConfigError("conv1d: stride must be positive");
  if (padded < kernel) {
    throw SizeError("conv1d: padded length " + std::to_string(padded) + " shorter than kernel " +
                    std::to_string(kernel));
  }
  return (padded - kernel) / opts.stride + 1;
}

namespace {

Tensor depthwise_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        const Conv1dOptions& opts) {
  const std::size_t len = x.dim(0), c = x.dim(1), k = weight.dim(2);
  const std::size_t out_len = conv1d_out_len(len, k, opts);
  // Tap-major copy of the weights so the channel loop is contiguous.
  std::vector<double> taps(k * c);
  auto wd = weight.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < k; ++j) taps[j * c + ch] = wd[ch * k + j];
  auto xd = x.data();
  std::vector<double> out(out_len * c, 0.0);
  const bool has_bias = bias.defined();
  for (std::size_t t = 0; t < out_len; ++t) {
    double* yr = out.data() + t * c;
    if (has_bias) std::copy_n(bias.data().begin(), c, yr);
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * opts.stride + j) -
                                 static_cast<std::ptrdiff_t>(opts.left_pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      const double* xr = xd.data() + static_cast<std::size_t>(src) * c;
      const double* wr = taps.data() + j * c;
      for (std::size_t ch = 0; ch < c; ++ch) yr[ch] += wr[ch] * xr[ch];
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op(
      {out_len, c}, std::move(out), std::move(inputs),
      [x, taps = std::move(taps), len, c, k, out_len, opts, has_bias](
          std::span<const double> g, std::span<const GradSpan> gin) {
        auto xd = x.data();
        std::vector<double> gtaps(gin[1].empty() ? 0 : k * c, 0.0);
        for (std::size_t t = 0; t < out_len; ++t) {
          const double* gr = g.data() + t * c;
          if (has_bias && !gin[2].empty())
            for (std::size_t ch = 0; ch < c; ++ch) gin[2][ch] += gr[ch];
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * opts.stride + j) -
                                       static_cast<std::ptrdiff_t>(opts.left_pad);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            const std::size_t s = static_cast<std::size_t>(src);
            if (!gin[0].empty()) {
              double* gx = gin[0].data() + s * c;
              const double* wr = taps.data() + j * c;
              for (std::size_t ch = 0; ch < c; ++ch) gx[ch] += gr[ch] * wr[ch];
            }
            if (!gtaps.empty()) {
              const double* xr = xd.data() + s * c;
              double* gw = gtaps.data() + j * c;
              for (std::size_t ch = 0; ch < c; ++ch) gw[ch] += gr[ch] * xr[ch];
            }
          }
        }
        for (std::size_t ch = 0; ch < gtaps.size() / std::max<std::size_t>(k, 1); ++ch)
          for (std::size_t j = 0; j < k; ++j) gin[1][ch * k + j] += gtaps[j * c + ch];
      });
}

// Patch matrix of one group: row t holds x[t*stride + j - left_pad, ci] at
// column ci*K + j, matching the (Cout, Cin_g, K) weight layout.
std::vector<double> im2col(std::span<const double> xd, std::size_t len, std::size_t cin,
                           std::size_t group_begin, std::size_t cin_g, std::size_t k,
                           std::size_t out_len, const Conv1dOptions& opts) {
  std::vector<double> cols(out_len * cin_g * k, 0.0);
  for (std::size_t t = 0; t < out_len; ++t) {
    double* row = cols.data() + t * cin_g * k;
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * opts.stride + j) -
                                 static_cast<std::ptrdiff_t>(opts.left_pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      const double* xr = xd.data() + static_cast<std::size_t>(src) * cin + group_begin;
      for (std::size_t ci = 0; ci < cin_g; ++ci) row[ci * k + j] = xr[ci];
    }
  }
  return cols;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv1dOptions opts) {
  require_rank(x, 2, "conv1d");
  require_rank(weight, 3, "conv1d");
  const std::size_t len = x.dim(0), cin = x.dim(1);
  const std::size_t cout = weight.dim(0), cin_g = weight.dim(1), k = weight.dim(2);
  if (opts.groups == 0 || cin % opts.groups != 0 || cout % opts.groups != 0 ||
      cin / opts.groups != cin_g) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", groups " + std::to_string(opts.groups));
  }
  if (bias.defined() && bias.numel() != cout) {
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " for " +
                         std::to_string(cout) + " output channels");
  }
  if (opts.groups == cin && cout == cin) return depthwise_conv1d(x, weight, bias, opts);

  const std::size_t out_len = conv1d_out_len(len, k, opts);
  const std::size_t groups = opts.groups, cout_g = cout / groups, patch = cin_g * k;
  auto xd = x.data();
  auto wd = weight.data();
  std::vector<double> out(out_len * cout, 0.0);
  MapM Y(out.data(), out_len, cout);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    std::vector<double> cols = im2col(xd, len, cin, gi * cin_g, cin_g, k, out_len, opts);
    Y.middleCols(gi * cout_g, cout_g).noalias() =
        MapC(cols.data(), out_len, patch) * MapC(wd.data() + gi * cout_g * patch, cout_g, patch).transpose();
  }
  const bool has_bias = bias.defined();
  if (has_bias) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), cout);

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op(
      {out_len, cout}, std::move(out), std::move(inputs),
      [x, weight, len, cin, cout, cin_g, k, out_len, opts, groups, cout_g, patch, has_bias](
          std::span<const double> g, std::span<const GradSpan> gin) {
        MapC G(g.data(), out_len, cout);
        auto xd = x.data();
        auto wd = weight.data();
        if (has_bias && !gin[2].empty()) {
          Eigen::Map<Eigen::RowVectorXd> gb(gin[2].data(), cout);
          for (Eigen::Index r = 0; r < G.rows(); ++r) gb += G.row(r);
        }
        for (std::size_t gi = 0; gi < groups; ++gi) {
          auto Gg = G.middleCols(gi * cout_g, cout_g);
          if (!gin[1].empty()) {
            std::vector<double> cols = im2col(xd, len, cin, gi * cin_g, cin_g, k, out_len, opts);
            MapM(gin[1].data() + gi * cout_g * patch, cout_g, patch).noalias() +=
                Gg.transpose() * MapC(cols.data(), out_len, patch);
          }
          if (!gin[0].empty()) {
            RowMat dcols = Gg * MapC(wd.data() + gi * cout_g * patch, cout_g, patch);
            for (std::size_t t = 0; t < out_len; ++t) {
              for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * opts.stride + j) -
                                           static_cast<std::ptrdiff_t>(opts.left_pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                double* gx = gin[0].data() + static_cast<std::size_t>(src) * cin + gi * cin_g;
                for (std::size_t ci = 0; ci < cin_g; ++ci) gx[ci] += dcols(t, ci * k + j);
              }
            }
          }
        }
      });
}

Tensor mask_rows(const Tensor& x, const PadMask& mask) {
  if (mask.empty()) return x;
  if (x.rank() == 0 || mask.size() != x.dim(0)) {
    throw DimensionError("mask_rows: mask of length " + std::to_string(mask.size()) +
                         " for tensor " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), c = x.numel() / rows;
  auto xd = x.data();
  std::vector<double> out(xd.begin(), xd.end());
  for (std::size_t r = 0; r < rows; ++r)
    if (mask[r]) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(r * c), c, 0.0);
  return make_op(x.shape(), std::move(out), {x},
                 [mask, rows, c](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t r = 0; r < rows; ++r) {
                     if (mask[r]) continue;
                     for (std::size_t j = 0; j < c; ++j) gin[0][r * c + j] += g[r * c + j];
                   }
                 });
}

Tensor index_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "index_rows");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  auto xd = x.data();
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) {
      throw DimensionError("index_rows: row " + std::to_string(idx[i]) + " of " +
                           std::to_string(n));
    }
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return make_op({idx.size(), c}, std::move(out), {x},
                 [idx, c](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     for (std::size_t j = 0; j < c; ++j) gin[0][idx[i] * c + j] += g[i * c + j];
                 });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> cols) {
  require_rank(x, 2, "pick");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (cols.size() != r) {
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " +
                         std::to_string(r) + " rows");
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  std::vector<double> out(r);
  auto xd = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] >= c) throw DimensionError("pick: column index out of range");
    out[i] = xd[i * c + idx[i]];
  }
  return make_op({r}, std::move(out), {x},
                 [idx, c](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t i = 0; i < idx.size(); ++i) gin[0][i * c + idx[i]] += g[i];
                 });
}

Tensor segment_mean(const Tensor& x,
                    std::span<const std::pair<std::size_t, std::size_t>> segments) {
  require_rank(x, 2, "segment_mean");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<std::pair<std::size_t, std::size_t>> segs(segments.begin(), segments.end());
  std::vector<double> out(segs.size() * c, 0.0);
  auto xd = x.data();
  for (std::size_t s = 0; s < segs.size(); ++s) {
    auto [b, e] = segs[s];
    if (b >= e || e > n) throw DimensionError("segment_mean: invalid row range");
    double* o = out.data() + s * c;
    for (std::size_t r = b; r < e; ++r)
      for (std::size_t j = 0; j < c; ++j) o[j] += xd[r * c + j];
    const double inv = 1.0 / static_cast<double>(e - b);
    for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
  }
  return make_op({segs.size(), c}, std::move(out), {x},
                 [segs, c](std::span<const double> g, std::span<const GradSpan> gin) {
                   for (std::size_t s = 0; s < segs.size(); ++s) {
                     auto [b, e] = segs[s];
                     const double inv = 1.0 / static_cast<double>(e - b);
                     for (std::size_t r = b; r < e; ++r)
                       for (std::size_t j = 0; j < c; ++j) gin[0][r * c + j] += g[s * c + j] * inv;
                   }
                 });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  std::vector<double> m(x.numel());
  for (double& v : m) v = keep(rng) ? inv : 0.0;
  return mul(x, Tensor::from_data(x.shape(), std::move(m)));
}

}  // namespace confhyena
