// Copyright 2026 The confhyena Authors
// Licensed under the Apache License, Version 2.0

#include "confhyena/attention/attention.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "confhyena/numerics/errors.hpp"

namespace confhyena {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;
using ColsC = Eigen::Map<const RowMat, 0, Stride>;
using ColsM = Eigen::Map<RowMat, 0, Stride>;

constexpr double kMaskedLogit = -1e30;
// Query rows per block of the relative-position product.
constexpr std::size_t kRelBlock = 64;

ColsC head_cols(std::span<const double> data, std::size_t rows, std::size_t width,
                std::size_t head, std::size_t dk) {
  return ColsC(data.data() + head * dk, rows, dk, Stride(width));
}

ColsM head_cols(GradSpan data, std::size_t rows, std::size_t width, std::size_t head,
                std::size_t dk) {
  return ColsM(data.data() + head * dk, rows, dk, Stride(width));
}

// scores[i, j] += qv_i . pos[i - j + L - 1] for a (L, L) score block.
// Fixed summation order; colwise().sum() varies with buffer alignment.
void add_row_sums(const RowMat& m, double* out) {
  Eigen::Map<Eigen::RowVectorXd> acc(out, m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) acc += m.row(r);
}

void add_relative_scores(const RowMat& qv, const ColsC& pos, RowMat& scores) {
  const std::size_t len = static_cast<std::size_t>(qv.rows());
  for (std::size_t i0 = 0; i0 < len; i0 += kRelBlock) {
    const std::size_t b = std::min(kRelBlock, len - i0);
    const std::size_t span = b + len - 1;
    RowMat g = qv.middleRows(i0, b) * pos.middleRows(i0, span).transpose();
    for (std::size_t r = 0; r < b; ++r) {
      double* srow = scores.row(i0 + r).data();
      const double* grow = g.row(r).data();
      for (std::size_t j = 0; j < len; ++j) srow[j] += grow[r + len - 1 - j];
    }
  }
}

// Backward of add_relative_scores for one head.
void relative_scores_backward(const RowMat& ds, const RowMat& qv, const ColsC& pos,
                              RowMat& dqv, ColsM* dpos) {
  const std::size_t len = static_cast<std::size_t>(qv.rows());
  for (std::size_t i0 = 0; i0 < len; i0 += kRelBlock) {
    const std::size_t b = std::min(kRelBlock, len - i0);
    const std::size_t span = b + len - 1;
    RowMat e = RowMat::Zero(b, span);
    for (std::size_t r = 0; r < b; ++r) {
      const double* drow = ds.row(i0 + r).data();
      double* erow = e.row(r).data();
      for (std::size_t j = 0; j < len; ++j) erow[r + len - 1 - j] = drow[j];
    }
    dqv.middleRows(i0, b).noalias() += e * pos.middleRows(i0, span);
    if (dpos) dpos->middleRows(i0, span).noalias() += e.transpose() * qv.middleRows(i0, b);
  }
}

}  // namespace

void AttentionSpec::validate() const {
  if (model_dim == 0 || heads == 0) throw ConfigError("attention sizes must be positive");
  if (model_dim % heads != 0) {
    throw ConfigError("attention model_dim " + std::to_string(model_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
}

Tensor relative_position_table(std::size_t len, std::size_t dim) {
  if (len == 0) throw SizeError("relative_position_table: empty sequence");
  const std::size_t rows = 2 * len - 1;
  std::vector<double> out(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double dist = static_cast<double>(r) - static_cast<double>(len - 1);
    for (std::size_t m = 0; m < dim; m += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(m) / static_cast<double>(dim));
      out[r * dim + m] = std::sin(dist * freq);
      if (m + 1 < dim) out[r * dim + m + 1] = std::cos(dist * freq);
    }
  }
  return Tensor::from_data({rows, dim}, std::move(out));
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& pos,
                      const Tensor& bias_u, const Tensor& bias_v,
                      const AttentionCoreOptions& opts) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || k.shape() != v.shape() ||
      q.dim(1) != k.dim(1)) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  }
  const std::size_t lq = q.dim(0), lk = k.dim(0), d = q.dim(1), heads = opts.heads;
  if (heads == 0 || d % heads != 0) throw ConfigError("attention: bad head count");
  const std::size_t dk = d / heads;
  const bool relative = pos.defined();
  if (relative) {
    if (lq != lk || pos.rank() != 2 || pos.dim(0) != 2 * lq - 1 || pos.dim(1) != d) {
      throw DimensionError("attention: relative table " + shape_str(pos.shape()) +
                           " for length " + std::to_string(lq));
    }
  }
  const bool has_u = bias_u.defined(), has_v = bias_v.defined();
  if ((has_u && bias_u.numel() != d) || (has_v && bias_v.numel() != d)) {
    throw DimensionError("attention: content/position bias must have model_dim entries");
  }
  const PadMask& km = opts.key_mask;
  if (!km.empty() && km.size() != lk) {
    throw DimensionError("attention: key mask of length " + std::to_string(km.size()) +
                         " for " + std::to_string(lk) + " keys");
  }
  // Every query needs at least one allowed key.
  std::size_t first_key = 0;
  while (first_key < lk && !km.empty() && km[first_key]) ++first_key;
  if (first_key == lk || lk == 0) throw ContractError("attention: every key position is masked");
  if (opts.causal && first_key > 0) {
    throw ContractError("attention: leading queries have no unmasked causal key");
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  auto qd = q.data(), kd = k.data(), vd = v.data();
  const bool keep = q.requires_grad() || k.requires_grad() || v.requires_grad() ||
                    (relative && pos.requires_grad()) || (has_u && bias_u.requires_grad()) ||
                    (has_v && bias_v.requires_grad());
  auto saved = std::make_shared<std::vector<RowMat>>();
  if (keep) saved->reserve(heads);

  std::vector<double> out(lq * d, 0.0);
  RowMat scores(lq, lk);
  for (std::size_t h = 0; h < heads; ++h) {
    ColsC qh = head_cols(qd, lq, d, h, dk);
    ColsC kh = head_cols(kd, lk, d, h, dk);
    ColsC vh = head_cols(vd, lk, d, h, dk);
    RowMat qu = qh;
    if (has_u) qu.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_u.data().data() + h * dk, dk);
    scores.noalias() = qu * kh.transpose();
    if (relative) {
      RowMat qv = qh;
      if (has_v) qv.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_v.data().data() + h * dk, dk);
      add_relative_scores(qv, head_cols(pos.data(), 2 * lq - 1, d, h, dk), scores);
    }
    for (std::size_t i = 0; i < lq; ++i) {
      double* row = scores.row(i).data();
      double mx = kMaskedLogit;
      for (std::size_t j = 0; j < lk; ++j) {
        row[j] *= scale;
        if ((!km.empty() && km[j]) || (opts.causal && j > i)) row[j] += kMaskedLogit;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < lk; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      const double inv = 1.0 / z;
      for (std::size_t j = 0; j < lk; ++j) row[j] *= inv;
    }
    ColsM(out.data() + h * dk, lq, dk, Stride(d)).noalias() = scores * vh;
    if (keep) saved->push_back(scores);
  }

  std::vector<Tensor> inputs{q, k, v};
  inputs.push_back(relative ? pos : Tensor());
  inputs.push_back(has_u ? bias_u : Tensor());
  inputs.push_back(has_v ? bias_v : Tensor());
  // make_op needs defined inputs; substitute constants for absent ones.
  for (Tensor& t : inputs)
    if (!t.defined()) t = Tensor::scalar(0.0);

  return make_op(
      {lq, d}, std::move(out), std::move(inputs),
      [q, k, v, pos, bias_u, bias_v, saved, lq, lk, d, dk, heads, scale, relative, has_u, has_v](
          std::span<const double> g, std::span<const GradSpan> gin) {
        auto qd = q.data(), kd = k.data(), vd = v.data();
        for (std::size_t h = 0; h < heads; ++h) {
          const RowMat& p = (*saved)[h];
          ColsC qh = head_cols(qd, lq, d, h, dk);
          ColsC kh = head_cols(kd, lk, d, h, dk);
          ColsC vh = head_cols(vd, lk, d, h, dk);
          ColsC gh(g.data() + h * dk, lq, dk, Stride(d));
          if (!gin[2].empty()) head_cols(gin[2], lk, d, h, dk).noalias() += p.transpose() * gh;
          RowMat ds = gh * vh.transpose();
          for (std::size_t i = 0; i < lq; ++i) {
            const double dot = p.row(i).dot(ds.row(i));
            ds.row(i) = (p.row(i).array() * (ds.row(i).array() - dot) * scale).matrix();
          }
          RowMat qu = qh;
          if (has_u) qu.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_u.data().data() + h * dk, dk);
          if (!gin[1].empty()) head_cols(gin[1], lk, d, h, dk).noalias() += ds.transpose() * qu;
          RowMat dq = ds * kh;
          if (has_u && !gin[4].empty()) {
            add_row_sums(dq, gin[4].data() + h * dk);
          }
          if (relative) {
            RowMat qv = qh;
            if (has_v) qv.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_v.data().data() + h * dk, dk);
            RowMat dqv = RowMat::Zero(lq, dk);
            ColsC ph = head_cols(pos.data(), 2 * lq - 1, d, h, dk);
            if (!gin[3].empty()) {
              ColsM dph = head_cols(gin[3], 2 * lq - 1, d, h, dk);
              relative_scores_backward(ds, qv, ph, dqv, &dph);
            } else {
              relative_scores_backward(ds, qv, ph, dqv, nullptr);
            }
            if (has_v && !gin[5].empty()) {
              add_row_sums(dqv, gin[5].data() + h * dk);
            }
            dq += dqv;
          }
          if (!gin[0].empty()) head_cols(gin[0], lq, d, h, dk).noalias() += dq;
        }
      });
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& prefix,
                                       const AttentionSpec& spec)
    : store_(&store), prefix_(prefix), spec_(spec) {
  spec_.validate();
  const std::size_t d = spec_.model_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  auto proj = [&](const char* name, ParamRef& w, ParamRef& b) {
    w = store.add(prefix_ + "." + name + ".weight", {d, d}, init::uniform(bound));
    b = store.add(prefix_ + "." + name + ".bias", {d}, init::uniform(bound));
  };
  proj("q_proj", wq_, bq_);
  proj("k_proj", wk_, bk_);
  proj("v_proj", wv_, bv_);
  proj("out_proj", wo_, bo_);
  if (spec_.relative) {
    w_pos_ = store.add(prefix_ + ".pos_proj.weight", {d, d}, init::uniform(bound));
    const double xavier = std::sqrt(6.0 / static_cast<double>(spec_.heads + spec_.head_dim()));
    bias_u_ = store.add(prefix_ + ".pos_bias_u", {d}, init::uniform(xavier));
    bias_v_ = store.add(prefix_ + ".pos_bias_v", {d}, init::uniform(xavier));
  }
}

std::size_t MultiHeadAttention::param_count() const {
  const std::size_t d = spec_.model_dim;
  std::size_t n = 4 * (d * d + d);
  if (spec_.relative) n += d * d + 2 * d;
  return n;
}

Tensor MultiHeadAttention::project_out(const Tensor& ctx) const {
  return linear(ctx, store_->get(wo_), store_->get(bo_));
}

Tensor MultiHeadAttention::self_attention(const Tensor& x, const PadMask& mask, bool causal) const {
  if (x.rank() != 2 || x.dim(1) != spec_.model_dim) {
    throw DimensionError("self_attention: input " + shape_str(x.shape()));
  }
  const std::size_t len = x.dim(0);
  Tensor q = linear(x, store_->get(wq_), store_->get(bq_));
  Tensor k = linear(x, store_->get(wk_), store_->get(bk_));
  Tensor v = linear(x, store_->get(wv_), store_->get(bv_));
  AttentionCoreOptions opts{spec_.heads, causal, mask};
  Tensor ctx;
  if (spec_.relative) {
    Tensor pos = linear(relative_position_table(len, spec_.model_dim), store_->get(w_pos_));
    ctx = attention_core(q, k, v, pos, store_->get(bias_u_), store_->get(bias_v_), opts);
  } else {
    ctx = attention_core(q, k, v, {}, {}, {}, opts);
  }
  return mask_rows(project_out(ctx), mask);
}

Tensor MultiHeadAttention::cross_attention(const Tensor& query, const Tensor& memory,
                                           const PadMask& memory_mask) const {
  Tensor q = linear(query, store_->get(wq_), store_->get(bq_));
  Tensor k = linear(memory, store_->get(wk_), store_->get(bk_));
  Tensor v = linear(memory, store_->get(wv_), store_->get(bv_));
  AttentionCoreOptions opts{spec_.heads, false, memory_mask};
  return project_out(attention_core(q, k, v, {}, {}, {}, opts));
}

}  // namespace confhyena
