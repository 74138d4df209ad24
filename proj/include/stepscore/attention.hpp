#pragma once

// Kernelized self-attention over the frames of a stage feature. Query, key and
// value are all projections of the same feature matrix; no positional encoding
// is added. Similarity is sim(q, k) = theta(q) . theta(k) with
// theta(x) = elu(x) + 1, which lets the key/value summaries be computed once
// and shared by every query (linear in T). The quadratic variant materializes
// the similarity matrix explicitly and serves as a reference.

#include "stepscore/common.hpp"
#include "stepscore/params.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stepscore {

inline constexpr double kAttentionEps = 1e-9;

/// theta(x) = elu(x) + 1; strictly positive.
inline double feature_map(double x) { return x > 0.0 ? x + 1.0 : std::exp(x); }

inline Mat feature_map(const Mat& x) {
  return x.unaryExpr([](double v) { return feature_map(v); });
}

/// d theta / dx evaluated at x.
inline Mat feature_map_grad(const Mat& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

struct AttentionParams {
  Param wq, wk, wv;

  AttentionParams() = default;
  explicit AttentionParams(Index dim) : wq(dim, dim), wk(dim, dim), wv(dim, dim) {}

  Index dim() const { return wq.value.rows(); }

  void init(Rng& rng) {
    wq.init_uniform(rng, dim());
    wk.init_uniform(rng, dim());
    wv.init_uniform(rng, dim());
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    visit_param(f, prefix, "wq", wq);
    visit_param(f, prefix, "wk", wk);
    visit_param(f, prefix, "wv", wv);
  }
};

struct AttentionCache {
  Mat input;     // F
  Mat q, k, v;   // projections
  Mat tq, tk;    // theta(Q), theta(K)
  Mat kv;        // sum_j theta(K_j) V_j^T   (D x D), linear mode only
  RowVec ksum;   // sum_j theta(K_j)         (1 x D), linear mode only
  Eigen::VectorXd den;
  Mat out;
};

namespace detail {

inline void project(const Mat& f, const AttentionParams& p, AttentionCache& c) {
  require_shape(f.cols() == p.dim(), "attention: input has " + std::to_string(f.cols()) + " channels, params expect " +
                                         std::to_string(p.dim()));
  require_shape(f.rows() >= 1, "attention: empty sequence");
  c.input = f;
  c.q.noalias() = f * p.wq.value;
  c.k.noalias() = f * p.wk.value;
  c.v.noalias() = f * p.wv.value;
  c.tq = feature_map(c.q);
  c.tk = feature_map(c.k);
}

/// Shared tail of both backward passes: from d theta(Q), d theta(K), dV to
/// parameter gradients and dF.
inline Mat finish_backward(const AttentionCache& c, const Mat& d_tq, const Mat& d_tk, const Mat& dv,
                           AttentionParams& p) {
  const Mat dq = d_tq.cwiseProduct(feature_map_grad(c.q));
  const Mat dk = d_tk.cwiseProduct(feature_map_grad(c.k));
  p.wq.grad.noalias() += c.input.transpose() * dq;
  p.wk.grad.noalias() += c.input.transpose() * dk;
  p.wv.grad.noalias() += c.input.transpose() * dv;
  Mat df = dq * p.wq.value.transpose();
  df.noalias() += dk * p.wk.value.transpose();
  df.noalias() += dv * p.wv.value.transpose();
  return df;
}

}  // namespace detail

/// O(T) attention. Fills `cache` for the backward pass when given.
inline Mat linear_attention(const Mat& f, const AttentionParams& p, AttentionCache* cache = nullptr) {
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  detail::project(f, p, c);
  c.kv.noalias() = c.tk.transpose() * c.v;
  c.ksum = c.tk.colwise().sum();
  c.den = (c.tq * c.ksum.transpose()).array() + kAttentionEps;
  c.out.noalias() = c.tq * c.kv;
  c.out.array().colwise() /= c.den.array();
  return c.out;
}

/// Gradient of the loss w.r.t. the attention input, given dL/d(output).
/// Parameter gradients are accumulated into `p`.
inline Mat linear_attention_backward(const AttentionCache& c, const Mat& grad_out, AttentionParams& p) {
  require_shape(grad_out.rows() == c.out.rows() && grad_out.cols() == c.out.cols(), "attention backward: grad shape");
  // out_i = num_i / den_i with num_i = tq_i kv, den_i = tq_i . ksum + eps
  Mat dnum = grad_out;
  dnum.array().colwise() /= c.den.array();
  const Eigen::VectorXd dden = -(grad_out.cwiseProduct(c.out).rowwise().sum().array() / c.den.array()).matrix();

  Mat d_tq = dnum * c.kv.transpose();
  d_tq.noalias() += dden * c.ksum;
  const Mat dkv = c.tq.transpose() * dnum;          // D x D
  const RowVec dksum = dden.transpose() * c.tq;     // 1 x D

  Mat d_tk = c.v * dkv.transpose();
  d_tk.rowwise() += dksum;
  const Mat dv = c.tk * dkv;
  return detail::finish_backward(c, d_tq, d_tk, dv, p);
}

/// Rows processed per block by the quadratic reference; bounds memory at
/// O(block * T) while the arithmetic stays O(T^2).
inline constexpr Index kQuadraticBlock = 256;

/// O(T^2) reference: explicit similarity matrix S = theta(Q) theta(K)^T,
/// out_i = sum_j S_ij V_j / sum_j S_ij.
inline Mat quadratic_attention_reference(const Mat& f, const AttentionParams& p, AttentionCache* cache = nullptr) {
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  detail::project(f, p, c);
  const Index T = f.rows();
  c.out.resize(T, p.dim());
  c.den.resize(T);
  for (Index r0 = 0; r0 < T; r0 += kQuadraticBlock) {
    const Index n = std::min(kQuadraticBlock, T - r0);
    const Mat s = c.tq.middleRows(r0, n) * c.tk.transpose();  // n x T
    c.den.segment(r0, n) = s.rowwise().sum().array() + kAttentionEps;
    c.out.middleRows(r0, n).noalias() = s * c.v;
    c.out.middleRows(r0, n).array().colwise() /= c.den.segment(r0, n).array();
  }
  return c.out;
}

inline Mat quadratic_attention_backward(const AttentionCache& c, const Mat& grad_out, AttentionParams& p) {
  require_shape(grad_out.rows() == c.out.rows() && grad_out.cols() == c.out.cols(), "attention backward: grad shape");
  const Index T = c.out.rows();
  Mat d_tq(T, p.dim());
  Mat d_tk = Mat::Zero(T, p.dim());
  Mat dv = Mat::Zero(T, p.dim());
  for (Index r0 = 0; r0 < T; r0 += kQuadraticBlock) {
    const Index n = std::min(kQuadraticBlock, T - r0);
    const auto den = c.den.segment(r0, n).array();
    Mat dnum = grad_out.middleRows(r0, n);
    dnum.array().colwise() /= den;
    const Eigen::VectorXd dden =
        -(grad_out.middleRows(r0, n).cwiseProduct(c.out.middleRows(r0, n)).rowwise().sum().array() / den).matrix();
    const Mat s = c.tq.middleRows(r0, n) * c.tk.transpose();  // n x T
    Mat ds = dnum * c.v.transpose();                           // n x T
    ds.colwise() += dden;
    dv.noalias() += s.transpose() * dnum;
    d_tq.middleRows(r0, n).noalias() = ds * c.tk;
    d_tk.noalias() += ds.transpose() * c.tq.middleRows(r0, n);
  }
  return detail::finish_backward(c, d_tq, d_tk, dv, p);
}

}  // namespace stepscore
