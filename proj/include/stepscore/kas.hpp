#pragma once

// Step segment selection and the key action scorer (KAS).
//
// For each step the longest run of that class in the labeling is taken as the
// representative segment, the final stage feature is average pooled over it,
// and k independent branches (FC -> learnable sigmoid) score the pooled
// vector. The step score is the branch mean; the video score is the sum of
// step scores. A step without frames scores 0.

#include "stepscore/common.hpp"
#include "stepscore/labels.hpp"
#include "stepscore/params.hpp"
#include "stepscore/segnet.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace stepscore {

/// Half-open frame span [start, end).
struct Span {
  Index start = 0;
  Index end = 0;
  Index length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct StepSegmentSelection {
  std::array<std::optional<Span>, kNumSteps> spans{};
  friend bool operator==(const StepSegmentSelection&, const StepSegmentSelection&) = default;
};

/// Longest maximal run per step class; ties go to the earliest run.
inline StepSegmentSelection select_step_segments(const FrameLabelSequence& labels) {
  StepSegmentSelection sel;
  Index pos = 0;
  for (const auto& run : labels.runs()) {
    const Index len = static_cast<Index>(run.length);
    if (LabelTaxonomy::is_step(run.cls)) {
      auto& best = sel.spans[static_cast<std::size_t>(run.cls)];
      if (!best || len > best->length()) best = Span{pos, pos + len};
    }
    pos += len;
  }
  return sel;
}

inline RowVec pool_segment(const Mat& feature, const Span& span) {
  if (span.length() <= 0) throw Error("pool_segment: empty span");
  if (span.start < 0 || span.end > feature.rows()) {
    throw Error("pool_segment: span [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                ") outside [0, " + std::to_string(feature.rows()) + ")");
  }
  return feature.middleRows(span.start, span.length()).colwise().mean();
}

/// 1 / (1 + exp(-steepness * x)), evaluated without overflow.
inline double learnable_sigmoid(double x, double steepness) {
  const double z = steepness * x;
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct SigmoidGrad {
  double dx = 0.0;
  double dsteepness = 0.0;
};

/// Partial derivatives of learnable_sigmoid(x, steepness).
inline SigmoidGrad learnable_sigmoid_grad(double x, double steepness) {
  const double y = learnable_sigmoid(x, steepness);
  const double s = y * (1.0 - y);
  return {steepness * s, x * s};
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double logistic(double x) { return learnable_sigmoid(x, 1.0); }

/// FC (D_n -> 1) followed by a learnable sigmoid. The steepness is stored as
/// softplus(rho) so it stays positive.
struct KasBranch {
  Param w;    // 1 x D_n
  Param b;    // 1 x 1
  Param rho;  // 1 x 1

  double steepness() const { return softplus(rho.value(0, 0)); }
  double pre_activation(const RowVec& feature) const { return w.value.row(0).dot(feature) + b.value(0, 0); }
};

struct KasStepParams {
  std::vector<KasBranch> branches;
};

struct KasParams {
  std::array<KasStepParams, kNumSteps> steps;

  KasParams() = default;

  KasParams(Index feature_dim, int branches, double sigmoid_init, bool learnable) {
    for (auto& s : steps) {
      s.branches.resize(static_cast<std::size_t>(branches));
      for (auto& br : s.branches) {
        br.w = Param(1, feature_dim);
        br.b = Param(1, 1);
        br.rho = Param(1, 1);
        br.rho.value(0, 0) = softplus_inverse(sigmoid_init);
        br.rho.trainable = learnable;
      }
    }
  }

  void init(Rng& rng) {
    for (auto& s : steps) {
      for (auto& br : s.branches) br.w.init_uniform(rng, br.w.value.cols());
    }
  }

  template <class F>
  void for_each_param(F&& f) {
    for (int i = 0; i < kNumSteps; ++i) {
      auto& s = steps[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < s.branches.size(); ++j) {
        const std::string p = "kas.step" + std::to_string(i + 1) + ".branch" + std::to_string(j + 1) + ".";
        visit_param(f, p, "w", s.branches[j].w);
        visit_param(f, p, "b", s.branches[j].b);
        visit_param(f, p, "rho", s.branches[j].rho);
      }
    }
  }
};

struct StepScore {
  std::vector<double> branch_scores;
  double score = 0.0;
};

inline StepScore score_step(const RowVec& segment_feature, const KasStepParams& params) {
  if (params.branches.empty()) throw Error("score_step: no branches");
  StepScore out;
  for (const auto& br : params.branches) {
    out.branch_scores.push_back(learnable_sigmoid(br.pre_activation(segment_feature), br.steepness()));
    out.score += out.branch_scores.back();
  }
  out.score /= static_cast<double>(params.branches.size());
  return out;
}

/// Accumulates gradients of `grad_score * s_i` into the branch parameters and
/// returns d s_i / d(segment feature) scaled by `grad_score`.
inline RowVec score_step_backward(const RowVec& segment_feature, double grad_score, KasStepParams& params) {
  const double k = static_cast<double>(params.branches.size());
  RowVec dfeat = RowVec::Zero(segment_feature.size());
  for (auto& br : params.branches) {
    const double x = br.pre_activation(segment_feature);
    const SigmoidGrad g = learnable_sigmoid_grad(x, br.steepness());
    const double dy = grad_score / k;
    const double dx = dy * g.dx;
    const double dlam = dy * g.dsteepness;
    br.w.grad.row(0) += dx * segment_feature;
    br.b.grad(0, 0) += dx;
    br.rho.grad(0, 0) += dlam * logistic(br.rho.value(0, 0));
    dfeat += dx * br.w.value.row(0);
  }
  return dfeat;
}

struct StepAssessment {
  StepSegmentSelection selection;
  /// Per step, one score per branch; empty for absent steps.
  std::array<std::vector<double>, kNumSteps> branch_scores{};
  std::array<double, kNumSteps> step_scores{};
  double total = 0.0;
};

inline StepAssessment assess_video(const Mat& final_feature, const StepSegmentSelection& selection,
                                   const KasParams& params) {
  StepAssessment out;
  out.selection = selection;
  for (int i = 0; i < kNumSteps; ++i) {
    const auto& span = selection.spans[static_cast<std::size_t>(i)];
    if (!span) continue;
    const StepScore s = score_step(pool_segment(final_feature, *span), params.steps[static_cast<std::size_t>(i)]);
    out.branch_scores[static_cast<std::size_t>(i)] = s.branch_scores;
    out.step_scores[static_cast<std::size_t>(i)] = s.score;
    out.total += s.score;
  }
  return out;
}

/// Routes segments by the network's own prediction.
inline StepAssessment assess_video(const SegmentationOutput& seg, const KasParams& params) {
  return assess_video(seg.final_feature, select_step_segments(seg.predicted_labels), params);
}

/// Gradient of `grad_total * S` w.r.t. the final feature matrix. Selection is
/// treated as fixed routing.
inline Mat assess_video_backward(const Mat& final_feature, const StepSegmentSelection& selection, double grad_total,
                                 KasParams& params) {
  Mat dfeat = Mat::Zero(final_feature.rows(), final_feature.cols());
  for (int i = 0; i < kNumSteps; ++i) {
    const auto& span = selection.spans[static_cast<std::size_t>(i)];
    if (!span) continue;
    const RowVec pooled = pool_segment(final_feature, *span);
    const RowVec dpooled = score_step_backward(pooled, grad_total, params.steps[static_cast<std::size_t>(i)]);
    dfeat.middleRows(span->start, span->length()).rowwise() += dpooled / static_cast<double>(span->length());
  }
  return dfeat;
}

// ---------------------------------------------------------------------------
// Whole-video regression baseline: average pool over all frames, then a
// two-layer MLP to a scalar.

struct BaselineParams {
  Param w1, b1, w2, b2;

  BaselineParams() = default;
  BaselineParams(Index input_dim, Index hidden) : w1(input_dim, hidden), b1(1, hidden), w2(hidden, 1), b2(1, 1) {}

  void init(Rng& rng) {
    w1.init_uniform(rng, w1.value.rows());
    w2.init_uniform(rng, w2.value.rows());
  }

  template <class F>
  void for_each_param(F&& f) {
    visit_param(f, "baseline.", "w1", w1);
    visit_param(f, "baseline.", "b1", b1);
    visit_param(f, "baseline.", "w2", w2);
    visit_param(f, "baseline.", "b2", b2);
  }
};

inline double whole_video_baseline(const Mat& features, const BaselineParams& p) {
  require_shape(features.cols() == p.w1.value.rows(), "baseline: feature dimension mismatch");
  const RowVec pooled = features.colwise().mean();
  const RowVec hidden = (pooled * p.w1.value + p.b1.value).cwiseMax(0.0);
  return (hidden * p.w2.value)(0, 0) + p.b2.value(0, 0);
}

inline void whole_video_baseline_backward(const Mat& features, double grad_out, BaselineParams& p) {
  const RowVec pooled = features.colwise().mean();
  const RowVec pre = pooled * p.w1.value + p.b1.value;
  const RowVec hidden = pre.cwiseMax(0.0);
  p.w2.grad.col(0) += grad_out * hidden.transpose();
  p.b2.grad(0, 0) += grad_out;
  RowVec dpre = grad_out * p.w2.value.col(0).transpose();
  dpre.array() *= (pre.array() > 0.0).cast<double>();
  p.w1.grad.noalias() += pooled.transpose() * dpre;
  p.b1.grad.row(0) += dpre;
}

}  // namespace stepscore
