#pragma once

// Training objectives: frame-wise cross entropy, truncated smoothing of
// consecutive log-probabilities, the per-stage segmentation loss, the
// assessment MSE and their unweighted sum.

#include "stepscore/common.hpp"
#include "stepscore/labels.hpp"
#include "stepscore/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace stepscore {

inline constexpr double kProbFloor = 1e-12;

struct LossConfig {
  double tau = 4.0;
  double lambda_t = 0.15;
  /// Per-stage multipliers; missing entries default to 1.
  std::vector<double> stage_weights;

  double stage_weight(std::size_t s) const { return s < stage_weights.size() ? stage_weights[s] : 1.0; }
};

namespace detail {

inline double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

inline void check_frames(Index rows, std::size_t frames, const char* what) {
  require_shape(static_cast<std::size_t>(rows) == frames,
                std::string(what) + ": " + std::to_string(rows) + " rows vs " + std::to_string(frames) + " labels");
}

}  // namespace detail

/// (1/T) sum_t -log y[t, c(t)] over softmax rows.
inline double cross_entropy_frames(const Mat& probs, std::span<const ClassId> frames) {
  detail::check_frames(probs.rows(), frames.size(), "cross_entropy");
  double sum = 0.0;
  for (Index t = 0; t < probs.rows(); ++t) sum -= detail::floored_log(probs(t, frames[static_cast<std::size_t>(t)]));
  return sum / static_cast<double>(probs.rows());
}

inline double cross_entropy_frames(const Mat& probs, const FrameLabelSequence& labels) {
  const auto frames = labels.decode();
  return cross_entropy_frames(probs, frames);
}

/// Cross entropy evaluated from logits; writes dL/dlogits when `grad` is set.
inline double cross_entropy_logits(const Mat& logits, std::span<const ClassId> frames, Mat* grad = nullptr) {
  detail::check_frames(logits.rows(), frames.size(), "cross_entropy");
  const Mat lp = log_softmax_rows(logits);
  const double T = static_cast<double>(logits.rows());
  const double floor = std::log(kProbFloor);
  double sum = 0.0;
  if (grad) *grad = lp.array().exp().matrix() / T;
  for (Index t = 0; t < lp.rows(); ++t) {
    const auto c = frames[static_cast<std::size_t>(t)];
    const double v = lp(t, c);
    if (v > floor) {
      sum -= v;
      if (grad) (*grad)(t, c) -= 1.0 / T;
    } else {
      sum -= floor;
      if (grad) grad->row(t).setZero();
    }
  }
  return sum / T;
}

/// (1/(T C)) sum_{t >= 1, c} min(|lp[t,c] - lp[t-1,c]|, tau)^2. The 1/(T C)
/// normalizer is kept although only T-1 transitions exist.
inline double truncated_smoothing_loss(const Mat& log_probs, double tau) {
  const Index T = log_probs.rows();
  const Index C = log_probs.cols();
  if (T < 2) return 0.0;
  double sum = 0.0;
  for (Index t = 1; t < T; ++t) {
    for (Index c = 0; c < C; ++c) {
      const double d = std::min(std::abs(log_probs(t, c) - log_probs(t - 1, c)), tau);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(T * C);
}

/// Smoothing loss from logits (log-probabilities floored at log 1e-12).
/// With `detach_previous` the gradient flows only into frame t of each pair,
/// treating frame t-1 as a constant.
inline double truncated_smoothing_logits(const Mat& logits, double tau, Mat* grad = nullptr, bool detach_previous = true) {
  const Index T = logits.rows();
  const Index C = logits.cols();
  const double floor = std::log(kProbFloor);
  const Mat raw = log_softmax_rows(logits);
  const Mat lp = raw.cwiseMax(floor);
  const double value = truncated_smoothing_loss(lp, tau);
  if (!grad) return value;

  Mat dlp = Mat::Zero(T, C);
  const double norm = static_cast<double>(T * C);
  for (Index t = 1; t < T; ++t) {
    for (Index c = 0; c < C; ++c) {
      const double d = lp(t, c) - lp(t - 1, c);
      if (std::abs(d) >= tau) continue;
      dlp(t, c) += 2.0 * d / norm;
      if (!detach_previous) dlp(t - 1, c) -= 2.0 * d / norm;
    }
  }
  dlp.array() *= (raw.array() > floor).cast<double>();
  const Mat probs = raw.array().exp().matrix();
  const Eigen::VectorXd rowsum = dlp.rowwise().sum();
  *grad = dlp;
  for (Index t = 0; t < T; ++t) grad->row(t) -= rowsum(t) * probs.row(t);
  return value;
}

struct SegmentationLoss {
  double total = 0.0;
  double classification = 0.0;  // summed over stages, weighted
  double smoothing = 0.0;       // summed over stages, weighted, before lambda
};

/// sum_s w_s (L_cls + lambda_T L_tmse). Fills per-stage logit gradients when
/// `grads` is set.
inline SegmentationLoss segmentation_loss(const std::vector<Mat>& per_stage_logits, std::span<const ClassId> frames,
                                          const LossConfig& cfg, std::vector<Mat>* grads = nullptr) {
  require_shape(!per_stage_logits.empty(), "segmentation_loss: no stages");
  SegmentationLoss out;
  if (grads) grads->assign(per_stage_logits.size(), {});
  for (std::size_t s = 0; s < per_stage_logits.size(); ++s) {
    const double w = cfg.stage_weight(s);
    Mat gce, gsm;
    const double ce = cross_entropy_logits(per_stage_logits[s], frames, grads ? &gce : nullptr);
    const double sm = truncated_smoothing_logits(per_stage_logits[s], cfg.tau, grads ? &gsm : nullptr);
    out.classification += w * ce;
    out.smoothing += w * sm;
    out.total += w * (ce + cfg.lambda_t * sm);
    if (grads) (*grads)[s] = w * (gce + cfg.lambda_t * gsm);
  }
  return out;
}

inline SegmentationLoss segmentation_loss(const std::vector<Mat>& per_stage_logits, const FrameLabelSequence& labels,
                                          const LossConfig& cfg) {
  const auto frames = labels.decode();
  return segmentation_loss(per_stage_logits, frames, cfg);
}

inline double assessment_mse(std::span<const double> predicted, std::span<const double> gt) {
  if (predicted.size() != gt.size()) {
    throw ShapeError("assessment_mse: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " targets");
  }
  if (predicted.empty()) throw ShapeError("assessment_mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) sum += (predicted[i] - gt[i]) * (predicted[i] - gt[i]);
  return sum / static_cast<double>(gt.size());
}

inline double total_loss(double segmentation, double mse) { return segmentation + mse; }

}  // namespace stepscore
