#pragma once

#include "stepscore/common.hpp"
#include "stepscore/labels.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stepscore {

struct Segment {
  ClassId cls = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive
  friend bool operator==(const Segment&, const Segment&) = default;
};

using SegmentList = std::vector<Segment>;

inline SegmentList to_segments(const FrameLabelSequence& labels) {
  SegmentList out;
  std::int64_t pos = 0;
  for (const auto& r : labels.runs()) {
    if (!out.empty() && out.back().cls == r.cls) {
      out.back().end += r.length;  // tolerate non-canonical input
    } else {
      out.push_back({r.cls, pos, pos + r.length});
    }
    pos += r.length;
  }
  return out;
}

struct MetricOptions {
  bool f1_exclude_background = true;
  bool edit_exclude_background = false;
};

inline constexpr std::array<double, 3> kF1Thresholds = {0.10, 0.25, 0.50};

/// 100 * matching frames / T.
inline double frame_accuracy(const FrameLabelSequence& pred, const FrameLabelSequence& gt) {
  const auto p = pred.decode();
  const auto g = gt.decode();
  require_shape(p.size() == g.size(), "frame_accuracy: " + std::to_string(p.size()) + " vs " +
                                          std::to_string(g.size()) + " frames");
  require_shape(!g.empty(), "frame_accuracy: empty sequence");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < g.size(); ++t) hits += p[t] == g[t];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(g.size());
}

/// Unit-cost Levenshtein distance.
inline std::size_t levenshtein(std::span<const ClassId> a, std::span<const ClassId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::vector<ClassId> segment_classes(const FrameLabelSequence& labels, bool exclude_background) {
  std::vector<ClassId> out;
  for (const auto& s : to_segments(labels)) {
    if (exclude_background && s.cls == kBackgroundClass) continue;
    out.push_back(s.cls);
  }
  return out;
}

/// 100 * (1 - levenshtein / max(|pred|, |gt|)) over collapsed segment strings.
inline double segmental_edit_score(const FrameLabelSequence& pred, const FrameLabelSequence& gt,
                                   const MetricOptions& opts = {}) {
  const auto p = segment_classes(pred, opts.edit_exclude_background);
  const auto g = segment_classes(gt, opts.edit_exclude_background);
  const std::size_t m = std::max(p.size(), g.size());
  if (m == 0) return 100.0;
  return 100.0 * (1.0 - static_cast<double>(levenshtein(p, g)) / static_cast<double>(m));
}

struct F1Counts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  F1Counts& operator+=(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }

  /// 100 * 2PR / (P + R); 0 when undefined.
  double f1() const {
    const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0;
  }
};

inline double segment_iou(const Segment& a, const Segment& b) {
  const auto inter = std::max<std::int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const auto uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// Greedy matching in prediction order: a predicted segment is a TP when its
/// best IoU against still-unmatched same-class GT segments reaches `threshold`.
inline F1Counts segmental_f1_counts(const FrameLabelSequence& pred, const FrameLabelSequence& gt, double threshold,
                                    const MetricOptions& opts = {}) {
  auto keep = [&](const Segment& s) { return !(opts.f1_exclude_background && s.cls == kBackgroundClass); };
  SegmentList p, g;
  for (const auto& s : to_segments(pred)) if (keep(s)) p.push_back(s);
  for (const auto& s : to_segments(gt)) if (keep(s)) g.push_back(s);

  std::vector<bool> matched(g.size(), false);
  F1Counts c;
  for (const auto& ps : p) {
    double best = -1.0;
    std::size_t best_idx = g.size();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (matched[j] || g[j].cls != ps.cls) continue;
      const double iou = segment_iou(ps, g[j]);
      if (iou > best) {
        best = iou;
        best_idx = j;
      }
    }
    if (best_idx < g.size() && best >= threshold) {
      matched[best_idx] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = static_cast<std::int64_t>(std::count(matched.begin(), matched.end(), false));
  return c;
}

inline double segmental_f1(const FrameLabelSequence& pred, const FrameLabelSequence& gt, double threshold,
                           const MetricOptions& opts = {}) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error("segmental_f1: threshold must lie in (0,1)");
  return segmental_f1_counts(pred, gt, threshold, opts).f1();
}

/// 1-based ranks; tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman's rho: Pearson correlation of average ranks.
inline double spearman(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw ShapeError("spearman: length mismatch");
  if (gt.size() < 2) throw Error("spearman: undefined correlation (need at least 2 samples)");
  const auto rp = average_ranks(pred);
  const auto rg = average_ranks(gt);
  const double n = static_cast<double>(gt.size());
  const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
  const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    sxy += (rp[i] - mp) * (rg[i] - mg);
    sxx += (rp[i] - mp) * (rp[i] - mp);
    syy += (rg[i] - mg) * (rg[i] - mg);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("spearman: undefined correlation (constant input)");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// (1/K) sum ((|s_k - s'_k|) / (s_max - s_min))^2, unscaled.
inline double relative_l2(std::span<const double> pred, std::span<const double> gt, double s_min, double s_max) {
  if (pred.size() != gt.size()) throw ShapeError("relative_l2: length mismatch");
  if (gt.empty()) throw Error("relative_l2: empty input");
  if (!(s_max > s_min)) throw Error("relative_l2: score range is empty (s_max == s_min)");
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double e = std::abs(gt[i] - pred[i]) / (s_max - s_min);
    sum += e * e;
  }
  return sum / static_cast<double>(gt.size());
}

/// Uses the ground-truth range of the given set.
inline double relative_l2(std::span<const double> pred, std::span<const double> gt) {
  if (gt.empty()) throw Error("relative_l2: empty input");
  const auto [lo, hi] = std::minmax_element(gt.begin(), gt.end());
  return relative_l2(pred, gt, *lo, *hi);
}

// ---------------------------------------------------------------------------
// Corpus report

struct MetricsReport {
  std::optional<double> acc;
  std::optional<double> edit;
  std::map<double, double> f1;  // keyed by 0.10, 0.25, 0.50
  std::optional<double> spearman;
  std::optional<double> r_l2_x100;
  std::size_t videos = 0;
};

inline nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json f1 = nlohmann::json::object();
  for (const auto& [k, v] : r.f1) f1[std::to_string(static_cast<int>(std::lround(k * 100)))] = v;
  return {{"acc", opt(r.acc)},       {"edit", opt(r.edit)},           {"f1", f1},
          {"spearman", opt(r.spearman)}, {"r_l2_x100", opt(r.r_l2_x100)}, {"videos", r.videos}};
}

inline std::string table_header() {
  return "F1@{10,25,50}        | Edit   | Acc    | Spearman | R-l2(*100)";
}

/// One row in the column order F1@{10,25,50} | Edit | Acc | Spearman | R-l2(*100).
inline std::string table_row(const MetricsReport& r) {
  auto num = [](const std::optional<double>& v, const char* fmt) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, fmt, *v);
    return std::string(buf);
  };
  std::string f1;
  if (r.f1.empty()) {
    f1 = "-";
  } else {
    for (double t : kF1Thresholds) {
      auto it = r.f1.find(t);
      f1 += (f1.empty() ? "" : " ") + num(it == r.f1.end() ? std::nullopt : std::optional(it->second), "%.1f");
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s | %-6s | %-6s | %-8s | %s", f1.c_str(), num(r.edit, "%.1f").c_str(),
                num(r.acc, "%.1f").c_str(), num(r.spearman, "%.3f").c_str(), num(r.r_l2_x100, "%.2f").c_str());
  return buf;
}

/// Aggregates per-video results: accuracy is micro-averaged over frames, F1
/// pools TP/FP/FN across videos, edit is the mean of per-video scores, and
/// Spearman / R-l2 are computed once over the corpus.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(MetricOptions opts = {}) : opts_(opts) {}

  void add_segmentation(const FrameLabelSequence& pred, const FrameLabelSequence& gt) {
    const auto p = pred.decode();
    const auto g = gt.decode();
    require_shape(p.size() == g.size(), "metrics: prediction and ground truth differ in length");
    for (std::size_t t = 0; t < g.size(); ++t) hits_ += p[t] == g[t];
    frames_ += g.size();
    edit_sum_ += segmental_edit_score(pred, gt, opts_);
    ++seg_videos_;
    for (std::size_t i = 0; i < kF1Thresholds.size(); ++i) counts_[i] += segmental_f1_counts(pred, gt, kF1Thresholds[i], opts_);
  }

  void add_score(double pred, double gt) {
    pred_scores_.push_back(pred);
    gt_scores_.push_back(gt);
  }

  MetricsReport report() const {
    MetricsReport r;
    r.videos = std::max(seg_videos_, pred_scores_.size());
    if (seg_videos_ > 0) {
      r.acc = 100.0 * static_cast<double>(hits_) / static_cast<double>(frames_);
      r.edit = edit_sum_ / static_cast<double>(seg_videos_);
      for (std::size_t i = 0; i < kF1Thresholds.size(); ++i) r.f1[kF1Thresholds[i]] = counts_[i].f1();
    }
    if (!gt_scores_.empty()) {
      try {
        r.spearman = spearman(pred_scores_, gt_scores_);
      } catch (const Error&) {
      }
      try {
        r.r_l2_x100 = 100.0 * relative_l2(pred_scores_, gt_scores_);
      } catch (const Error&) {
      }
    }
    return r;
  }

 private:
  MetricOptions opts_;
  std::size_t hits_ = 0;
  std::size_t frames_ = 0;
  double edit_sum_ = 0.0;
  std::size_t seg_videos_ = 0;
  std::array<F1Counts, kF1Thresholds.size()> counts_{};
  std::vector<double> pred_scores_, gt_scores_;
};

}  // namespace stepscore
