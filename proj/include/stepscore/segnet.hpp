#pragma once

// Multi-stage convolution/attention step segmentation network.
//
// Every stage is a 1x1 input projection, a stack of residual dilated temporal
// convolutions (dilation 1, 2, 4, ...; centered zero padding so T is
// preserved) and a 1x1 classifier head. Stage 1 reads the frame features;
// stage m > 1 reads [softmax(logits_{m-1}) | attention(feature_{m-1})].

#include "stepscore/attention.hpp"
#include "stepscore/common.hpp"
#include "stepscore/datamodel.hpp"
#include "stepscore/labels.hpp"
#include "stepscore/params.hpp"

#include <string>
#include <vector>

namespace stepscore {

// ---------------------------------------------------------------------------
// Row-wise softmax helpers

inline Mat softmax_rows(const Mat& logits) {
  Mat out = logits;
  for (Index t = 0; t < out.rows(); ++t) {
    auto row = out.row(t);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

inline Mat log_softmax_rows(const Mat& logits) {
  Mat out = logits;
  for (Index t = 0; t < out.rows(); ++t) {
    auto row = out.row(t);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return out;
}

/// Pulls dL/dP back through P = softmax(Z).
inline Mat softmax_backward(const Mat& probs, const Mat& grad_probs) {
  const Eigen::VectorXd dot = probs.cwiseProduct(grad_probs).rowwise().sum();
  Mat dz = grad_probs;
  dz.colwise() -= dot;
  return probs.cwiseProduct(dz);
}

// ---------------------------------------------------------------------------
// Stage

struct DilatedLayer {
  int dilation = 1;
  Param w_dil;  // (k * D_n) x D_n, tap j occupies rows [j*D_n, (j+1)*D_n)
  Param b_dil;  // 1 x D_n
  Param w_pw;   // D_n x D_n
  Param b_pw;   // 1 x D_n
};

struct StageParams {
  int kernel_size = 3;
  Param w_in, b_in;
  std::vector<DilatedLayer> layers;
  Param w_out, b_out;

  StageParams() = default;
  StageParams(Index in_dim, Index hidden, int num_layers, int kernel, Index classes = kNumClasses)
      : kernel_size(kernel), w_in(in_dim, hidden), b_in(1, hidden), w_out(hidden, classes), b_out(1, classes) {
    for (int l = 0; l < num_layers; ++l) {
      DilatedLayer layer;
      layer.dilation = 1 << l;
      layer.w_dil = Param(kernel * hidden, hidden);
      layer.b_dil = Param(1, hidden);
      layer.w_pw = Param(hidden, hidden);
      layer.b_pw = Param(1, hidden);
      layers.push_back(std::move(layer));
    }
  }

  Index in_dim() const { return w_in.value.rows(); }
  Index hidden() const { return w_in.value.cols(); }

  void init(Rng& rng) {
    w_in.init_uniform(rng, in_dim());
    for (auto& l : layers) {
      l.w_dil.init_uniform(rng, kernel_size * hidden());
      l.w_pw.init_uniform(rng, hidden());
    }
    w_out.init_uniform(rng, hidden());
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    visit_param(f, prefix, "w_in", w_in);
    visit_param(f, prefix, "b_in", b_in);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = prefix + "layer" + std::to_string(l) + ".";
      visit_param(f, p, "w_dil", layers[l].w_dil);
      visit_param(f, p, "b_dil", layers[l].b_dil);
      visit_param(f, p, "w_pw", layers[l].w_pw);
      visit_param(f, p, "b_pw", layers[l].b_pw);
    }
    visit_param(f, prefix, "w_out", w_out);
    visit_param(f, prefix, "b_out", b_out);
  }
};

struct StageCache {
  Mat input;
  std::vector<Mat> hidden;  // L + 1 entries; hidden[l] feeds layer l
  std::vector<Mat> pre;     // dilated conv outputs before ReLU
};

struct StageOutput {
  Mat logits;   // T x C
  Mat feature;  // T x D_n
};

namespace detail {

/// Rows t of `dst` in [t0, t0 + n) pair with rows t + offset of the source,
/// restricted to in-range indices.
struct TapRange {
  Index dst0 = 0;
  Index src0 = 0;
  Index n = 0;
};

inline TapRange tap_range(Index T, Index offset) {
  const Index dst0 = std::max<Index>(0, -offset);
  const Index dst1 = std::min<Index>(T, T - offset);
  return {dst0, dst0 + offset, std::max<Index>(0, dst1 - dst0)};
}

}  // namespace detail

inline StageOutput stage_forward(const Mat& input, const StageParams& p, StageCache* cache = nullptr) {
  require_shape(input.cols() == p.in_dim(),
                "stage: input has " + std::to_string(input.cols()) + " channels, expected " + std::to_string(p.in_dim()));
  const Index T = input.rows();
  const Index H = p.hidden();
  const int k = p.kernel_size;

  Mat h = input * p.w_in.value;
  h.rowwise() += p.b_in.value.row(0);
  if (cache) {
    cache->input = input;
    cache->hidden.clear();
    cache->pre.clear();
  }
  for (const auto& layer : p.layers) {
    Mat a = layer.b_dil.value.replicate(T, 1);
    for (int j = 0; j < k; ++j) {
      const Index offset = static_cast<Index>(j - (k - 1) / 2) * layer.dilation;
      const auto r = detail::tap_range(T, offset);
      if (r.n == 0) continue;
      a.middleRows(r.dst0, r.n).noalias() += h.middleRows(r.src0, r.n) * layer.w_dil.value.middleRows(j * H, H);
    }
    Mat out = a.cwiseMax(0.0) * layer.w_pw.value;
    out.rowwise() += layer.b_pw.value.row(0);
    if (cache) {
      cache->hidden.push_back(h);
      cache->pre.push_back(std::move(a));
    }
    h += out;
  }
  StageOutput result;
  result.logits = h * p.w_out.value;
  result.logits.rowwise() += p.b_out.value.row(0);
  if (cache) cache->hidden.push_back(h);
  result.feature = std::move(h);
  return result;
}

/// Backward through one stage. Either gradient may be empty (treated as zero).
/// Returns dL/d(input); parameter gradients accumulate into `p`.
inline Mat stage_backward(const StageCache& c, const Mat& grad_logits, const Mat& grad_feature, StageParams& p) {
  const Index T = c.input.rows();
  const Index H = p.hidden();
  const int k = p.kernel_size;
  const Mat& h_last = c.hidden.back();

  Mat dh = grad_feature.size() ? grad_feature : Mat::Zero(T, H);
  if (grad_logits.size()) {
    p.w_out.grad.noalias() += h_last.transpose() * grad_logits;
    p.b_out.grad.row(0) += grad_logits.colwise().sum();
    dh.noalias() += grad_logits * p.w_out.value.transpose();
  }

  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    auto& layer = p.layers[static_cast<std::size_t>(l)];
    const Mat& a = c.pre[static_cast<std::size_t>(l)];
    const Mat& h = c.hidden[static_cast<std::size_t>(l)];
    const Mat r = a.cwiseMax(0.0);
    layer.w_pw.grad.noalias() += r.transpose() * dh;
    layer.b_pw.grad.row(0) += dh.colwise().sum();
    Mat da = dh * layer.w_pw.value.transpose();
    da.array() *= (a.array() > 0.0).cast<double>();
    layer.b_dil.grad.row(0) += da.colwise().sum();
    for (int j = 0; j < k; ++j) {
      const Index offset = static_cast<Index>(j - (k - 1) / 2) * layer.dilation;
      const auto rg = detail::tap_range(T, offset);
      if (rg.n == 0) continue;
      layer.w_dil.grad.middleRows(j * H, H).noalias() +=
          h.middleRows(rg.src0, rg.n).transpose() * da.middleRows(rg.dst0, rg.n);
      dh.middleRows(rg.src0, rg.n).noalias() +=
          da.middleRows(rg.dst0, rg.n) * layer.w_dil.value.middleRows(j * H, H).transpose();
    }
  }

  p.w_in.grad.noalias() += c.input.transpose() * dh;
  p.b_in.grad.row(0) += dh.colwise().sum();
  return dh * p.w_in.value.transpose();
}

// ---------------------------------------------------------------------------
// Network

struct SegmentationOutput {
  std::vector<Mat> per_stage_logits;
  Mat final_feature;
  FrameLabelSequence predicted_labels;
};

/// Per-frame argmax of the last stage's softmax; ties go to the lowest class id.
inline std::vector<ClassId> argmax_frames(const Mat& logits) {
  const Mat probs = softmax_rows(logits);
  std::vector<ClassId> out(static_cast<std::size_t>(probs.rows()));
  for (Index t = 0; t < probs.rows(); ++t) {
    ClassId best = 0;
    for (Index c = 1; c < probs.cols(); ++c) {
      if (probs(t, c) > probs(t, best)) best = static_cast<ClassId>(c);
    }
    out[static_cast<std::size_t>(t)] = best;
  }
  return out;
}

inline FrameLabelSequence predict_labels(const SegmentationOutput& out) {
  require_shape(!out.per_stage_logits.empty(), "predict_labels: no stages");
  return FrameLabelSequence::encode(argmax_frames(out.per_stage_logits.back()));
}

struct SegNet {
  AttentionMode attention_mode = AttentionMode::Linear;
  std::vector<StageParams> stages;
  /// One set per later stage; empty when attention is off.
  std::vector<AttentionParams> attention;

  SegNet() = default;

  explicit SegNet(const ModelConfig& cfg) : attention_mode(cfg.attention_mode) {
    cfg.validate();
    const Index H = cfg.hidden_dim;
    stages.emplace_back(cfg.input_dim(), H, cfg.layers_per_stage, cfg.kernel_size);
    for (int s = 1; s < cfg.stages; ++s) {
      stages.emplace_back(kNumClasses + H, H, cfg.layers_per_stage, cfg.kernel_size);
      if (attention_mode != AttentionMode::Off) attention.emplace_back(H);
    }
  }

  Index input_dim() const { return stages.front().in_dim(); }
  Index hidden() const { return stages.front().hidden(); }

  void init(Rng& rng) {
    for (auto& s : stages) s.init(rng);
    for (auto& a : attention) a.init(rng);
  }

  template <class F>
  void for_each_param(F&& f) {
    for (std::size_t s = 0; s < stages.size(); ++s) stages[s].for_each_param("seg.stage" + std::to_string(s) + ".", f);
    for (std::size_t s = 0; s < attention.size(); ++s) {
      attention[s].for_each_param("seg.attn" + std::to_string(s + 1) + ".", f);
    }
  }
};

struct NetworkCache {
  std::vector<StageCache> stages;
  std::vector<AttentionCache> attention;
  std::vector<Mat> probs;  // softmax of each stage except the last
};

/// Runs every stage; the cache, when given, is filled for network_backward.
inline SegmentationOutput network_forward(const Mat& features, const SegNet& net, NetworkCache* cache = nullptr) {
  require_shape(features.cols() == net.input_dim(), "network: features have " + std::to_string(features.cols()) +
                                                        " channels, config expects " + std::to_string(net.input_dim()));
  require_shape(features.rows() >= 1, "network: empty sequence");
  const auto n = net.stages.size();
  if (cache) {
    cache->stages.assign(n, {});
    cache->attention.assign(net.attention.size(), {});
    cache->probs.assign(n - 1, {});
  }

  SegmentationOutput out;
  StageOutput prev = stage_forward(features, net.stages[0], cache ? &cache->stages[0] : nullptr);
  out.per_stage_logits.push_back(prev.logits);
  for (std::size_t s = 1; s < n; ++s) {
    Mat probs = softmax_rows(prev.logits);
    Mat enhanced;
    AttentionCache* ac = cache ? &cache->attention[s - 1] : nullptr;
    switch (net.attention_mode) {
      case AttentionMode::Linear: enhanced = linear_attention(prev.feature, net.attention[s - 1], ac); break;
      case AttentionMode::Quadratic: enhanced = quadratic_attention_reference(prev.feature, net.attention[s - 1], ac); break;
      case AttentionMode::Off: enhanced = prev.feature; break;
    }
    Mat input(features.rows(), probs.cols() + enhanced.cols());
    input << probs, enhanced;
    if (cache) cache->probs[s - 1] = std::move(probs);
    prev = stage_forward(input, net.stages[s], cache ? &cache->stages[s] : nullptr);
    out.per_stage_logits.push_back(prev.logits);
  }
  out.final_feature = std::move(prev.feature);
  out.predicted_labels = predict_labels(out);
  return out;
}

/// Backward through the whole network. `grad_logits[s]` may be empty.
inline void network_backward(const NetworkCache& c, const std::vector<Mat>& grad_logits, const Mat& grad_final_feature,
                             SegNet& net) {
  const auto n = net.stages.size();
  require_shape(grad_logits.size() == n, "network backward: one logit gradient per stage required");
  std::vector<Mat> dlogits = grad_logits;
  Mat dfeature = grad_final_feature;
  for (std::size_t s = n - 1; s >= 1; --s) {
    const Mat din = stage_backward(c.stages[s], dlogits[s], dfeature, net.stages[s]);
    const Index C = c.probs[s - 1].cols();
    const Mat dprobs = din.leftCols(C);
    const Mat denh = din.rightCols(din.cols() - C);
    Mat dz = softmax_backward(c.probs[s - 1], dprobs);
    if (dlogits[s - 1].size()) dz += dlogits[s - 1];
    dlogits[s - 1] = std::move(dz);
    switch (net.attention_mode) {
      case AttentionMode::Linear: dfeature = linear_attention_backward(c.attention[s - 1], denh, net.attention[s - 1]); break;
      case AttentionMode::Quadratic:
        dfeature = quadratic_attention_backward(c.attention[s - 1], denh, net.attention[s - 1]);
        break;
      case AttentionMode::Off: dfeature = denh; break;
    }
  }
  stage_backward(c.stages[0], dlogits[0], dfeature, net.stages[0]);
}

}  // namespace stepscore
