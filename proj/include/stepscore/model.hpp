#pragma once

#include "stepscore/datamodel.hpp"
#include "stepscore/kas.hpp"
#include "stepscore/segnet.hpp"

#include <optional>
#include <utility>

namespace stepscore {

/// Everything that is learned, built from a ModelConfig. In KAS mode the model
/// is the segmentation network plus the key action scorer; in whole-video
/// mode it is only the pooled-feature regressor.
struct Model {
  ModelConfig config;
  SegNet seg;
  KasParams kas;
  BaselineParams baseline;

  Model() = default;

  explicit Model(const ModelConfig& cfg) : config(cfg) {
    cfg.validate();
    if (cfg.assessment == AssessmentMode::KeyActionScorer) {
      seg = SegNet(cfg);
      kas = KasParams(cfg.hidden_dim, cfg.branches, cfg.sigmoid_init, cfg.learnable_sigmoid);
    } else {
      baseline = BaselineParams(cfg.input_dim(), cfg.baseline_hidden);
    }
  }

  bool uses_kas() const { return config.assessment == AssessmentMode::KeyActionScorer; }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x5EEDu));
    if (uses_kas()) {
      seg.init(rng);
      kas.init(rng);
    } else {
      baseline.init(rng);
    }
  }

  template <class F>
  void for_each_param(F&& f) {
    if (uses_kas()) {
      seg.for_each_param(f);
      kas.for_each_param(f);
    } else {
      baseline.for_each_param(f);
    }
  }

  template <class F>
  void for_each_param(F&& f) const {
    const_cast<Model*>(this)->for_each_param([&](const std::string& name, Param& p) { f(name, std::as_const(p)); });
  }

  void zero_grad() {
    for_each_param([](const std::string&, Param& p) { p.zero_grad(); });
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for_each_param([&](const std::string&, const Param& p) { n += static_cast<std::size_t>(p.value.size()); });
    return n;
  }
};

struct VideoPrediction {
  std::optional<SegmentationOutput> segmentation;
  std::optional<StepAssessment> assessment;
  double score = 0.0;
};

/// Inference on one video's model-input features (already restricted to the
/// channels the config consumes).
inline VideoPrediction predict_video(const Model& model, const Mat& input) {
  VideoPrediction out;
  if (model.uses_kas()) {
    out.segmentation = network_forward(input, model.seg);
    out.assessment = assess_video(*out.segmentation, model.kas);
    out.score = out.assessment->total;
  } else {
    out.score = whole_video_baseline(input, model.baseline);
  }
  return out;
}

}  // namespace stepscore
