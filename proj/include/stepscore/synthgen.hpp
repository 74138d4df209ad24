#pragma once

// Synthetic staged-procedure videos: per-frame features drawn around class
// prototypes, labels in protocol order with background gaps, and a rubric
// score derived from per-step attributes.

#include "stepscore/datamodel.hpp"
#include "stepscore/featureio.hpp"
#include "stepscore/labels.hpp"
#include "stepscore/rng.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stepscore {

struct IntRange {
  std::int64_t min = 0;
  std::int64_t max = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

/// Probabilities of NE, EN, ES for one step.
using AttributeProbs = std::array<double, 3>;

/// Per-step attribute frequencies of the reference corpus (counts out of 227 per step).
inline std::array<AttributeProbs, kNumSteps> reference_attribute_distribution() {
  constexpr std::array<std::array<int, 3>, kNumSteps> counts = {{
      {37, 27, 163}, {46, 25, 156}, {48, 32, 147}, {49, 34, 144}, {42, 21, 164}, {53, 38, 136}}};
  std::array<AttributeProbs, kNumSteps> out{};
  for (int i = 0; i < kNumSteps; ++i) {
    const double total = counts[i][0] + counts[i][1] + counts[i][2];
    for (int a = 0; a < 3; ++a) out[i][a] = counts[i][a] / total;
  }
  return out;
}

struct GeneratorSpec {
  std::uint64_t seed = 0;
  int n_videos = 100;
  IntRange frames_per_step{20, 40};
  IntRange background_gap{5, 15};
  int feature_dim = 64;
  double class_separation = 4.0;
  double noise_sigma = 0.5;
  std::array<AttributeProbs, kNumSteps> attribute_distribution = reference_attribute_distribution();
  /// Per-step override; a set entry bypasses the distribution.
  std::array<std::optional<StepAttribute>, kNumSteps> forced_attributes{};
  /// Weight of the background prototype inside a corrupted key-action window.
  double en_blend = 0.4;
  double train_fraction = 0.75;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (n_videos < 0) v.emplace_back("n_videos must be >= 0");
    if (frames_per_step.min > frames_per_step.max) v.emplace_back("frames_per_step: min > max");
    if (background_gap.min > background_gap.max) v.emplace_back("background_gap: min > max");
    if (background_gap.min < 0) v.emplace_back("background_gap: negative length");
    if (frames_per_step.min < 1) v.emplace_back("frames_per_step: steps must have at least one frame");
    if (feature_dim < 1) v.emplace_back("feature_dim must be >= 1");
    if (!(class_separation > 0)) v.emplace_back("class_separation must be > 0");
    if (!(noise_sigma >= 0)) v.emplace_back("noise_sigma must be >= 0");
    if (!(en_blend >= 0 && en_blend <= 1)) v.emplace_back("en_blend must lie in [0,1]");
    if (!(train_fraction > 0 && train_fraction <= 1)) v.emplace_back("train_fraction must lie in (0,1]");
    for (int i = 0; i < kNumSteps; ++i) {
      double sum = 0;
      for (double p : attribute_distribution[i]) {
        if (!(p >= 0)) v.push_back("attribute_distribution: negative probability for step " + std::to_string(i + 1));
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) v.push_back("attribute_distribution: step " + std::to_string(i + 1) + " does not sum to 1");
    }
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw Error("degenerate generator spec: " + v.front());
  }
};

inline void from_json(const json& j, GeneratorSpec& s) {
  GeneratorSpec d;
  s = d;
  s.seed = j.value("seed", d.seed);
  s.n_videos = j.value("n_videos", d.n_videos);
  if (j.contains("frames_per_step")) s.frames_per_step = {j["frames_per_step"].at(0).get<std::int64_t>(), j["frames_per_step"].at(1).get<std::int64_t>()};
  if (j.contains("background_gap")) s.background_gap = {j["background_gap"].at(0).get<std::int64_t>(), j["background_gap"].at(1).get<std::int64_t>()};
  s.feature_dim = j.value("feature_dim", d.feature_dim);
  s.class_separation = j.value("class_separation", d.class_separation);
  s.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  s.en_blend = j.value("en_blend", d.en_blend);
  s.train_fraction = j.value("train_fraction", d.train_fraction);
  if (j.contains("attribute_distribution")) {
    const auto& a = j["attribute_distribution"];
    // Either one [NE, EN, ES] triple for every step or six triples.
    if (a.size() == 3 && a[0].is_number()) {
      const auto p = a.get<AttributeProbs>();
      s.attribute_distribution.fill(p);
    } else {
      if (a.size() != kNumSteps) throw Error("attribute_distribution: expected 1 or 6 triples");
      for (int i = 0; i < kNumSteps; ++i) s.attribute_distribution[i] = a[i].get<AttributeProbs>();
    }
  }
  if (j.contains("forced_attributes")) {
    const auto& f = j["forced_attributes"];
    if (f.size() != kNumSteps) throw Error("forced_attributes: expected 6 entries");
    for (int i = 0; i < kNumSteps; ++i) {
      if (f[i].is_null()) continue;
      const int v = f[i].get<int>();
      if (v < 0 || v > 2) throw Error("forced_attributes: value out of {0,1,2}");
      s.forced_attributes[i] = static_cast<StepAttribute>(v);
    }
  }
}

inline void to_json(json& j, const GeneratorSpec& s) {
  json forced = json::array();
  for (const auto& f : s.forced_attributes) forced.push_back(f ? json(static_cast<int>(*f)) : json(nullptr));
  j = json{{"seed", s.seed},
           {"n_videos", s.n_videos},
           {"frames_per_step", {s.frames_per_step.min, s.frames_per_step.max}},
           {"background_gap", {s.background_gap.min, s.background_gap.max}},
           {"feature_dim", s.feature_dim},
           {"class_separation", s.class_separation},
           {"noise_sigma", s.noise_sigma},
           {"attribute_distribution", s.attribute_distribution},
           {"forced_attributes", forced},
           {"en_blend", s.en_blend},
           {"train_fraction", s.train_fraction}};
}

// ---------------------------------------------------------------------------
// Rubric

/// Numeric worth of each attribute level. NE < EN < ES, all in [0,1].
struct Rubric {
  double ne = 0.0;
  double en = 0.5;
  double es = 1.0;

  double value(StepAttribute a) const {
    switch (a) {
      case StepAttribute::NE: return ne;
      case StepAttribute::EN: return en;
      case StepAttribute::ES: return es;
    }
    return 0.0;
  }
};

struct RubricScore {
  std::array<double, kNumSteps> per_step{};
  double total = 0.0;
};

inline RubricScore rubric_score(const StepAttributes& attributes, const Rubric& rubric = {}) {
  RubricScore out;
  for (int i = 0; i < kNumSteps; ++i) {
    out.per_step[i] = rubric.value(attributes[i]);
    out.total += out.per_step[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

/// Class prototypes shared by every video of a dataset (depend on seed only).
/// Rows are orthogonal when D >= 7, so every pair sits exactly
/// `class_separation` apart.
inline Mat class_prototypes(const GeneratorSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0xC1A55u));
  Mat protos(kNumClasses, spec.feature_dim);
  for (Index c = 0; c < kNumClasses; ++c) {
    for (Index d = 0; d < spec.feature_dim; ++d) protos(c, d) = rng.normal();
    if (spec.feature_dim >= kNumClasses) {
      for (Index p = 0; p < c; ++p) protos.row(c) -= protos.row(c).dot(protos.row(p)) * protos.row(p);
    }
    const double n = protos.row(c).norm();
    if (n > 0) protos.row(c) /= n;
  }
  return protos * (spec.class_separation / std::sqrt(2.0));
}

struct GeneratedVideo {
  VideoRecord record;  // feature_path left empty
  FeatureSequence features;
  /// For EN steps: which key-action window (0 = first half, 1 = second half) was corrupted.
  std::array<int, kNumSteps> corrupted_window{-1, -1, -1, -1, -1, -1};
};

inline std::string video_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "vid%05d", index);
  return buf;
}

inline GeneratedVideo generate_video(const GeneratorSpec& spec, int video_index, const Mat& prototypes) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(video_index)));

  // Every random draw happens regardless of the attribute outcome so that
  // twins differing in one forced attribute share all other content.
  StepAttributes attrs{};
  std::array<std::int64_t, kNumSteps> step_len{};
  std::array<std::int64_t, kNumSteps + 1> gap_len{};
  std::array<int, kNumSteps> window{};
  for (int i = 0; i < kNumSteps; ++i) {
    const double u = rng.uniform();
    const auto& p = spec.attribute_distribution[i];
    const auto sampled = u < p[0] ? StepAttribute::NE : (u < p[0] + p[1] ? StepAttribute::EN : StepAttribute::ES);
    attrs[i] = spec.forced_attributes[i].value_or(sampled);
    step_len[i] = rng.uniform_int(spec.frames_per_step.min, spec.frames_per_step.max);
    window[i] = static_cast<int>(rng.uniform_int(0, 1));
  }
  for (auto& g : gap_len) g = rng.uniform_int(spec.background_gap.min, spec.background_gap.max);

  // Frame labels and, per frame, the background blend weight.
  std::vector<ClassId> frames;
  std::vector<double> blend;
  GeneratedVideo out;
  auto push = [&](ClassId c, std::int64_t n, double b) {
    frames.insert(frames.end(), static_cast<std::size_t>(n), c);
    blend.insert(blend.end(), static_cast<std::size_t>(n), b);
  };
  push(kBackgroundClass, gap_len[0], 0.0);
  for (int i = 0; i < kNumSteps; ++i) {
    if (attrs[i] != StepAttribute::NE) {
      const std::int64_t len = step_len[i];
      const std::int64_t half = len / 2;
      if (attrs[i] == StepAttribute::EN) {
        out.corrupted_window[i] = window[i];
        push(i, half, window[i] == 0 ? spec.en_blend : 0.0);
        push(i, len - half, window[i] == 1 ? spec.en_blend : 0.0);
      } else {
        push(i, len, 0.0);
      }
    }
    push(kBackgroundClass, gap_len[i + 1], 0.0);
  }
  if (frames.empty()) throw Error("degenerate generator spec: video " + std::to_string(video_index) + " has no frames");

  const auto T = static_cast<Index>(frames.size());
  out.features.values.resize(T, spec.feature_dim);
  for (Index t = 0; t < T; ++t) {
    const double b = blend[static_cast<std::size_t>(t)];
    auto row = out.features.values.row(t);
    row = (1.0 - b) * prototypes.row(frames[static_cast<std::size_t>(t)]) + b * prototypes.row(kBackgroundClass);
    for (Index d = 0; d < spec.feature_dim; ++d) row(d) += spec.noise_sigma * rng.normal();
  }

  out.record.id = video_id(video_index);
  out.record.labels = FrameLabelSequence::encode(frames);
  out.record.attributes.assign(attrs.begin(), attrs.end());
  out.record.gt_score = rubric_score(attrs).total;
  return out;
}

inline GeneratedVideo generate_video(const GeneratorSpec& spec, int video_index) {
  return generate_video(spec, video_index, class_prototypes(spec));
}

struct DatasetPaths {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

inline int train_split_size(int n_videos, double train_fraction) {
  const auto n = static_cast<int>(std::llround(n_videos * train_fraction));
  return std::clamp(n, 1, n_videos);
}

/// Writes features/<id>.hhaf plus train.json and test.json under `out_dir`.
/// The first round(n * train_fraction) videos form the training split.
inline DatasetPaths generate_dataset(const GeneratorSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  if (spec.n_videos == 0) throw Error("empty dataset");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "features", ec);
  if (ec) throw Error("cannot create " + (out_dir / "features").string() + ": " + ec.message());

  const Mat protos = class_prototypes(spec);
  const int n_train = train_split_size(spec.n_videos, spec.train_fraction);
  std::vector<VideoRecord> train, test;
  for (int i = 0; i < spec.n_videos; ++i) {
    GeneratedVideo v = generate_video(spec, i, protos);
    v.record.feature_path = fs::absolute(out_dir / "features" / (v.record.id + ".hhaf"));
    write_features(v.features, v.record.feature_path);
    (i < n_train ? train : test).push_back(std::move(v.record));
  }
  DatasetPaths paths{out_dir / "train.json", out_dir / "test.json"};
  save_manifest(train, paths.train_manifest);
  save_manifest(test, paths.test_manifest);
  return paths;
}

}  // namespace stepscore
