#pragma once

#include "stepscore/common.hpp"
#include "stepscore/featureio.hpp"
#include "stepscore/labels.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stepscore {

using json = nlohmann::json;

struct VideoRecord {
  std::string id;
  /// Resolved path (manifest directory joined with the stored relative path).
  std::filesystem::path feature_path;
  FrameLabelSequence labels;
  std::vector<StepAttribute> attributes;
  double gt_score = 0.0;

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

enum class AttentionMode { Linear, Quadratic, Off };

inline std::string to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::Linear: return "linear";
    case AttentionMode::Quadratic: return "quadratic";
    case AttentionMode::Off: return "off";
  }
  return "?";
}

inline AttentionMode attention_mode_from_string(const std::string& s) {
  if (s == "linear") return AttentionMode::Linear;
  if (s == "quadratic" || s == "quadratic-reference") return AttentionMode::Quadratic;
  if (s == "off") return AttentionMode::Off;
  throw Error("unknown attention_mode '" + s + "'");
}

/// How the video score is produced.
enum class AssessmentMode { KeyActionScorer, WholeVideo };

inline std::string to_string(AssessmentMode m) {
  return m == AssessmentMode::KeyActionScorer ? "kas" : "whole-video";
}

inline AssessmentMode assessment_mode_from_string(const std::string& s) {
  if (s == "kas") return AssessmentMode::KeyActionScorer;
  if (s == "whole-video") return AssessmentMode::WholeVideo;
  throw Error("unknown assessment mode '" + s + "'");
}

struct ModelConfig {
  int stages = 4;
  int layers_per_stage = 10;
  int hidden_dim = 64;
  int kernel_size = 3;
  double smoothing_tau = 4.0;
  double smoothing_weight = 0.15;
  double sigmoid_init = 1.0;
  bool learnable_sigmoid = true;
  int branches = 2;
  double learning_rate = 0.0005;
  int epochs = 100;
  std::uint64_t seed = 0;
  bool use_motion_features = true;
  AttentionMode attention_mode = AttentionMode::Linear;
  /// Full on-disk feature dimension (appearance + motion).
  int feature_dim = 2048;
  AssessmentMode assessment = AssessmentMode::KeyActionScorer;
  int baseline_hidden = 64;

  int input_dim() const { return use_motion_features ? feature_dim : feature_dim / 2; }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (stages < 2) v.emplace_back("stages must be >= 2");
    if (layers_per_stage < 1) v.emplace_back("layers_per_stage must be >= 1");
    if (hidden_dim < 1) v.emplace_back("hidden_dim must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0) v.emplace_back("kernel_size must be odd and >= 1");
    if (!(smoothing_tau > 0)) v.emplace_back("smoothing_tau must be > 0");
    if (!(smoothing_weight >= 0)) v.emplace_back("smoothing_weight must be >= 0");
    if (!(sigmoid_init > 0)) v.emplace_back("sigmoid_init must be > 0");
    if (branches < 1) v.emplace_back("branches must be >= 1");
    if (!(learning_rate > 0)) v.emplace_back("learning_rate must be > 0");
    if (epochs < 0) v.emplace_back("epochs must be >= 0");
    if (feature_dim < 1) v.emplace_back("feature_dim must be >= 1");
    if (!use_motion_features && feature_dim < 2) v.emplace_back("feature_dim too small to drop motion channels");
    if (baseline_hidden < 1) v.emplace_back("baseline_hidden must be >= 1");
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw Error("invalid model config: " + v.front());
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(json& j, const ModelConfig& c) {
  j = json{{"stages", c.stages},
           {"layers_per_stage", c.layers_per_stage},
           {"hidden_dim", c.hidden_dim},
           {"kernel_size", c.kernel_size},
           {"smoothing_tau", c.smoothing_tau},
           {"smoothing_weight", c.smoothing_weight},
           {"sigmoid_init", c.sigmoid_init},
           {"learnable_sigmoid", c.learnable_sigmoid},
           {"branches", c.branches},
           {"learning_rate", c.learning_rate},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"use_motion_features", c.use_motion_features},
           {"attention_mode", to_string(c.attention_mode)},
           {"feature_dim", c.feature_dim},
           {"assessment", to_string(c.assessment)},
           {"baseline_hidden", c.baseline_hidden}};
}

inline void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  c.stages = j.value("stages", d.stages);
  c.layers_per_stage = j.value("layers_per_stage", d.layers_per_stage);
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.kernel_size = j.value("kernel_size", d.kernel_size);
  c.smoothing_tau = j.value("smoothing_tau", d.smoothing_tau);
  c.smoothing_weight = j.value("smoothing_weight", d.smoothing_weight);
  c.sigmoid_init = j.value("sigmoid_init", d.sigmoid_init);
  c.learnable_sigmoid = j.value("learnable_sigmoid", d.learnable_sigmoid);
  c.branches = j.value("branches", d.branches);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.epochs = j.value("epochs", d.epochs);
  c.seed = j.value("seed", d.seed);
  c.use_motion_features = j.value("use_motion_features", d.use_motion_features);
  c.attention_mode = attention_mode_from_string(j.value("attention_mode", to_string(d.attention_mode)));
  c.feature_dim = j.value("feature_dim", d.feature_dim);
  c.assessment = assessment_mode_from_string(j.value("assessment", to_string(d.assessment)));
  c.baseline_hidden = j.value("baseline_hidden", d.baseline_hidden);
}

// ---------------------------------------------------------------------------
// Validation

/// Every violated invariant of `record`, checked against the given features.
/// Pass nullptr to skip feature checks.
inline std::vector<std::string> validate_record(const VideoRecord& record, const FeatureSequence* features) {
  std::vector<std::string> v;
  if (record.id.empty()) v.emplace_back("id: empty");
  for (auto& s : record.labels.violations()) v.push_back(std::move(s));
  if (record.attributes.size() != static_cast<std::size_t>(kNumSteps)) {
    v.push_back("attributes: expected 6 entries, got " + std::to_string(record.attributes.size()));
  }
  for (std::size_t i = 0; i < record.attributes.size(); ++i) {
    if (static_cast<int>(record.attributes[i]) > 2) v.push_back("attributes: entry " + std::to_string(i) + " out of {0,1,2}");
  }
  if (!(record.gt_score >= 0.0 && record.gt_score <= 6.0)) v.emplace_back("gt_score out of [0,6]");
  if (features != nullptr) {
    if (!features->all_finite()) v.emplace_back("features: contain NaN or Inf");
    if (features->frames() != record.labels.frames()) {
      v.push_back("features: " + std::to_string(features->frames()) + " rows but labels cover " +
                  std::to_string(record.labels.frames()) + " frames");
    }
  }
  return v;
}

/// Loads the referenced feature file and validates everything; a missing or
/// unreadable feature file is reported as a violation.
inline std::vector<std::string> validate_record(const VideoRecord& record) {
  try {
    const FeatureSequence seq = read_features(record.feature_path);
    return validate_record(record, &seq);
  } catch (const FeatureFileError& e) {
    auto v = validate_record(record, nullptr);
    v.push_back(std::string("feature_path: ") + e.what());
    return v;
  }
}

// ---------------------------------------------------------------------------
// Manifest

class ManifestError : public Error {
 public:
  ManifestError(const std::string& what, std::optional<std::size_t> line = std::nullopt,
                std::string record_id = {}, std::string field = {})
      : Error(what), line_(line), record_id_(std::move(record_id)), field_(std::move(field)) {}

  std::optional<std::size_t> line() const { return line_; }
  const std::string& record_id() const { return record_id_; }
  const std::string& field() const { return field_; }

 private:
  std::optional<std::size_t> line_;
  std::string record_id_;
  std::string field_;
};

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

inline VideoRecord record_from_json(const json& j, std::size_t index, const std::filesystem::path& base) {
  const std::string where = "record " + std::to_string(index);
  auto field_error = [&](const std::string& id, const std::string& field, const std::string& msg) {
    return ManifestError(where + (id.empty() ? "" : " (" + id + ")") + ": " + field + ": " + msg, std::nullopt, id, field);
  };
  if (!j.is_object()) throw field_error("", "record", "expected an object");

  VideoRecord r;
  try {
    r.id = j.at("id").get<std::string>();
  } catch (const json::exception&) {
    throw field_error("", "id", "missing or not a string");
  }
  try {
    r.feature_path = base / j.at("feature_path").get<std::string>();
  } catch (const json::exception&) {
    throw field_error(r.id, "feature_path", "missing or not a string");
  }
  try {
    std::vector<Run> runs;
    for (const auto& pair : j.at("labels")) {
      if (!pair.is_array() || pair.size() != 2) throw field_error(r.id, "labels", "each run must be [class_id, length]");
      runs.push_back({pair[0].get<int>(), pair[1].get<std::int64_t>()});
    }
    r.labels = FrameLabelSequence(std::move(runs));
  } catch (const json::exception&) {
    throw field_error(r.id, "labels", "expected a list of [int, int] pairs");
  }
  try {
    for (const auto& a : j.at("attributes")) {
      const int v = a.get<int>();
      if (v < 0 || v > 2) throw field_error(r.id, "attributes", "value " + std::to_string(v) + " not in {0,1,2}");
      r.attributes.push_back(static_cast<StepAttribute>(v));
    }
  } catch (const json::exception&) {
    throw field_error(r.id, "attributes", "expected a list of integers");
  }
  try {
    r.gt_score = j.at("gt_score").get<double>();
  } catch (const json::exception&) {
    throw field_error(r.id, "gt_score", "missing or not a number");
  }
  return r;
}

inline std::string first_field(const std::string& violation) {
  return violation.substr(0, violation.find(':'));
}

}  // namespace detail

struct ManifestOptions {
  /// Open every feature file and check finiteness and row count.
  bool check_features = true;
};

/// Loads a manifest and validates every record. Records are returned sorted by id.
inline std::vector<VideoRecord> load_manifest(const std::filesystem::path& path, ManifestOptions opts = {}) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t line = detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ManifestError(path.string() + ":" + std::to_string(line) + ": parse error: " + e.what(), line);
  }
  if (!doc.is_array()) throw ManifestError(path.string() + ": top level must be a list of records", 1);

  const auto base = std::filesystem::absolute(path).parent_path();
  std::vector<VideoRecord> records;
  records.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    VideoRecord r = detail::record_from_json(doc[i], i, base);
    auto v = opts.check_features ? validate_record(r) : validate_record(r, nullptr);
    if (!v.empty()) {
      throw ManifestError(path.string() + ": record " + r.id + ": " + v.front(), std::nullopt, r.id,
                          detail::first_field(v.front()));
    }
    records.push_back(std::move(r));
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].id == records[i - 1].id) {
      throw ManifestError(path.string() + ": duplicate id " + records[i].id, std::nullopt, records[i].id, "id");
    }
  }
  return records;
}

inline json manifest_to_json(const std::vector<VideoRecord>& records, const std::filesystem::path& manifest_dir) {
  json doc = json::array();
  for (const auto& r : records) {
    json labels = json::array();
    for (const auto& run : r.labels.runs()) labels.push_back({run.cls, run.length});
    json attrs = json::array();
    for (auto a : r.attributes) attrs.push_back(static_cast<int>(a));
    doc.push_back({{"id", r.id},
                   {"feature_path", std::filesystem::absolute(r.feature_path).lexically_relative(manifest_dir).generic_string()},
                   {"labels", labels},
                   {"attributes", attrs},
                   {"gt_score", r.gt_score}});
  }
  return doc;
}

inline void save_manifest(const std::vector<VideoRecord>& records, const std::filesystem::path& path) {
  const auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << manifest_to_json(records, std::filesystem::absolute(dir)).dump(2) << '\n';
}

}  // namespace stepscore
