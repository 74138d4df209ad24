#pragma once

// Training, evaluation, ablation and reporting around the model.

#include "stepscore/checkpoint.hpp"
#include "stepscore/datamodel.hpp"
#include "stepscore/featureio.hpp"
#include "stepscore/kas.hpp"
#include "stepscore/losses.hpp"
#include "stepscore/metrics.hpp"
#include "stepscore/model.hpp"
#include "stepscore/optim.hpp"
#include "stepscore/plots.hpp"
#include "stepscore/rng.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace stepscore {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
  ModelConfig model;
  std::vector<double> stage_weights;
  AdamConfig optimizer;  // learning_rate is taken from model.learning_rate
  int teacher_forcing_epochs = 10;
  fs::path train_manifest;
  /// Split used for best-checkpoint selection; defaults to the training split.
  fs::path eval_manifest;
  /// Split reported by ablations; defaults to the eval split.
  fs::path test_manifest;
  fs::path out_dir = "run";
  int eval_every = 1;

  LossConfig loss() const { return {model.smoothing_tau, model.smoothing_weight, stage_weights}; }

  AdamConfig adam() const {
    AdamConfig a = optimizer;
    a.learning_rate = model.learning_rate;
    return a;
  }

  fs::path selection_manifest() const { return eval_manifest.empty() ? train_manifest : eval_manifest; }
  fs::path report_manifest() const { return test_manifest.empty() ? selection_manifest() : test_manifest; }
};

inline json run_config_to_json(const RunConfig& c) {
  return {{"model", c.model},
          {"loss", {{"stage_weights", c.stage_weights}}},
          {"optimizer",
           {{"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps},
            {"weight_decay", c.optimizer.weight_decay}}},
          {"teacher_forcing_epochs", c.teacher_forcing_epochs},
          {"train_manifest", c.train_manifest.generic_string()},
          {"eval_manifest", c.eval_manifest.generic_string()},
          {"test_manifest", c.test_manifest.generic_string()},
          {"out_dir", c.out_dir.generic_string()},
          {"eval_every", c.eval_every}};
}

/// Parses a run config; relative paths resolve against `base_dir`.
inline RunConfig run_config_from_json(const json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("loss")) c.stage_weights = j["loss"].value("stage_weights", std::vector<double>{});
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
    c.optimizer.eps = o.value("eps", c.optimizer.eps);
    c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
  }
  c.teacher_forcing_epochs = j.value("teacher_forcing_epochs", c.teacher_forcing_epochs);
  c.eval_every = j.value("eval_every", c.eval_every);
  auto path = [&](const char* key) -> fs::path {
    const std::string s = j.value(key, std::string{});
    if (s.empty()) return {};
    const fs::path p(s);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  c.train_manifest = path("train_manifest");
  c.eval_manifest = path("eval_manifest");
  c.test_manifest = path("test_manifest");
  if (auto out = path("out_dir"); !out.empty()) c.out_dir = out;
  c.model.validate();
  if (c.eval_every < 0) throw Error("eval_every must be >= 0");
  if (c.teacher_forcing_epochs < 0) throw Error("teacher_forcing_epochs must be >= 0");
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Data

struct LoadedVideo {
  VideoRecord record;
  Mat input;  // channels consumed by the model
  std::vector<ClassId> frames;
};

inline std::vector<LoadedVideo> load_videos(const std::vector<VideoRecord>& records, const ModelConfig& cfg) {
  std::vector<LoadedVideo> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    FeatureSequence seq;
    try {
      seq = read_features(r.feature_path);
    } catch (const Error& e) {
      throw Error("video " + r.id + ": " + e.what());
    }
    if (seq.dim() != cfg.feature_dim) {
      throw Error("video " + r.id + ": feature dimension " + std::to_string(seq.dim()) + " but config expects " +
                  std::to_string(cfg.feature_dim));
    }
    if (auto v = validate_record(r, &seq); !v.empty()) throw Error("video " + r.id + ": " + v.front());
    out.push_back({r, seq.model_input(cfg.use_motion_features), r.labels.decode()});
  }
  return out;
}

inline std::vector<LoadedVideo> load_videos(const fs::path& manifest, const ModelConfig& cfg) {
  return load_videos(load_manifest(manifest, {.check_features = false}), cfg);
}

// ---------------------------------------------------------------------------
// One optimization step

struct StepLosses {
  double total = 0.0;
  double segmentation = 0.0;
  double assessment = 0.0;
  double score = 0.0;
};

/// Forward, joint loss and backward for one video; gradients are left in the
/// model (zeroed first). `route_by_gt` selects step segments from the ground
/// truth labels instead of the prediction.
inline StepLosses forward_backward(Model& model, const LoadedVideo& video, const LossConfig& loss_cfg, bool route_by_gt) {
  model.zero_grad();
  StepLosses out;
  const double target = video.record.gt_score;
  if (!model.uses_kas()) {
    out.score = whole_video_baseline(video.input, model.baseline);
    const double diff = out.score - target;
    out.assessment = diff * diff;
    out.total = out.assessment;
    whole_video_baseline_backward(video.input, 2.0 * diff, model.baseline);
    return out;
  }

  NetworkCache cache;
  const SegmentationOutput seg = network_forward(video.input, model.seg, &cache);
  std::vector<Mat> dlogits;
  const SegmentationLoss sl = segmentation_loss(seg.per_stage_logits, video.frames, loss_cfg, &dlogits);

  const StepSegmentSelection selection =
      select_step_segments(route_by_gt ? video.record.labels : seg.predicted_labels);
  const StepAssessment assessment = assess_video(seg.final_feature, selection, model.kas);
  out.score = assessment.total;
  const double diff = out.score - target;
  out.segmentation = sl.total;
  out.assessment = diff * diff;
  out.total = total_loss(out.segmentation, out.assessment);

  const Mat dfeat = assess_video_backward(seg.final_feature, selection, 2.0 * diff, model.kas);
  network_backward(cache, dlogits, dfeat, model.seg);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct VideoResult {
  std::string id;
  FrameLabelSequence gt_labels;
  std::optional<FrameLabelSequence> predicted_labels;
  std::optional<StepAssessment> assessment;
  double score = 0.0;
  double gt_score = 0.0;
};

struct EvalResult {
  MetricsReport report;
  std::vector<VideoResult> videos;
};

inline EvalResult evaluate_model(const Model& model, const std::vector<LoadedVideo>& videos,
                                 const MetricOptions& opts = {}) {
  EvalResult out;
  MetricsAccumulator acc(opts);
  for (const auto& v : videos) {
    VideoPrediction p = predict_video(model, v.input);
    VideoResult r;
    r.id = v.record.id;
    r.gt_labels = v.record.labels;
    r.gt_score = v.record.gt_score;
    r.score = p.score;
    if (p.segmentation) {
      r.predicted_labels = p.segmentation->predicted_labels;
      acc.add_segmentation(*r.predicted_labels, r.gt_labels);
    }
    r.assessment = std::move(p.assessment);
    acc.add_score(r.score, r.gt_score);
    out.videos.push_back(std::move(r));
  }
  out.report = acc.report();
  return out;
}

inline json labels_to_json(const FrameLabelSequence& labels) {
  json out = json::array();
  for (const auto& r : labels.runs()) out.push_back({r.cls, r.length});
  return out;
}

inline json assessment_to_json(const StepAssessment& a) {
  json spans = json::array(), branches = json::array();
  for (int i = 0; i < kNumSteps; ++i) {
    const auto& s = a.selection.spans[static_cast<std::size_t>(i)];
    spans.push_back(s ? json{s->start, s->end} : json(nullptr));
    branches.push_back(a.branch_scores[static_cast<std::size_t>(i)]);
  }
  return {{"selection", spans}, {"branch_scores", branches}, {"step_scores", a.step_scores}, {"total", a.total}};
}

/// Per-video assessment report entries.
inline json assessments_to_json(const EvalResult& r) {
  json out = json::array();
  for (const auto& v : r.videos) {
    json e = {{"id", v.id}, {"score", v.score}, {"gt_score", v.gt_score}};
    if (v.assessment) e["assessment"] = assessment_to_json(*v.assessment);
    if (v.predicted_labels) e["predicted_labels"] = labels_to_json(*v.predicted_labels);
    out.push_back(std::move(e));
  }
  return out;
}

/// Prediction file in the format read by `stepscore metrics`.
inline json predictions_to_json(const EvalResult& r) {
  json out = json::array();
  for (const auto& v : r.videos) {
    json e = {{"id", v.id}, {"score", v.score}};
    if (v.predicted_labels) e["labels"] = labels_to_json(*v.predicted_labels);
    out.push_back(std::move(e));
  }
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Loads a checkpoint, scores every video of the manifest and, when `out_dir`
/// is non-empty, writes report.json, table.txt, assessments.json and
/// predictions.json there.
inline EvalResult evaluate(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_dir = {},
                           const MetricOptions& opts = {}) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const auto videos = load_videos(manifest, ck.model.config);
  EvalResult result = evaluate_model(ck.model, videos, opts);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(out_dir / "report.json", to_json(result.report).dump(2) + "\n");
    write_text(out_dir / "table.txt", table_header() + "\n" + table_row(result.report) + "\n");
    write_text(out_dir / "assessments.json", assessments_to_json(result).dump(2) + "\n");
    write_text(out_dir / "predictions.json", predictions_to_json(result).dump(2) + "\n");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_segmentation = 0.0;
  double loss_assessment = 0.0;
  std::optional<MetricsReport> eval;
  double wall_seconds = 0.0;
};

struct RunLog {
  std::vector<EpochLog> epochs;
};

/// Log as JSON; wall times are omitted unless `with_timing`.
inline json to_json(const RunLog& log, bool with_timing = true) {
  json out = json::array();
  for (const auto& e : log.epochs) {
    json j = {{"epoch", e.epoch},
              {"loss_total", e.loss_total},
              {"loss_segmentation", e.loss_segmentation},
              {"loss_assessment", e.loss_assessment},
              {"eval", e.eval ? to_json(*e.eval) : json(nullptr)}};
    if (with_timing) j["wall_seconds"] = e.wall_seconds;
    out.push_back(std::move(j));
  }
  return out;
}

struct TrainResult {
  fs::path best_checkpoint;
  fs::path last_checkpoint;
  RunLog log;
  int best_epoch = -1;
  std::optional<double> best_spearman;
};

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
  /// Write checkpoints and the run log under config.out_dir.
  bool write_files = true;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// In-memory variant of train(); returns the best model (by selection-split
/// Spearman) and the final model.
struct TrainedModels {
  Model best;
  Model last;
  RunLog log;
  int best_epoch = -1;
  std::optional<double> best_spearman;
};

inline TrainedModels train_models(const RunConfig& cfg, const std::vector<LoadedVideo>& train_set,
                                  const std::vector<LoadedVideo>& eval_set, const TrainOptions& opts = {}) {
  if (train_set.empty() && cfg.model.epochs > 0) throw Error("training split is empty");
  Model model(cfg.model);
  model.init(cfg.model.seed);
  Adam adam(cfg.adam());
  const LossConfig loss_cfg = cfg.loss();

  TrainedModels out;
  out.best = model;
  double best = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 0; epoch < cfg.model.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.model.seed, 0xE0000000ull + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    EpochLog log;
    log.epoch = epoch;
    const bool teacher = epoch < cfg.teacher_forcing_epochs;
    for (std::size_t i : order) {
      const auto& video = train_set[i];
      const StepLosses l = forward_backward(model, video, loss_cfg, teacher);
      if (!std::isfinite(l.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", video " << video.record.id << " (segmentation "
            << l.segmentation << ", assessment " << l.assessment << ", score " << l.score << ")";
        throw TrainingDiverged(msg.str());
      }
      adam.step(model);
      log.loss_total += l.total;
      log.loss_segmentation += l.segmentation;
      log.loss_assessment += l.assessment;
    }
    const double n = static_cast<double>(std::max<std::size_t>(train_set.size(), 1));
    log.loss_total /= n;
    log.loss_segmentation /= n;
    log.loss_assessment /= n;

    const bool last_epoch = epoch + 1 == cfg.model.epochs;
    if (!eval_set.empty() && ((cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) || last_epoch)) {
      log.eval = evaluate_model(model, eval_set).report;
      const double rho = log.eval->spearman.value_or(-std::numeric_limits<double>::infinity());
      if (rho > best || out.best_epoch < 0) {
        best = rho;
        out.best = model;
        out.best_epoch = epoch;
        out.best_spearman = log.eval->spearman;
      }
    }
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opts.on_epoch) opts.on_epoch(log);
    out.log.epochs.push_back(std::move(log));
  }
  if (eval_set.empty() && cfg.model.epochs > 0) {
    out.best = model;
    out.best_epoch = cfg.model.epochs - 1;
  }
  out.last = std::move(model);
  out.best.zero_grad();
  out.last.zero_grad();
  return out;
}

/// Trains per the config and writes best.ckpt, last.ckpt and run_log.json
/// under out_dir.
inline TrainResult train(const RunConfig& cfg, const TrainOptions& opts = {}) {
  const auto train_set = load_videos(cfg.train_manifest, cfg.model);
  const auto eval_set = load_videos(cfg.selection_manifest(), cfg.model);
  TrainedModels models = train_models(cfg, train_set, eval_set, opts);

  TrainResult out;
  out.log = std::move(models.log);
  out.best_epoch = models.best_epoch;
  out.best_spearman = models.best_spearman;
  if (opts.write_files) {
    fs::create_directories(cfg.out_dir);
    out.best_checkpoint = cfg.out_dir / "best.ckpt";
    out.last_checkpoint = cfg.out_dir / "last.ckpt";
    const json meta = {{"best_epoch", out.best_epoch}};
    save_checkpoint(models.best, out.best_checkpoint, meta);
    save_checkpoint(models.last, out.last_checkpoint, {{"epoch", cfg.model.epochs}});
    write_text(cfg.out_dir / "run_log.json", to_json(out.log).dump(2) + "\n");
    write_text(cfg.out_dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plots

/// Writes loss_curve.svg (when the log is non-empty) and one
/// timeline_<id>.svg per evaluated video with a predicted labeling.
inline std::vector<fs::path> emit_plots(const RunLog& log, const EvalResult& eval, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> files;
  if (!log.epochs.empty()) {
    std::vector<Curve> curves = {{"total", "#000000", {}}, {"segmentation", "#4363d8", {}}, {"assessment", "#e6194b", {}}};
    for (const auto& e : log.epochs) {
      curves[0].values.push_back(e.loss_total);
      curves[1].values.push_back(e.loss_segmentation);
      curves[2].values.push_back(e.loss_assessment);
    }
    files.push_back(out_dir / "loss_curve.svg");
    write_text(files.back(), line_chart_svg("training loss", curves));
  }
  for (const auto& v : eval.videos) {
    if (!v.predicted_labels) continue;
    files.push_back(out_dir / ("timeline_" + v.id + ".svg"));
    write_text(files.back(), timeline_svg(v.id, v.gt_labels, *v.predicted_labels));
  }
  return files;
}

// ---------------------------------------------------------------------------
// Ablation

enum class AblationMode { MotionFeatures, Attention, StepVsWhole, Sigmoid };

inline AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "motion-features") return AblationMode::MotionFeatures;
  if (s == "attention") return AblationMode::Attention;
  if (s == "step-vs-whole") return AblationMode::StepVsWhole;
  if (s == "sigmoid") return AblationMode::Sigmoid;
  throw Error("unknown ablation mode '" + s + "' (motion-features, attention, step-vs-whole, sigmoid)");
}

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::MotionFeatures: return "motion-features";
    case AblationMode::Attention: return "attention";
    case AblationMode::StepVsWhole: return "step-vs-whole";
    case AblationMode::Sigmoid: return "sigmoid";
  }
  return "?";
}

struct AblationRow {
  std::string variant;
  MetricsReport report;
  double train_seconds = 0.0;
  double eval_ms_per_video = 0.0;
};

struct AblationReport {
  AblationMode mode{};
  std::vector<AblationRow> rows;
};

/// The two paired variants for a mode; the first row is the full framework.
inline std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base, AblationMode mode) {
  ModelConfig a = base, b = base;
  switch (mode) {
    case AblationMode::MotionFeatures:
      a.use_motion_features = true;
      b.use_motion_features = false;
      return {{"with motion features", a}, {"appearance only", b}};
    case AblationMode::Attention:
      a.attention_mode = AttentionMode::Linear;
      b.attention_mode = AttentionMode::Quadratic;
      return {{"linear transformer", a}, {"traditional transformer", b}};
    case AblationMode::StepVsWhole:
      a.assessment = AssessmentMode::KeyActionScorer;
      b.assessment = AssessmentMode::WholeVideo;
      return {{"step-based KAS", a}, {"whole video + MLP", b}};
    case AblationMode::Sigmoid:
      a.learnable_sigmoid = true;
      b.learnable_sigmoid = false;
      return {{"learnable sigmoid", a}, {"fixed sigmoid", b}};
  }
  return {};
}

inline json to_json(const AblationReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"variant", row.variant},
                    {"metrics", to_json(row.report)},
                    {"train_seconds", row.train_seconds},
                    {"eval_ms_per_video", row.eval_ms_per_video}});
  }
  return {{"mode", to_string(r.mode)}, {"rows", rows}};
}

inline std::string ablation_table(const AblationReport& r) {
  std::ostringstream out;
  char buf[64];
  out << "ablation: " << to_string(r.mode) << "\n";
  out << "Variant                  | " << table_header() << " | train s | eval ms/video\n";
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-24s", row.variant.c_str());
    out << buf << " | " << table_row(row.report);
    std::snprintf(buf, sizeof buf, " | %7.1f | %.2f\n", row.train_seconds, row.eval_ms_per_video);
    out << buf;
  }
  return out.str();
}

/// Trains both variants of `mode` under the config's seed and reports them on
/// the test split. Writes ablation.json / ablation.txt under
/// out_dir/ablate_<mode>/ when `write_files`.
inline AblationReport ablate(const RunConfig& cfg, AblationMode mode, const TrainOptions& opts = {}) {
  AblationReport report;
  report.mode = mode;
  const auto dir = cfg.out_dir / ("ablate_" + to_string(mode));
  for (const auto& [name, model_cfg] : ablation_variants(cfg.model, mode)) {
    RunConfig variant = cfg;
    variant.model = model_cfg;
    const auto train_set = load_videos(variant.train_manifest, variant.model);
    const auto eval_set = load_videos(variant.selection_manifest(), variant.model);
    const auto test_set = load_videos(variant.report_manifest(), variant.model);

    const auto t0 = std::chrono::steady_clock::now();
    TrainedModels trained = train_models(variant, train_set, eval_set, opts);
    const auto t1 = std::chrono::steady_clock::now();
    EvalResult eval = evaluate_model(trained.best, test_set);
    const auto t2 = std::chrono::steady_clock::now();

    AblationRow row;
    row.variant = name;
    row.report = eval.report;
    row.train_seconds = std::chrono::duration<double>(t1 - t0).count();
    row.eval_ms_per_video =
        1000.0 * std::chrono::duration<double>(t2 - t1).count() / static_cast<double>(std::max<std::size_t>(test_set.size(), 1));
    report.rows.push_back(std::move(row));
    if (opts.write_files) {
      fs::create_directories(dir);
      std::string slug = name;
      for (char& ch : slug) if (ch == ' ' || ch == '+') ch = '_';
      save_checkpoint(trained.best, dir / (slug + ".ckpt"));
    }
  }
  if (opts.write_files) {
    write_text(dir / "ablation.json", to_json(report).dump(2) + "\n");
    write_text(dir / "ablation.txt", ablation_table(report));
  }
  return report;
}

}  // namespace stepscore
