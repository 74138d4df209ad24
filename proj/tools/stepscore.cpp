// stepscore: command line front end.
//
//   stepscore synth   --spec <file> --out <dir>
//   stepscore train   --config <file>
//   stepscore eval    --checkpoint <file> --manifest <file> --out <dir>
//   stepscore ablate  --mode <m> --config <file>
//   stepscore metrics --pred <file> --gt <file>

#include "stepscore/stepscore.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace {

using namespace stepscore;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void print_epoch(const EpochLog& e) {
  std::printf("epoch %4d  loss %.4f (seg %.4f, mse %.4f)", e.epoch + 1, e.loss_total, e.loss_segmentation,
              e.loss_assessment);
  if (e.eval) {
    if (e.eval->acc) std::printf("  acc %.1f", *e.eval->acc);
    if (e.eval->spearman) std::printf("  rho %.3f", *e.eval->spearman);
  }
  std::printf("  %.1fs\n", e.wall_seconds);
  std::fflush(stdout);
}

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const auto spec = read_json(spec_path).get<GeneratorSpec>();
  const auto paths = generate_dataset(spec, out);
  const int n_train = train_split_size(spec.n_videos, spec.train_fraction);
  std::printf("wrote %d videos (%d train, %d test)\n  %s\n  %s\n", spec.n_videos, n_train, spec.n_videos - n_train,
              paths.train_manifest.string().c_str(), paths.test_manifest.string().c_str());
  return 0;
}

int cmd_train(const fs::path& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  if (cfg.train_manifest.empty()) throw Error("config: train_manifest is required");
  TrainOptions opts;
  opts.on_epoch = print_epoch;
  const TrainResult r = train(cfg, opts);

  const EvalResult eval = evaluate(r.best_checkpoint, cfg.selection_manifest());
  emit_plots(r.log, eval, cfg.out_dir / "plots");
  std::printf("best epoch %d", r.best_epoch + 1);
  if (r.best_spearman) std::printf(" (rho %.3f)", *r.best_spearman);
  std::printf("\n%s\n%s\n", table_header().c_str(), table_row(eval.report).c_str());
  std::printf("checkpoint: %s\n", r.best_checkpoint.string().c_str());
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out) {
  const EvalResult r = evaluate(checkpoint, manifest, out);
  emit_plots({}, r, out / "plots");
  std::printf("%s\n%s\n", table_header().c_str(), table_row(r.report).c_str());
  return 0;
}

int cmd_ablate(const std::string& mode, const fs::path& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  const AblationMode m = ablation_mode_from_string(mode);
  std::printf("%s", ablation_table(ablate(cfg, m)).c_str());
  return 0;
}

struct ScoredEntry {
  std::optional<FrameLabelSequence> labels;
  std::optional<double> score;
};

// Accepts prediction files ({id, score, labels}) and manifests ({id, gt_score, labels, ...}).
std::map<std::string, ScoredEntry> read_scored(const fs::path& path) {
  const json doc = read_json(path);
  if (!doc.is_array()) throw Error(path.string() + ": expected a list of records");
  std::map<std::string, ScoredEntry> out;
  for (const auto& e : doc) {
    const auto id = e.at("id").get<std::string>();
    ScoredEntry s;
    if (e.contains("labels")) {
      std::vector<Run> runs;
      for (const auto& r : e["labels"]) runs.push_back({r.at(0).get<int>(), r.at(1).get<std::int64_t>()});
      s.labels = FrameLabelSequence(std::move(runs));
      if (auto v = s.labels->violations(); !v.empty()) throw Error(path.string() + ": " + id + ": " + v.front());
    }
    if (e.contains("gt_score")) s.score = e["gt_score"].get<double>();
    else if (e.contains("score")) s.score = e["score"].get<double>();
    if (!out.emplace(id, std::move(s)).second) throw Error(path.string() + ": duplicate id " + id);
  }
  return out;
}

int cmd_metrics(const fs::path& pred_path, const fs::path& gt_path) {
  const auto pred = read_scored(pred_path);
  const auto gt = read_scored(gt_path);
  MetricsAccumulator acc;
  for (const auto& [id, g] : gt) {
    auto it = pred.find(id);
    if (it == pred.end()) throw Error("no prediction for " + id);
    const auto& p = it->second;
    if (g.labels && p.labels) acc.add_segmentation(*p.labels, *g.labels);
    if (g.score && p.score) acc.add_score(*p.score, *g.score);
  }
  for (const auto& [id, p] : pred) {
    if (!gt.count(id)) throw Error("prediction " + id + " has no ground truth");
  }
  const MetricsReport r = acc.report();
  std::printf("%s\n%s\n%s\n", table_header().c_str(), table_row(r).c_str(), to_json(r).dump().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Step segmentation and key-action scoring on per-frame video features"};
  app.require_subcommand(1);

  std::string spec, out, config, checkpoint, manifest, mode, pred, gt;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--spec", spec, "generator spec (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "report directory")->required();

  auto* abl = app.add_subcommand("ablate", "train and compare a pair of variants");
  abl->add_option("--mode", mode, "motion-features | attention | step-vs-whole | sigmoid")
      ->required()
      ->check(CLI::IsMember({"motion-features", "attention", "step-vs-whole", "sigmoid"}));
  abl->add_option("--config", config, "run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* met = app.add_subcommand("metrics", "score prediction files offline");
  met->add_option("--pred", pred, "predictions ({id, score, labels} list)")->required()->check(CLI::ExistingFile);
  met->add_option("--gt", gt, "ground truth (manifest or {id, score, labels} list)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec, out);
    if (*train) return cmd_train(config);
    if (*eval) return cmd_eval(checkpoint, manifest, out);
    if (*abl) return cmd_ablate(mode, config);
    if (*met) return cmd_metrics(pred, gt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
