// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance 3 5        run only criteria 3 and 5
//
// Exit status is non-zero when any selected criterion fails.

#include "stepscore/stepscore.hpp"

#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace {

using namespace stepscore;
using stepscore::testing::check_gradients;
using stepscore::testing::GradCheckResult;
using stepscore::testing::NamedParam;
using stepscore::testing::random_matrix;
using stepscore::testing::TempDir;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small model shared by the training criteria; 64-d synthetic features.
ModelConfig desk_model(int epochs) {
  ModelConfig m;
  m.feature_dim = 64;
  m.hidden_dim = 32;
  m.layers_per_stage = 8;
  m.stages = 4;
  m.epochs = epochs;
  m.seed = 0;
  return m;
}

// ---------------------------------------------------------------------------
// 1. Linear attention against the quadratic reference.

Outcome attention_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  const int cases = 200;
  for (int i = 0; i < cases; ++i) {
    const Index T = rng.uniform_int(1, 64);
    const Index D = rng.uniform_int(1, 16);
    AttentionParams p(D);
    p.init(rng);
    const Mat f = random_matrix(rng, T, D, rng.uniform(0.1, 3.0));
    const Mat a = linear_attention(f, p);
    const Mat b = quadratic_attention_reference(f, p);
    worst = std::max(worst, (a - b).norm() / std::max(b.norm(), 1e-300));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0, std::to_string(cases) + " cases, max relative error " + fmt("%.2e", worst) +
                                            " (tol 1e-6), " + fmt("%.2f", secs) + " s (limit 10 s)"};
}

// ---------------------------------------------------------------------------
// 2. Wall-time scaling from T=4096 to T=8192.

double best_time(const std::function<void()>& f, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

Outcome complexity() {
  const auto t0 = Clock::now();
  Rng rng(7);
  const Index D = 32;
  AttentionParams p(D);
  p.init(rng);
  const Mat f4 = random_matrix(rng, 4096, D), f8 = random_matrix(rng, 8192, D);
  volatile double sink = 0.0;
  auto lin = [&](const Mat& f) { return [&] { sink = sink + linear_attention(f, p)(0, 0); }; };
  auto quad = [&](const Mat& f) { return [&] { sink = sink + quadratic_attention_reference(f, p)(0, 0); }; };
  const double l4 = best_time(lin(f4), 7), l8 = best_time(lin(f8), 7);
  const double q4 = best_time(quad(f4), 3), q8 = best_time(quad(f8), 3);
  const double lr = l8 / l4, qr = q8 / q4;
  const double secs = seconds_since(t0);
  return {qr > 3.0 && lr < 3.0 && secs < 120.0,
          "quadratic " + fmt("%.3f", q4) + " s -> " + fmt("%.3f", q8) + " s (ratio " + fmt("%.2f", qr) + ", need > 3); linear " +
              fmt("%.4f", l4) + " s -> " + fmt("%.4f", l8) + " s (ratio " + fmt("%.2f", lr) + ", need < 3); " +
              fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 3. Analytic gradients against central finite differences.

struct GradSuite {
  std::vector<std::pair<std::string, GradCheckResult>> results;

  void add(const std::string& name, GradCheckResult r) { results.emplace_back(name, std::move(r)); }
};

std::vector<ClassId> random_frames(Rng& rng, Index T) {
  std::vector<ClassId> f(static_cast<std::size_t>(T));
  for (auto& c : f) c = static_cast<ClassId>(rng.uniform_int(0, kNumClasses - 1));
  return f;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  constexpr int kSamples = 40;
  // Piecewise-linear networks need a step that rarely straddles a ReLU kink.
  constexpr double kStep = 1e-5;
  constexpr double kTol = 1e-4;
  Rng rng(99);
  GradSuite suite;

  {
    AttentionParams p(8);
    p.init(rng);
    Param f(24, 8);
    f.value = random_matrix(rng, 24, 8);
    const Mat w = random_matrix(rng, 24, 8);
    AttentionCache cache;
    linear_attention(f.value, p, &cache);
    p.for_each_param("", [](const std::string&, Param& q) { q.zero_grad(); });
    f.grad = linear_attention_backward(cache, w, p);
    std::vector<NamedParam> ps{{"input", &f}};
    p.for_each_param("", [&](const std::string& n, Param& q) { ps.push_back({n, &q}); });
    suite.add("linear_attention",
              check_gradients(ps, [&] { return linear_attention(f.value, p).cwiseProduct(w).sum(); }, kSamples, 1, kStep, kTol));
  }
  {
    StageParams p(10, 8, 4, 3);
    p.init(rng);
    p.for_each_param("", [&](const std::string&, Param& q) { q.value += random_matrix(rng, q.value.rows(), q.value.cols(), 0.1); });
    Param x(48, 10);
    x.value = random_matrix(rng, 48, 10);
    const Mat wl = random_matrix(rng, 48, kNumClasses), wf = random_matrix(rng, 48, 8);
    StageCache cache;
    stage_forward(x.value, p, &cache);
    p.for_each_param("", [](const std::string&, Param& q) { q.zero_grad(); });
    x.grad = stage_backward(cache, wl, wf, p);
    std::vector<NamedParam> ps{{"input", &x}};
    p.for_each_param("", [&](const std::string& n, Param& q) { ps.push_back({n, &q}); });
    auto loss = [&] {
      const auto o = stage_forward(x.value, p);
      return o.logits.cwiseProduct(wl).sum() + o.feature.cwiseProduct(wf).sum();
    };
    suite.add("stage_forward", check_gradients(ps, loss, std::max<int>(kSamples, 2 * static_cast<int>(ps.size())), 2, kStep, kTol));
  }
  {
    Param x(1, 1), lam(1, 1);
    GradCheckResult all;
    for (int i = 0; i < kSamples / 2; ++i) {
      x.value(0, 0) = rng.uniform(-4, 4);
      lam.value(0, 0) = rng.uniform(0.2, 3.0);
      const auto g = learnable_sigmoid_grad(x.value(0, 0), lam.value(0, 0));
      x.grad(0, 0) = g.dx;
      lam.grad(0, 0) = g.dsteepness;
      auto r = check_gradients({{"x", &x}, {"steepness", &lam}}, [&] { return learnable_sigmoid(x.value(0, 0), lam.value(0, 0)); },
                               2, static_cast<std::uint64_t>(i), kStep, kTol);
      all.checked += r.checked;
      all.max_rel_error = std::max(all.max_rel_error, r.max_rel_error);
      all.failures.insert(all.failures.end(), r.failures.begin(), r.failures.end());
    }
    suite.add("learnable_sigmoid", all);
  }
  {
    KasParams p(6, 2, 1.3, true);
    p.init(rng);
    auto& step = p.steps[2];
    for (auto& br : step.branches) br.b.value(0, 0) = rng.normal();
    Param feat(1, 6);
    feat.value = random_matrix(rng, 1, 6);
    feat.grad = score_step_backward(feat.value.row(0), 1.0, step);
    std::vector<NamedParam> ps{{"feature", &feat}};
    for (auto& br : step.branches) {
      ps.push_back({"w", &br.w});
      ps.push_back({"b", &br.b});
      ps.push_back({"rho", &br.rho});
    }
    suite.add("score_step", check_gradients(ps, [&] { return score_step(feat.value.row(0), step).score; }, kSamples, 3, kStep, kTol));
  }
  {
    Param z(20, kNumClasses);
    z.value = random_matrix(rng, 20, kNumClasses, 2.0);
    const auto frames = random_frames(rng, 20);
    cross_entropy_logits(z.value, frames, &z.grad);
    suite.add("cross_entropy", check_gradients({{"logits", &z}}, [&] { return cross_entropy_logits(z.value, frames); }, kSamples, 4));
  }
  {
    Param z(20, kNumClasses);
    z.value = random_matrix(rng, 20, kNumClasses, 2.0);
    truncated_smoothing_logits(z.value, 4.0, &z.grad, false);
    suite.add("truncated_smoothing",
              check_gradients({{"logits", &z}}, [&] { return truncated_smoothing_logits(z.value, 4.0); }, kSamples, 5));
  }
  {
    // With the stop-gradient, the oracle reads frame t-1 from a frozen copy.
    Param z(20, kNumClasses);
    z.value = random_matrix(rng, 20, kNumClasses, 2.0);
    const Mat frozen = log_softmax_rows(z.value);
    truncated_smoothing_logits(z.value, 4.0, &z.grad, true);
    auto detached = [&] {
      const Mat lp = log_softmax_rows(z.value);
      double sum = 0.0;
      for (Index t = 1; t < lp.rows(); ++t) {
        for (Index c = 0; c < lp.cols(); ++c) {
          const double d = std::min(std::abs(lp(t, c) - frozen(t - 1, c)), 4.0);
          sum += d * d;
        }
      }
      return sum / static_cast<double>(lp.size());
    };
    suite.add("truncated_smoothing (stop-grad)", check_gradients({{"logits", &z}}, detached, kSamples, 6));
  }
  {
    Param a(16, kNumClasses), b(16, kNumClasses);
    a.value = random_matrix(rng, 16, kNumClasses);
    b.value = random_matrix(rng, 16, kNumClasses);
    const auto frames = random_frames(rng, 16);
    LossConfig cfg;
    cfg.stage_weights = {0.6, 1.4};
    std::vector<Mat> grads;
    segmentation_loss({a.value, b.value}, frames, cfg, &grads);
    a.grad = grads[0];
    b.grad = grads[1];
    // Oracle: weighted CE plus smoothing against frozen frame t-1.
    const Mat fa = log_softmax_rows(a.value), fb = log_softmax_rows(b.value);
    auto smooth = [&](const Mat& z, const Mat& frozen) {
      const Mat lp = log_softmax_rows(z);
      double sum = 0.0;
      for (Index t = 1; t < lp.rows(); ++t) {
        for (Index c = 0; c < lp.cols(); ++c) {
          const double d = std::min(std::abs(lp(t, c) - frozen(t - 1, c)), cfg.tau);
          sum += d * d;
        }
      }
      return sum / static_cast<double>(lp.size());
    };
    auto oracle = [&] {
      return 0.6 * (cross_entropy_logits(a.value, frames) + cfg.lambda_t * smooth(a.value, fa)) +
             1.4 * (cross_entropy_logits(b.value, frames) + cfg.lambda_t * smooth(b.value, fb));
    };
    suite.add("segmentation_loss", check_gradients({{"stage0", &a}, {"stage1", &b}}, oracle, kSamples, 7));
  }
  {
    // d/dyhat of the per-video squared error is what training back-propagates.
    Param s(1, 1);
    GradCheckResult all;
    for (int i = 0; i < kSamples; ++i) {
      s.value(0, 0) = rng.uniform(0, 6);
      const double target = rng.uniform(0, 6);
      s.grad(0, 0) = 2.0 * (s.value(0, 0) - target);
      auto r = check_gradients({{"score", &s}}, [&] {
        const std::vector<double> p = {s.value(0, 0)}, g = {target};
        return total_loss(0.0, assessment_mse(p, g));
      }, 1, static_cast<std::uint64_t>(i));
      all.checked += r.checked;
      all.max_rel_error = std::max(all.max_rel_error, r.max_rel_error);
      all.failures.insert(all.failures.end(), r.failures.begin(), r.failures.end());
    }
    suite.add("assessment_mse", all);
  }

  bool ok = true;
  std::string detail;
  for (const auto& [name, r] : suite.results) {
    const bool pass = r.ok() && r.checked >= 20;
    ok = ok && pass;
    detail += "\n      " + name + ": " + std::to_string(r.checked) + " entries, max rel err " + fmt("%.2e", r.max_rel_error) +
              (pass ? "" : "  <-- " + (r.failures.empty() ? std::string("too few samples") : r.failures.front()));
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  return {ok, "tol 1e-4, " + fmt("%.1f", secs) + " s" + detail};
}

// ---------------------------------------------------------------------------
// 4. Metric fixtures and ground truth fed back as prediction.

Outcome metric_oracles() {
  std::vector<std::string> failed;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond) failed.push_back(what);
  };
  using S = FrameLabelSequence;
  const ClassId bg = kBackgroundClass;

  check(frame_accuracy(S({{0, 9}, {1, 3}}), S({{0, 6}, {1, 6}})) == 75.0, "accuracy 9/12");
  check(std::abs(segmental_edit_score(S({{0, 3}, {1, 3}, {2, 4}}), S({{0, 5}, {2, 5}})) - 66.67) <= 0.01, "edit 66.67");
  {
    const S gt({{bg, 10}, {0, 20}, {bg, 10}});
    const S clean({{bg, 12}, {0, 20}, {bg, 8}});
    const S frag({{bg, 10}, {0, 3}, {2, 1}, {0, 3}, {2, 1}, {0, 3}, {2, 1}, {0, 3}, {2, 1}, {0, 4}, {bg, 10}});
    check(frame_accuracy(clean, gt) == frame_accuracy(frag, gt) &&
              segmental_edit_score(frag, gt) < segmental_edit_score(clean, gt),
          "edit penalizes over-segmentation");
  }
  {
    const S gt({{0, 100}});
    const S half({{0, 50}, {bg, 50}});
    for (double t : kF1Thresholds) check(segmental_f1(half, gt, t) == 100.0, "F1 half overlap @" + fmt("%.2f", t));
    check(std::abs(segmental_f1(S({{0, 50}, {bg, 1}, {0, 49}}), gt, 0.10) - 200.0 / 3.0) < 1e-9, "F1 split 66.67");
    for (double t : kF1Thresholds) check(segmental_f1(gt, gt, t) == 100.0, "F1 perfect");
  }
  {
    const std::vector<double> a = {1, 2, 3, 4};
    check(std::abs(spearman(a, std::vector<double>{1, 3, 2, 4}) - 0.8) <= 1e-9, "spearman 0.8");
    check(std::abs(spearman(a, a) - 1.0) <= 1e-12, "spearman identical");
    check(std::abs(spearman(a, std::vector<double>{4, 3, 2, 1}) + 1.0) <= 1e-12, "spearman reversed");
  }
  {
    const double v = relative_l2(std::vector<double>{2.0, 5.0}, std::vector<double>{1.0, 3.0}, 0.0, 6.0);
    check(std::abs(v - (1.0 / 36 + 4.0 / 36) / 2) < 1e-15 && std::abs(v - 0.0694) < 1e-4, "R-l2 0.0694");
    check(relative_l2(std::vector<double>{1.0}, std::vector<double>{0.0}, 0.0, 1.0) == 1.0, "R-l2 full range");
    check(relative_l2(std::vector<double>{1.0, 4.0}, std::vector<double>{1.0, 4.0}) == 0.0, "R-l2 perfect");
  }

  // Ground truth as prediction over a generated corpus.
  GeneratorSpec g;
  g.seed = 5;
  g.n_videos = 40;
  g.feature_dim = 8;
  MetricsAccumulator acc;
  for (int i = 0; i < g.n_videos; ++i) {
    const auto v = generate_video(g, i);
    acc.add_segmentation(v.record.labels, v.record.labels);
    acc.add_score(v.record.gt_score, v.record.gt_score);
  }
  const auto r = acc.report();
  bool oracle = r.acc == 100.0 && r.edit == 100.0 && r.spearman && std::abs(*r.spearman - 1.0) < 1e-12 && r.r_l2_x100 == 0.0;
  for (double t : kF1Thresholds) oracle = oracle && r.f1.at(t) == 100.0;
  check(oracle, "ground truth as prediction");

  std::string detail = failed.empty() ? "all fixtures exact; GT-as-prediction: " + table_row(r) : "failed:";
  for (const auto& f : failed) detail += " [" + f + "]";
  return {failed.empty(), detail};
}

// ---------------------------------------------------------------------------
// 5. Overfit on 20 noise-free videos.

Outcome overfit(const fs::path& root) {
  const auto t0 = Clock::now();
  GeneratorSpec g;
  g.seed = 1;
  g.n_videos = 20;
  g.feature_dim = 64;
  g.noise_sigma = 0.0;
  g.train_fraction = 1.0;
  const auto paths = generate_dataset(g, root / "overfit");

  RunConfig cfg;
  cfg.model = desk_model(200);
  cfg.train_manifest = paths.train_manifest;
  cfg.eval_every = 10;
  TrainOptions opts;
  opts.write_files = false;
  const auto videos = load_videos(cfg.train_manifest, cfg.model);
  const auto trained = train_models(cfg, videos, videos, opts);
  const auto r = evaluate_model(trained.best, videos).report;
  const double secs = seconds_since(t0);
  const bool ok = *r.acc >= 99.0 && r.spearman && *r.spearman >= 0.9 && r.r_l2_x100 && *r.r_l2_x100 <= 5.0 && secs <= 900.0;
  return {ok, "train acc " + fmt("%.2f", *r.acc) + " (>= 99), Spearman " + fmt("%.3f", r.spearman.value_or(NAN)) +
                  " (>= 0.9), R-l2x100 " + fmt("%.3f", r.r_l2_x100.value_or(NAN)) + " (<= 5), best epoch " +
                  std::to_string(trained.best_epoch + 1) + "/200, " + fmt("%.0f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 6 and 7 share one noisy 80/20 corpus and one cache of trained variants.

struct Corpus {
  std::vector<LoadedVideo> train, test;
};

class VariantRunner {
 public:
  VariantRunner(const fs::path& root, int epochs) : epochs_(epochs) {
    GeneratorSpec g;
    g.seed = 100;
    g.n_videos = 100;
    g.feature_dim = 64;
    g.noise_sigma = kNoise;
    g.train_fraction = 0.8;
    paths_ = generate_dataset(g, root / "generalization");
  }

  static constexpr double kNoise = 1.5;

  /// Trains (or reuses) the model for `m`; selection on the training split,
  /// report on the test split.
  const MetricsReport& run(const ModelConfig& m, double* seconds = nullptr) {
    const std::string key = json(m).dump();
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      const auto t0 = Clock::now();
      RunConfig cfg;
      cfg.model = m;
      cfg.eval_every = 5;
      TrainOptions opts;
      opts.write_files = false;
      const auto train = load_videos(paths_.train_manifest, m);
      const auto test = load_videos(paths_.test_manifest, m);
      const auto trained = train_models(cfg, train, train, opts);
      it = cache_.emplace(key, std::make_pair(evaluate_model(trained.best, test).report, seconds_since(t0))).first;
    }
    if (seconds) *seconds = it->second.second;
    return it->second.first;
  }

  ModelConfig base() const { return desk_model(epochs_); }
  std::size_t test_size() const { return load_manifest(paths_.test_manifest, {.check_features = false}).size(); }
  std::size_t train_size() const { return load_manifest(paths_.train_manifest, {.check_features = false}).size(); }

 private:
  int epochs_;
  DatasetPaths paths_;
  std::map<std::string, std::pair<MetricsReport, double>> cache_;
};

Outcome generalization(VariantRunner& runner) {
  double t_lin = 0, t_off = 0;
  ModelConfig lin = runner.base(), off = runner.base();
  lin.attention_mode = AttentionMode::Linear;
  off.attention_mode = AttentionMode::Off;
  const auto& a = runner.run(lin, &t_lin);
  const auto& b = runner.run(off, &t_off);
  const double rho = a.spearman.value_or(-1.0);
  const bool ok = rho >= 0.7 && *a.edit >= *b.edit && t_lin + t_off <= 3600.0;
  return {ok, std::to_string(runner.train_size()) + "/" + std::to_string(runner.test_size()) + " videos, noise " +
                  fmt("%.1f", VariantRunner::kNoise) + "; test Spearman " + fmt("%.3f", rho) + " (>= 0.7); test Edit linear " +
                  fmt("%.2f", *a.edit) + " vs attention-off " + fmt("%.2f", *b.edit) + " (need >=); " +
                  fmt("%.0f", t_lin + t_off) + " s"};
}

Outcome ablation_orderings(VariantRunner& runner) {
  auto pair = [&](AblationMode mode, double& secs) {
    const auto v = ablation_variants(runner.base(), mode);
    double s0 = 0, s1 = 0;
    const double a = runner.run(v[0].second, &s0).spearman.value_or(-1.0);
    const double b = runner.run(v[1].second, &s1).spearman.value_or(-1.0);
    secs = s0 + s1;
    return std::make_pair(a, b);
  };
  double ts = 0, tl = 0;
  const auto [kas, whole] = pair(AblationMode::StepVsWhole, ts);
  const auto [learn, fixed] = pair(AblationMode::Sigmoid, tl);
  const bool ok = kas > whole && learn >= fixed && ts <= 1800.0 && tl <= 1800.0;
  return {ok, "test Spearman: step-based KAS " + fmt("%.3f", kas) + " vs whole-video " + fmt("%.3f", whole) +
                  " (need >); learnable " + fmt("%.3f", learn) + " vs fixed " + fmt("%.3f", fixed) + " (need >=)"};
}

// ---------------------------------------------------------------------------
// 8. Two full file-based train + eval runs.

Outcome determinism(const fs::path& root) {
  GeneratorSpec g;
  g.seed = 8;
  g.n_videos = 12;
  g.feature_dim = 16;
  g.noise_sigma = 1.0;
  const auto paths = generate_dataset(g, root / "determinism");
  std::vector<std::string> reports, ckpts, preds;
  for (int run = 0; run < 2; ++run) {
    RunConfig cfg;
    cfg.model = desk_model(6);
    cfg.model.feature_dim = 16;
    cfg.model.hidden_dim = 12;
    cfg.model.layers_per_stage = 5;
    cfg.model.seed = 42;
    cfg.train_manifest = paths.train_manifest;
    cfg.test_manifest = paths.test_manifest;
    cfg.out_dir = root / ("det_run" + std::to_string(run));
    const auto r = train(cfg);
    evaluate(r.best_checkpoint, paths.test_manifest, cfg.out_dir / "eval");
    reports.push_back(slurp(cfg.out_dir / "eval" / "report.json"));
    preds.push_back(slurp(cfg.out_dir / "eval" / "assessments.json"));
    ckpts.push_back(slurp(r.best_checkpoint));
  }
  const bool ok = reports[0] == reports[1] && preds[0] == preds[1] && ckpts[0] == ckpts[1] && !reports[0].empty();
  return {ok, std::string("report.json ") + (reports[0] == reports[1] ? "identical" : "DIFFERS") + ", assessments.json " +
                  (preds[0] == preds[1] ? "identical" : "DIFFERS") + ", best.ckpt " + (ckpts[0] == ckpts[1] ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------------------
// 9. Format round trips.

Outcome round_trips(const fs::path& root) {
  const auto t0 = Clock::now();
  Rng rng(9);
  const fs::path dir = root / "roundtrip";
  fs::create_directories(dir / "features");
  int hhaf_ok = 0, manifest_ok = 0;
  constexpr int kFixtures = 1000;

  for (int i = 0; i < kFixtures; ++i) {
    FeatureSequence s{Mat(rng.uniform_int(1, 64), rng.uniform_int(1, 64))};
    for (Index k = 0; k < s.values.size(); ++k) s.values.data()[k] = static_cast<float>(rng.normal() * 100.0);
    const fs::path p = dir / "f.hhaf";
    const auto bytes = write_features(s, p);
    const auto back = read_features(p);
    hhaf_ok += back == s && bytes == 16 + 4 * static_cast<std::uint64_t>(s.values.size());
  }

  for (int i = 0; i < kFixtures; ++i) {
    std::vector<VideoRecord> recs;
    const int n = static_cast<int>(rng.uniform_int(1, 4));
    std::set<std::string> ids;
    for (int k = 0; k < n; ++k) {
      VideoRecord r;
      do {
        r.id = "v" + std::to_string(rng.uniform_int(0, 999999));
      } while (!ids.insert(r.id).second);
      std::vector<Run> runs;
      const int nr = static_cast<int>(rng.uniform_int(1, 10));
      for (int j = 0; j < nr; ++j) {
        ClassId c = static_cast<ClassId>(rng.uniform_int(0, kNumClasses - 1));
        if (!runs.empty() && runs.back().cls == c) c = (c + 1) % kNumClasses;
        runs.push_back({c, rng.uniform_int(1, 20)});
      }
      r.labels = FrameLabelSequence(runs);
      r.feature_path = dir / "features" / (r.id + ".hhaf");
      write_features(FeatureSequence{Mat::Zero(r.labels.frames(), 2)}, r.feature_path);
      for (int s = 0; s < kNumSteps; ++s) r.attributes.push_back(static_cast<StepAttribute>(rng.uniform_int(0, 2)));
      r.gt_score = rng.uniform(0.0, 6.0);
      recs.push_back(std::move(r));
    }
    save_manifest(recs, dir / "m.json");
    auto back = load_manifest(dir / "m.json");
    std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    bool same = back.size() == recs.size();
    for (std::size_t k = 0; same && k < recs.size(); ++k) {
      same = back[k].id == recs[k].id && back[k].labels == recs[k].labels && back[k].attributes == recs[k].attributes &&
             back[k].gt_score == recs[k].gt_score && fs::equivalent(back[k].feature_path, recs[k].feature_path);
    }
    manifest_ok += same;
    for (const auto& r : recs) fs::remove(r.feature_path);
  }
  return {hhaf_ok == kFixtures && manifest_ok == kFixtures,
          "HHAF " + std::to_string(hhaf_ok) + "/" + std::to_string(kFixtures) + ", manifest " + std::to_string(manifest_ok) + "/" +
              std::to_string(kFixtures) + ", " + fmt("%.1f", seconds_since(t0)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  TempDir root("stepscore-acceptance");
  std::optional<VariantRunner> runner;
  auto variants = [&]() -> VariantRunner& {
    if (!runner) runner.emplace(root.path(), 40);
    return *runner;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"attention oracle equivalence", attention_equivalence},
      {"attention complexity scaling", complexity},
      {"gradient suite", gradient_suite},
      {"metric oracles", metric_oracles},
      {"overfit run", [&] { return overfit(root.path()); }},
      {"generalization run", [&] { return generalization(variants()); }},
      {"ablation orderings", [&] { return ablation_orderings(variants()); }},
      {"determinism", [&] { return determinism(root.path()); }},
      {"format round trips", [&] { return round_trips(root.path()); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d [%s] %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
