// Acceptance suite. Prints one PASS/FAIL line per exit criterion and exits
// non-zero when any criterion fails.
//
// usage: acceptance <work_dir>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "afv/afv_extract.hpp"
#include "afv/baseline_profile.hpp"
#include "afv/cluster_merge.hpp"
#include "afv/dataset_ops.hpp"
#include "afv/emd.hpp"
#include "afv/metrics_report.hpp"
#include "afv/pipeline.hpp"
#include "afv/random.hpp"
#include "afv/second_stage.hpp"
#include "afv/stat_tests.hpp"
#include "afv/synth_bench.hpp"
#include "afv/text_format.hpp"
#include "oracles/feature_oracle.hpp"
#include "oracles/graph_oracle.hpp"

using namespace afv;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and thresholds.
constexpr double kFeatureTol = 1e-10;
constexpr double kOracleSeconds = 10.0;
constexpr double kEmdTol = 1e-10;
constexpr double kFixtureStatTol = 1e-6;  // relative to max(1, |stat|)
constexpr double kFixturePTol = 1e-4;
constexpr int kNullTrials = 1000;
constexpr int kDecileLo = 60, kDecileHi = 140;  // 10% +- 4% of 1000
constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradParams = 200;
constexpr std::size_t kPerClass = 2000;
constexpr double kDetectionTarget = 0.90;
constexpr double kMacroF1Target = 0.80;
constexpr double kEndToEndSeconds = 300.0;
constexpr int kClusterTrials = 50;
constexpr double kAgreementTarget = 0.99;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

std::vector<std::vector<float>> raw(const LatentDataset& d) {
  std::vector<std::vector<float>> out;
  for (const auto& t : d.samples) out.push_back(t.values);
  return out;
}

LatentDataset gaussian(Shape shape, std::size_t n, std::uint64_t seed, double mean, double sd) {
  Rng rng(seed);
  LatentDataset ds;
  ds.class_names[0] = "clean";
  for (std::size_t i = 0; i < n; ++i) {
    LatentTensor t;
    t.shape = shape;
    for (std::size_t k = 0; k < shape.size(); ++k) t.values.push_back(static_cast<float>(rng.normal(mean, sd)));
    ds.samples.push_back(std::move(t));
    ds.labels.push_back(0);
    ds.attack_success.push_back(true);
  }
  return ds;
}

std::vector<double> normals(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  const Shape shape{4, 2, 2};
  const auto naturals = gaussian(shape, 200, 11, 0.0, 1.0);
  const auto profile = fit_profile(naturals);
  const auto base = oracle::fit(raw(naturals), 4, 4);
  FeatureToggles toggles;
  toggles.stat_tests = false;
  const AfvExtractor ex(profile, toggles);
  Rng rng(12);
  double worst = 0.0;
  std::size_t compared = 0;
  for (int i = 0; i < 100; ++i) {
    LatentTensor t;
    t.shape = shape;
    const double mean = rng.uniform(-1.5, 1.5), sd = rng.uniform(0.3, 2.5);
    for (std::size_t k = 0; k < shape.size(); ++k) t.values.push_back(static_cast<float>(rng.normal(mean, sd)));
    const auto got = ex.extract(t).values;
    const auto want = oracle::features(t.values, base);
    if (got.size() != want.size()) return {false, "feature count mismatch"};
    for (std::size_t j = 0; j < got.size(); ++j) worst = std::max(worst, std::fabs(got[j] - want[j]));
    compared += got.size();
  }
  const double secs = seconds_since(t0);
  return {worst <= kFeatureTol && secs < kOracleSeconds,
          std::to_string(compared) + " values, max abs diff " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome emd_equivalence() {
  Rng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(23);
    std::vector<double> p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform() < 0.25 ? 0.0 : std::floor(rng.uniform(0, 50));
      q[i] = rng.uniform() < 0.25 ? 0.0 : rng.uniform(0, 50);
    }
    const double width = 6.0 / 23.0;
    worst = std::max(worst, std::fabs(emd_1d(p, q, width) - oracle::sorted_transport(p, q, width)));
  }
  return {worst <= kEmdTol, "200 slice pairs, max abs diff " + fmt("%.3g", worst)};
}

Outcome statistical_tests() {
  std::vector<std::string> problems;
  // Identical samples.
  Rng rng(31);
  const auto a = normals(300, rng);
  const auto ks = ks_two_sample(a, a);
  const auto t = t_test_welch(a, a);
  const auto bt = bartlett(a, a);
  if (!(ks.statistic == 0.0 && ks.p_value == 1.0)) problems.push_back("ks identical");
  if (!(t.statistic == 0.0 && t.p_value == 1.0)) problems.push_back("welch identical");
  if (!(bt.statistic == 0.0 && bt.p_value == 1.0)) problems.push_back("bartlett identical");

  // Frozen high-precision references.
  const auto fx = nlohmann::json::parse(slurp(fs::path(AFV_FIXTURE_DIR) / "stat_fixtures.json"));
  std::size_t cases = 0;
  for (const auto& c : fx["cases"]) {
    const std::string name = c["test"];
    const auto x = c["a"].get<std::vector<double>>();
    const auto y = c["b"].get<std::vector<double>>();
    TestResult r;
    if (name == "ks_normal") r = ks_one_sample_normal(x);
    else if (name == "ks_two_sample") r = ks_two_sample(x, y);
    else if (name == "mann_whitney") r = mann_whitney_u(x, y);
    else if (name == "welch") r = t_test_welch(x, y);
    else r = bartlett(x, y);
    const double stat = c["statistic"], p = c["p"];
    if (std::fabs(r.statistic - stat) > kFixtureStatTol * std::max(1.0, std::fabs(stat)) ||
        std::fabs(r.p_value - p) > kFixturePTol)
      problems.push_back("fixture " + name);
    ++cases;
  }

  // Null uniformity at the feature subsample size.
  const char* names[5] = {"ks_normal", "mann_whitney", "welch", "ks_two_sample", "bartlett"};
  std::array<std::array<int, 10>, 5> deciles{};
  Rng null_rng(32);
  for (int trial = 0; trial < kNullTrials; ++trial) {
    const auto x = normals(1000, null_rng), y = normals(1000, null_rng);
    const double ps[5] = {ks_one_sample_normal(x).p_value, mann_whitney_u(x, y).p_value,
                          t_test_welch(x, y).p_value, ks_two_sample(x, y).p_value, bartlett(x, y).p_value};
    for (int k = 0; k < 5; ++k) ++deciles[k][std::min(9, static_cast<int>(ps[k] * 10))];
  }
  int lo = kNullTrials, hi = 0;
  for (int k = 0; k < 5; ++k)
    for (int d = 0; d < 10; ++d) {
      lo = std::min(lo, deciles[k][d]);
      hi = std::max(hi, deciles[k][d]);
      if (deciles[k][d] < kDecileLo || deciles[k][d] > kDecileHi)
        problems.push_back(std::string("decile ") + names[k] + "[" + std::to_string(d) +
                           "]=" + std::to_string(deciles[k][d]));
    }
  std::string detail = std::to_string(cases) + " fixtures, decile counts in [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Outcome gradient_check() {
  double worst = 0.0;
  std::size_t skipped = 0;
  for (std::uint64_t seed : {1u, 2u}) {
    const auto model = init_model(132, 5, seed);
    Rng rng(seed + 100);
    Matrix x(16, 132);
    for (auto& v : x.data()) v = rng.normal();
    std::vector<int> y;
    for (std::size_t i = 0; i < 16; ++i) y.push_back(static_cast<int>(rng.below(5)));
    const auto r = grad_check_report(model, x, y, kGradParams, seed);
    worst = std::max(worst, r.max_rel_error);
    skipped += r.skipped_at_kinks;
  }
  return {worst < kGradTol, std::to_string(kGradParams) + " parameters x 2 seeds, max rel err " + fmt("%.3g", worst) +
                                ", " + std::to_string(skipped) + " kink-straddling draws replaced"};
}

// ---------------------------------------------------------------------------
// Pipeline runs shared by the later criteria.

struct PipelineRun {
  fs::path dir;
  AfvTable table;
  SecondStageModel model;
  std::vector<int> truth, pred;  // Test rows
  RunMetrics metrics;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const fs::path& dir, std::size_t per_class, std::uint64_t seed, std::size_t reference_n) {
  const auto t0 = Clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  SynthOptions s;
  s.spec = standard_benchmark({16, 4, 4}, per_class, seed);
  s.out = dir / "data.afvl";
  s.reference_out = dir / "reference.afvl";
  s.reference_n = reference_n;
  run_synth(s);

  ProfileOptions p;
  p.dump = dir / "reference.afvl";
  p.out = dir / "profile.txt";
  run_profile(p);

  ExtractOptions e;
  e.dump = dir / "data.afvl";
  e.profile = dir / "profile.txt";
  e.out = dir / "table.csv";
  e.normalize = true;
  e.seed = seed;
  run_extract(e);

  TrainOptions t;
  t.table = dir / "table.csv";
  t.out = dir / "model.afvm";
  t.train.batch_size = 64;
  t.train.learning_rate = 1e-3;
  t.train.num_epochs = 20;
  t.train.seed = seed;
  run_train(t);

  EvalOptions ev;
  ev.table = dir / "table.csv";
  ev.checkpoint = dir / "model.afvm";
  ev.out_dir = dir / "eval";
  const auto result = run_eval(ev);

  PipelineRun run;
  run.dir = dir;
  run.seconds = seconds_since(t0);
  run.table = read_afv_table(dir / "table.csv");
  run.model = load_checkpoint(dir / "model.afvm");
  const auto rows = run.table.indices(Split::Test);
  run.truth = label_vector(run.table, rows);
  run.pred = predict_rows(run.model, run.table, rows);
  run.metrics = result.metrics;
  return run;
}

Outcome end_to_end(const PipelineRun& run) {
  // SpatialShuffle is label 4 in the benchmark; it is reported but not scored.
  constexpr int kShuffle = 4;
  std::size_t correct = 0, scored = 0;
  for (std::size_t i = 0; i < run.truth.size(); ++i) {
    if (run.truth[i] == kShuffle) continue;
    ++scored;
    correct += detect(run.truth[i]) == detect(run.pred[i]);
  }
  const double detection = static_cast<double>(correct) / static_cast<double>(scored);
  double f1 = 0.0;
  for (const auto& c : run.metrics.per_class)
    if (c.label >= 1 && c.label <= 3) f1 += c.f1 / 3.0;
  double shuffle_recall = 0.0;
  for (const auto& c : run.metrics.per_class)
    if (c.label == kShuffle) shuffle_recall = c.recall;
  const bool pass = detection >= kDetectionTarget && f1 >= kMacroF1Target && run.seconds < kEndToEndSeconds;
  std::ostringstream d;
  d << "detection (clean + 3 families) " << fmt("%.4f", detection) << ", macro-F1 (3 families) " << fmt("%.4f", f1)
    << ", overall detection " << fmt("%.4f", run.metrics.dtc_accuracy) << ", clean kept "
    << fmt("%.4f", run.metrics.detection.clean_accuracy) << ", attack TPR " << fmt("%.4f", run.metrics.detection.tpr)
    << ", shuffle recall " << fmt("%.4f", shuffle_recall) << ", " << fmt("%.1f", run.seconds) << " s";
  return {pass, d.str()};
}

Outcome clustering() {
  Rng rng(41);
  int agree = 0;
  for (int trial = 0; trial < kClusterTrials; ++trial) {
    ConfusionMatrix cm(12);
    std::vector<std::vector<std::uint64_t>> counts(12, std::vector<std::uint64_t>(12));
    for (std::size_t t = 0; t < 12; ++t)
      for (std::size_t p = 0; p < 12; ++p) {
        counts[t][p] = t == p ? 50 + rng.below(150) : (rng.uniform() < 0.1 ? rng.below(100) : rng.below(5));
        cm.at(t, p) = counts[t][p];
      }
    const double threshold = 0.2;
    agree += build_cluster_map(cm, threshold).parent == oracle::bfs_components(counts, threshold);
  }
  // Attack-class table: {2,3,5,6,8,10} share cluster 2, the rest stay alone.
  const std::set<int> group{2, 3, 5, 6, 8, 10};
  ConfusionMatrix table(12);
  for (int t = 0; t < 12; ++t)
    for (int p = 0; p < 12; ++p)
      table.at(t, p) = t == p ? 100 : (group.contains(t) && group.contains(p) ? 40 : 1);
  const auto map = build_cluster_map(table, 0.2);
  bool table_ok = map.attack_cluster_count() == 6;
  for (int l = 0; l < 12; ++l) table_ok = table_ok && map(l) == (group.contains(l) ? 2 : l);
  return {agree == kClusterTrials && table_ok,
          std::to_string(agree) + "/" + std::to_string(kClusterTrials) + " random matrices match BFS, table grouping " +
              (table_ok ? "reproduced" : "NOT reproduced")};
}

Outcome augmentation(const PipelineRun& run) {
  // Test rows are re-tagged Train so the augmenter perturbs them.
  AfvTable test = run.table.subset(Split::Test);
  for (auto& s : test.split) s = Split::Train;
  const std::size_t n = test.size();
  std::vector<std::size_t> originals(n), copies(n);
  for (std::size_t i = 0; i < n; ++i) {
    originals[i] = i;
    copies[i] = n + i;
  }
  std::string detail;
  bool pass = true;

  const auto zero = augment_epsilon_ball(test, {0.0, 1, 5});
  bool identical = zero.size() == 2 * n;
  for (std::size_t i = 0; identical && i < n; ++i) identical = zero.rows[n + i].values == test.rows[i].values;
  pass = pass && identical;
  detail += std::string("eps=0 ") + (identical ? "bit-exact" : "NOT identical");

  for (double eps : {1e-6, 1e-8, 1e-10, 1e-12, 1e-15}) {
    const auto aug = augment_epsilon_ball(test, {eps, 1, 6});
    const auto before = predict_rows(run.model, aug, originals);
    const auto after = predict_rows(run.model, aug, copies);
    std::size_t same = 0;
    for (std::size_t i = 0; i < n; ++i) same += before[i] == after[i];
    const double agreement = static_cast<double>(same) / static_cast<double>(n);
    pass = pass && agreement >= kAgreementTarget;
    detail += ", eps=" + fmt("%.0e", eps) + " " + fmt("%.4f", agreement);
  }
  return {pass, detail};
}

Outcome determinism(const fs::path& work) {
  const auto a = run_pipeline(work / "det_a", 150, 99, 300);
  const auto b = run_pipeline(work / "det_b", 150, 99, 300);
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::recursive_directory_iterator(a.dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.dir);
    const auto name = rel.filename().string();
    // Reproducibility records name their own output paths.
    if (name.ends_with(".record.json") || name == "run_record.json") continue;
    ++files;
    if (!fs::exists(b.dir / rel) || slurp(entry.path()) != slurp(b.dir / rel)) differing.push_back(rel.string());
  }
  std::string detail = std::to_string(files) + " files compared (dumps, tables, checkpoints, reports)";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty() && files >= 10, detail};
}

Outcome monotonicity(const std::vector<const PipelineRun*>& runs) {
  std::size_t evaluated = 0, violations = 0;
  for (const auto* run : runs) {
    const std::size_t k = run->model.num_classes();
    const auto base = evaluate_run(run->truth, run->pred, k);
    ++evaluated;
    if (base.dtc_accuracy < base.clf_accuracy) ++violations;
    for (double t : {0.05, 0.1, 0.2, 0.25}) {
      const auto map = build_cluster_map(base.confusion, t);
      const auto clustered = evaluate_run(relabel(run->truth, map), relabel(run->pred, map), k);
      ++evaluated;
      if (clustered.clf_accuracy < base.clf_accuracy) ++violations;
      if (clustered.dtc_accuracy < clustered.clf_accuracy) ++violations;
    }
  }
  // Random label pairs exercise the rule beyond trained models.
  Rng rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> truth, pred;
    for (int i = 0; i < 300; ++i) {
      truth.push_back(static_cast<int>(rng.below(6)));
      pred.push_back(rng.uniform() < 0.5 ? truth.back() : static_cast<int>(rng.below(6)));
    }
    const auto m = evaluate_run(truth, pred, 6);
    const auto map = build_cluster_map(m.confusion, 0.1 + 0.2 * rng.uniform());
    const auto c = evaluate_run(relabel(truth, map), relabel(pred, map), 6);
    evaluated += 2;
    violations += (m.dtc_accuracy < m.clf_accuracy) + (c.clf_accuracy < m.clf_accuracy);
  }
  return {violations == 0,
          std::to_string(evaluated) + " evaluations, " + std::to_string(violations) + " violations"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "afv_acceptance";
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };

  report("oracle_equivalence", oracle_equivalence);
  report("wasserstein_transport", emd_equivalence);
  report("statistical_tests", statistical_tests);
  report("mlp_gradient_check", gradient_check);

  std::optional<PipelineRun> full;
  report("synthetic_end_to_end", [&] {
    full = run_pipeline(work / "end_to_end", kPerClass, 7, 1000);
    return end_to_end(*full);
  });
  report("cluster_closure", clustering);
  report("augmentation_fidelity", [&] {
    if (!full) return Outcome{false, "end-to-end run unavailable"};
    return augmentation(*full);
  });
  std::optional<PipelineRun> small;
  report("determinism", [&] { return determinism(work); });
  report("binarization_and_merging", [&] {
    small = run_pipeline(work / "mono", 150, 5, 300);
    std::vector<const PipelineRun*> runs{&*small};
    if (full) runs.push_back(&*full);
    return monotonicity(runs);
  });

  std::printf("%d criterion failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
