#pragma once

// End-to-end stages behind the afvtool subcommands. Every stage writes a
// reproducibility record (flags, seeds, format versions) next to its output;
// re-running with the same record reproduces the outputs byte for byte.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "afv/afv_extract.hpp"
#include "afv/baseline_profile.hpp"
#include "afv/cluster_merge.hpp"
#include "afv/dataset_ops.hpp"
#include "afv/embed_features.hpp"
#include "afv/metrics_report.hpp"
#include "afv/second_stage.hpp"
#include "afv/synth_bench.hpp"

namespace afv {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

struct SynthOptions {
  SynthSpec spec;
  fs::path out;                      // labeled dump
  std::optional<fs::path> reference_out;  // clean reference dump
  std::size_t reference_n = 1000;
};

struct ProfileOptions {
  fs::path dump;
  fs::path out;
  ProfileConfig config;
};

struct ExtractOptions {
  fs::path dump;
  fs::path profile;
  fs::path out;  // AFV table; models go to <out>.normalizer / <out>.embeddings
  FeatureToggles toggles;
  bool normalize = false;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  EmbeddingConfig embedding;
};

struct TrainOptions {
  fs::path table;
  fs::path out;  // checkpoint; loss trace at <out>.loss.csv
  TrainConfig train;
  ArchitectureConfig arch;
  double augment_eps = 0.0;
  int augment_copies = 1;
  FailedAttackPolicy failed_policy = FailedAttackPolicy::Keep;
  std::map<int, int> strains;              // strain label -> parent label
  std::optional<fs::path> cluster_map;     // train on merged labels
};

struct EvalOptions {
  fs::path table;
  fs::path checkpoint;
  fs::path out_dir;
  std::optional<fs::path> cluster_map;
  std::map<int, int> strains;
};

struct ClusterOptions {
  fs::path confusion;
  fs::path out;
  double threshold = 0.2;
  // Optional relabeled re-train and evaluation.
  std::optional<TrainOptions> retrain;
  std::optional<fs::path> retrain_eval_dir;
};

struct GridOptions {
  fs::path table;
  fs::path out_dir;
  std::vector<double> learning_rates{1.0};
  std::vector<double> augment_eps{0.0};
  std::vector<std::size_t> batch_sizes{2500};
  std::vector<std::uint64_t> seeds{0};
  TrainOptions base;  // table/out are overridden per run
};

struct ReportOptions {
  std::vector<fs::path> metrics;  // metrics.json files
  fs::path out_dir;
};

struct EvalResult {
  RunMetrics metrics;
  std::optional<RunMetrics> clustered;
};

struct GridRow {
  double learning_rate = 0.0;
  double augment_eps = 0.0;
  std::size_t batch_size = 0;
  AggregateMetrics aggregate;
};

void run_synth(const SynthOptions& options);
BaselineProfile run_profile(const ProfileOptions& options);
AfvTable run_extract(const ExtractOptions& options);
TrainResult run_train(const TrainOptions& options);
EvalResult run_eval(const EvalOptions& options);
ClusterMap run_cluster(const ClusterOptions& options);
std::vector<GridRow> run_grid(const GridOptions& options);
void run_report(const ReportOptions& options);

// Pieces shared by the stages and the tests.
AfvTable prepare_training_table(const AfvTable& table, const TrainOptions& options);
std::vector<int> predict_rows(const SecondStageModel& model, const AfvTable& table,
                              std::span<const std::size_t> rows);
std::string render_grid_csv(const std::vector<GridRow>& rows);

fs::path record_path(const fs::path& output);

}  // namespace afv
