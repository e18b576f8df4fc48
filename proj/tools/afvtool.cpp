// afvtool: command-line front end for the AFV pipeline.
//
// Exit codes: 0 ok, 1 validation or usage error, 2 I/O error. Errors are
// printed as one line: "afvtool: error: <message>".

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "afv/error.hpp"
#include "afv/pipeline.hpp"
#include "afv/text_format.hpp"

namespace {

using namespace afv;

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::map<int, int> parse_strains(const std::vector<std::string>& items) {
  std::map<int, int> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    require(eq != std::string::npos, "strain must look like STRAIN=PARENT, got '" + item + "'");
    out[static_cast<int>(parse_int(item.substr(0, eq)))] = static_cast<int>(parse_int(item.substr(eq + 1)));
  }
  return out;
}

// Train flags shared by train, cluster --retrain, and grid.
struct TrainFlags {
  std::size_t batch_size = 2500;
  double lr = 1.0;
  bool sgd = false;
  double momentum = 0.0;
  int epochs = 20;
  std::uint64_t seed = 0;
  double augment_eps = 0.0;
  int augment_copies = 1;
  std::string failed_policy = "keep";
  std::vector<std::string> strains;
  std::vector<std::size_t> hidden{256, 128};
  double dropout = 0.3;

  void add(CLI::App* cmd, bool sweep) {
    if (!sweep) {
      cmd->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
      cmd->add_option("--lr", lr, "Learning rate")->capture_default_str();
      cmd->add_option("--seed", seed, "Initialization, shuffling, and dropout seed")->capture_default_str();
      cmd->add_option("--augment-eps", augment_eps, "Epsilon-ball augmentation scale (0 = off)")
          ->capture_default_str();
    }
    cmd->add_flag("--sgd", sgd, "Use SGD instead of Adam");
    cmd->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
    cmd->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--augment-copies", augment_copies, "Augmented copies per Train row")->capture_default_str();
    cmd->add_option("--failed-policy", failed_policy, "Failed-attack handling")
        ->check(CLI::IsMember({"drop", "keep", "centroid"}))
        ->capture_default_str();
    cmd->add_option("--strain", strains, "Fold a weakened strain into its parent: STRAIN=PARENT");
    cmd->add_option("--hidden", hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
    cmd->add_option("--dropout", dropout, "Dropout rate")->capture_default_str();
  }

  TrainOptions to_options() const {
    TrainOptions o;
    o.train.batch_size = batch_size;
    o.train.learning_rate = lr;
    o.train.sgd_mode = sgd;
    o.train.momentum = momentum;
    o.train.num_epochs = epochs;
    o.train.seed = seed;
    o.arch.hidden = hidden;
    o.arch.dropout_rate = dropout;
    o.augment_eps = augment_eps;
    o.augment_copies = augment_copies;
    o.failed_policy = parse_failed_policy(failed_policy);
    o.strains = parse_strains(strains);
    return o;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Anomaly feature vector pipeline: synthetic latents, baseline profiles, feature "
               "extraction, second-stage training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  // synth
  SynthOptions synth;
  std::vector<std::uint32_t> shape{16, 4, 4};
  std::vector<std::string> families;
  std::string reference_out;
  bool standard = false;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled latent dump");
  c_synth->add_option("-o,--out", synth.out, "Output dump path")->required();
  c_synth->add_option("--shape", shape, "C,H,W")->delimiter(',')->expected(3)->capture_default_str();
  c_synth->add_option("--n-per-class", synth.spec.n_per_class, "Samples per class")->capture_default_str();
  c_synth->add_option("--family", families,
                      "Attack family, e.g. mean_shift:0.5, var_inflate:0.5, tail_inject:5:3, spatial_shuffle");
  c_synth->add_flag("--standard", standard, "Use the four-family benchmark set");
  c_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
  c_synth->add_option("--failed-fraction", synth.spec.failed_fraction, "Fraction of failed attack rows")
      ->capture_default_str();
  c_synth->add_option("--failed-scale", synth.spec.failed_strength_scale,
                      "Perturbation scale applied to failed rows")
      ->capture_default_str();
  c_synth->add_option("--reference-out", reference_out, "Also write a clean reference dump here");
  c_synth->add_option("--reference-n", synth.reference_n, "Reference dump size")->capture_default_str();

  // profile
  ProfileOptions profile;
  std::string fit_mode = "equal";
  auto* c_profile = app.add_subcommand("profile", "Fit a baseline profile from a clean dump");
  c_profile->add_option("dump", profile.dump, "Clean latent dump")->required();
  c_profile->add_option("-o,--out", profile.out, "Output profile path")->required();
  c_profile->add_option("--mode", fit_mode, "Channel statistics: equal or exponential")
      ->check(CLI::IsMember({"equal", "exponential"}))
      ->capture_default_str();
  c_profile->add_option("--alpha", profile.config.alpha, "Exponential smoothing factor")->capture_default_str();
  c_profile->add_option("--fit-batch", profile.config.batch_size, "Batch size for exponential mode")
      ->capture_default_str();
  c_profile->add_option("--lo-pct", profile.config.lo_pct, "Lower extrema percentile")->capture_default_str();
  c_profile->add_option("--hi-pct", profile.config.hi_pct, "Upper extrema percentile")->capture_default_str();

  // extract
  ExtractOptions extract;
  bool no_hist = false, no_tests = false, no_wass = false;
  auto* c_extract = app.add_subcommand("extract", "Extract an AFV table from a dump");
  c_extract->add_option("dump", extract.dump, "Latent dump")->required();
  c_extract->add_option("-p,--profile", extract.profile, "Baseline profile")->required();
  c_extract->add_option("-o,--out", extract.out, "Output AFV table (CSV)")->required();
  c_extract->add_flag("--pca", extract.toggles.pca, "Append 2-d PCA coordinates");
  c_extract->add_flag("--lda", extract.toggles.lda, "Append 2-d LDA coordinates");
  c_extract->add_flag("--rnn", extract.toggles.rnn_votes, "Append radius-neighbor class votes");
  c_extract->add_flag("--no-hist", no_hist, "Drop histogram features");
  c_extract->add_flag("--no-tests", no_tests, "Drop A/B test p-values");
  c_extract->add_flag("--no-wasserstein", no_wass, "Drop Wasserstein features");
  c_extract->add_flag("--normalize", extract.normalize, "Range-normalize with Train-row min/max");
  c_extract->add_option("--train-fraction", extract.train_fraction, "Stratified Train share")
      ->capture_default_str();
  c_extract->add_option("--rnn-radius", extract.embedding.rnn_radius, "Neighbor radius")->capture_default_str();
  c_extract->add_option("--rnn-max-rows", extract.embedding.rnn_max_rows, "Neighbor reference cap")
      ->capture_default_str();
  c_extract->add_option("--seed", extract.seed, "Split and subsample seed")->capture_default_str();

  // train
  TrainFlags train_flags;
  std::string train_table, train_out;
  auto* c_train = app.add_subcommand("train", "Train the second-stage classifier");
  c_train->add_option("table", train_table, "AFV table")->required();
  c_train->add_option("-o,--out", train_out, "Output checkpoint")->required();
  train_flags.add(c_train, false);

  // eval
  EvalOptions eval;
  std::vector<std::string> eval_strains;
  std::string eval_map;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the Test rows of a table");
  c_eval->add_option("table", eval.table, "AFV table")->required();
  c_eval->add_option("-m,--model", eval.checkpoint, "Checkpoint")->required();
  c_eval->add_option("-o,--out", eval.out_dir, "Output directory")->required();
  c_eval->add_option("--cluster-map", eval_map, "Also report clustered-mode metrics");
  c_eval->add_option("--strain", eval_strains, "Fold a weakened strain into its parent: STRAIN=PARENT");

  // cluster
  ClusterOptions cluster;
  TrainFlags retrain_flags;
  std::string retrain_table, retrain_out, retrain_eval;
  auto* c_cluster = app.add_subcommand("cluster", "Merge confounded attack classes from a confusion matrix");
  c_cluster->add_option("confusion", cluster.confusion, "Confusion CSV")->required();
  c_cluster->add_option("-o,--out", cluster.out, "Output cluster map")->required();
  c_cluster->add_option("--threshold", cluster.threshold, "Confusion rate threshold")->capture_default_str();
  c_cluster->add_option("--retrain-table", retrain_table, "Re-train on relabeled rows of this table");
  c_cluster->add_option("--retrain-out", retrain_out, "Checkpoint for the re-trained model");
  c_cluster->add_option("--retrain-eval", retrain_eval, "Evaluate the re-trained model into this directory");
  retrain_flags.add(c_cluster, false);

  // grid
  GridOptions grid;
  TrainFlags grid_flags;
  auto* c_grid = app.add_subcommand("grid", "Sweep training flags and aggregate MuAcc/MxAcc");
  c_grid->add_option("table", grid.table, "AFV table")->required();
  c_grid->add_option("-o,--out", grid.out_dir, "Output directory")->required();
  c_grid->add_option("--lr", grid.learning_rates, "Learning rates")->delimiter(',')->capture_default_str();
  c_grid->add_option("--augment-eps", grid.augment_eps, "Augmentation scales")->delimiter(',')
      ->capture_default_str();
  c_grid->add_option("--batch-size", grid.batch_sizes, "Batch sizes")->delimiter(',')->capture_default_str();
  c_grid->add_option("--seeds", grid.seeds, "Repeat seeds")->delimiter(',')->capture_default_str();
  grid_flags.add(c_grid, true);

  // report
  ReportOptions report;
  auto* c_report = app.add_subcommand("report", "Render CSV tables and SVG plots from metrics files");
  c_report->add_option("metrics", report.metrics, "metrics.json files")->required();
  c_report->add_option("-o,--out", report.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "afvtool: error: " << one_line(e.what()) << "\n";
    return 1;
  }

  if (*c_synth) {
    require(shape.size() == 3, "--shape needs C,H,W");
    synth.spec.shape = {shape[0], shape[1], shape[2]};
    if (standard) {
      const auto base = standard_benchmark(synth.spec.shape, synth.spec.n_per_class, synth.spec.seed);
      synth.spec.families = base.families;
    }
    for (const auto& f : families) synth.spec.families.push_back(parse_family(f));
    if (!reference_out.empty()) synth.reference_out = reference_out;
    run_synth(synth);
  } else if (*c_profile) {
    profile.config.mode = fit_mode == "equal" ? FitMode::EqualWeight : FitMode::Exponential;
    run_profile(profile);
  } else if (*c_extract) {
    extract.toggles.histograms = !no_hist;
    extract.toggles.stat_tests = !no_tests;
    extract.toggles.wasserstein = !no_wass;
    run_extract(extract);
  } else if (*c_train) {
    TrainOptions o = train_flags.to_options();
    o.table = train_table;
    o.out = train_out;
    run_train(o);
  } else if (*c_eval) {
    if (!eval_map.empty()) eval.cluster_map = eval_map;
    eval.strains = parse_strains(eval_strains);
    const EvalResult r = run_eval(eval);
    std::cout << "clf_accuracy " << format_double(r.metrics.clf_accuracy) << "\n"
              << "dtc_accuracy " << format_double(r.metrics.dtc_accuracy) << "\n"
              << "avg_f1 " << format_double(r.metrics.avg_f1) << "\n";
    if (r.clustered) std::cout << "clustered_clf_accuracy " << format_double(r.clustered->clf_accuracy) << "\n";
  } else if (*c_cluster) {
    if (!retrain_table.empty()) {
      require(!retrain_out.empty(), "--retrain-table needs --retrain-out");
      TrainOptions o = retrain_flags.to_options();
      o.table = retrain_table;
      o.out = retrain_out;
      cluster.retrain = o;
      if (!retrain_eval.empty()) cluster.retrain_eval_dir = retrain_eval;
    }
    const ClusterMap map = run_cluster(cluster);
    std::cout << "clusters " << map.cluster_count() << " attack_clusters " << map.attack_cluster_count() << "\n";
  } else if (*c_grid) {
    grid.base = grid_flags.to_options();
    const auto rows = run_grid(grid);
    std::cout << render_grid_csv(rows);
  } else if (*c_report) {
    run_report(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const afv::IoError& e) {
    std::cerr << "afvtool: error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const afv::ValidationError& e) {
    std::cerr << "afvtool: error: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "afvtool: error: " << one_line(e.what()) << "\n";
    return 1;
  }
}
