#pragma once

// Evaluation metrics (classification and CLEAN-bit detection), grid
// aggregation, and CSV/SVG report emission.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "afv/cluster_merge.hpp"

namespace afv {

struct ClassMetrics {
  int label = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct DetectionMetrics {
  double accuracy = 0.0;         // over all rows
  double clean_accuracy = 0.0;   // clean rows flagged CLEAN
  double attack_accuracy = 0.0;  // attack rows flagged ATTACK (= TPR)
  double tpr = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

struct RunMetrics {
  std::string name;
  double clf_accuracy = 0.0;
  double dtc_accuracy = 0.0;
  double c0_f1 = 0.0;
  double avg_f1 = 0.0;        // macro over attack classes (label > 0) present in the data
  double avg_f1_all = 0.0;    // macro over every class present
  std::vector<ClassMetrics> per_class;
  DetectionMetrics detection;
  ConfusionMatrix confusion;
  std::size_t n = 0;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t k);

// Fills the classification fields of RunMetrics from a confusion matrix.
RunMetrics classification_metrics(const ConfusionMatrix& cm);

DetectionMetrics detection_metrics(std::span<const int> truth, std::span<const int> pred);

// Both of the above, plus the confusion matrix.
RunMetrics evaluate_run(std::span<const int> truth, std::span<const int> pred, std::size_t k,
                        std::string name = {});

struct AggregateMetrics {
  double clf_mu = 0.0, clf_mx = 0.0;
  double dtc_mu = 0.0, dtc_mx = 0.0;
  double c0_f1_mu = 0.0, avg_f1_mu = 0.0;
  std::size_t n = 0;
};

AggregateMetrics aggregate_runs(std::span<const RunMetrics> runs);

// Files written: confusion_<i>.csv, confusion_<i>.svg, per_class_<i>.csv for
// each run, plus roc.csv and roc.svg with one point per run. Returns paths.
std::vector<std::filesystem::path> emit_report(std::span<const RunMetrics> runs,
                                               const std::filesystem::path& out_dir);

std::string render_per_class_csv(const RunMetrics& m);
std::string render_roc_csv(std::span<const RunMetrics> runs);
std::string render_confusion_svg(const ConfusionMatrix& cm);
std::string render_roc_svg(std::span<const RunMetrics> runs);

std::string render_metrics_json(const RunMetrics& m);
RunMetrics parse_metrics_json(const std::string& text);

}  // namespace afv
