#pragma once

// Merges confounded attack classes: an edge joins attack classes i and j when
// either pairwise confusion rate from their 2x2 sub-matrix exceeds t, and
// each connected component is relabeled to its lowest label. The clean class
// (0) is never merged.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "afv/afv_table.hpp"

namespace afv {

struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;  // row-major, rows = true, cols = predicted
  std::map<int, std::string> class_names;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : k(classes), counts(classes * classes, 0) {}

  std::uint64_t& at(std::size_t t, std::size_t p) { return counts[t * k + p]; }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts[t * k + p]; }
  std::uint64_t row_total(std::size_t t) const;
  std::uint64_t col_total(std::size_t p) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

struct PairRates {
  double fnr = 0.0;  // true i predicted j, within the {i,j} restriction of row i
  double fpr = 0.0;  // true j predicted i, within the {i,j} restriction of row j
};

PairRates pairwise_rates(const ConfusionMatrix& cm, std::size_t i, std::size_t j);

struct ClusterMap {
  std::vector<int> parent;  // indexed by label

  int operator()(int label) const;
  std::size_t cluster_count() const;         // including the clean cluster
  std::size_t attack_cluster_count() const;  // clusters of labels > 0
  bool covers(int label) const { return label >= 0 && static_cast<std::size_t>(label) < parent.size(); }
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n);
  std::size_t find(std::size_t x);
  // Keeps the smaller root as the representative.
  void unite(std::size_t a, std::size_t b);

 private:
  std::vector<std::size_t> parent_;
};

// Edges in deterministic order (i < j, FNR checked before FPR).
std::vector<std::pair<std::size_t, std::size_t>> confusion_edges(const ConfusionMatrix& cm, double threshold);

ClusterMap build_cluster_map(const ConfusionMatrix& cm, double threshold = 0.2);

AfvTable relabel(const AfvTable& table, const ClusterMap& map);
std::vector<int> relabel(const std::vector<int>& labels, const ClusterMap& map);

void write_cluster_map(const ClusterMap& map, const std::filesystem::path& path);
ClusterMap read_cluster_map(const std::filesystem::path& path);

// CSV: header "true\pred,0,1,...,K-1" then one row per true label.
std::string render_confusion_csv(const ConfusionMatrix& cm);
ConfusionMatrix parse_confusion_csv(const std::string& text);

}  // namespace afv
