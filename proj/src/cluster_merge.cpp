#include "afv/cluster_merge.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "afv/error.hpp"
#include "afv/text_format.hpp"

namespace afv {

std::uint64_t ConfusionMatrix::row_total(std::size_t t) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k; ++p) s += at(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_total(std::size_t p) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < k; ++t) s += at(t, p);
  return s;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k; ++i) s += at(i, i);
  return s;
}

PairRates pairwise_rates(const ConfusionMatrix& cm, std::size_t i, std::size_t j) {
  require(i != j, "pairwise_rates: i == j");
  require(i > 0 && j > 0 && i < cm.k && j < cm.k, "pairwise_rates: need two attack classes");
  const double row_i = static_cast<double>(cm.at(i, i) + cm.at(i, j));
  const double row_j = static_cast<double>(cm.at(j, j) + cm.at(j, i));
  if (row_i == 0.0 || row_j == 0.0) throw ValidationError("pairwise_rates: empty restricted rows");
  return {static_cast<double>(cm.at(i, j)) / row_i, static_cast<double>(cm.at(j, i)) / row_j};
}

int ClusterMap::operator()(int label) const {
  if (!covers(label)) throw ValidationError("cluster map does not cover label " + std::to_string(label));
  return parent[static_cast<std::size_t>(label)];
}

std::size_t ClusterMap::cluster_count() const {
  return std::set<int>(parent.begin(), parent.end()).size();
}

std::size_t ClusterMap::attack_cluster_count() const {
  std::set<int> s;
  for (std::size_t i = 1; i < parent.size(); ++i) s.insert(parent[i]);
  return s.size();
}

UnionFind::UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

std::size_t UnionFind::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

void UnionFind::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return;
  if (b < a) std::swap(a, b);
  parent_[b] = a;
}

std::vector<std::pair<std::size_t, std::size_t>> confusion_edges(const ConfusionMatrix& cm, double t) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 1; i < cm.k; ++i)
    for (std::size_t j = i + 1; j < cm.k; ++j) {
      const double row_i = static_cast<double>(cm.at(i, i) + cm.at(i, j));
      const double row_j = static_cast<double>(cm.at(j, j) + cm.at(j, i));
      // A class with no rows in the restriction carries no confusion evidence.
      if (row_i == 0.0 || row_j == 0.0) continue;
      const auto r = pairwise_rates(cm, i, j);
      if (r.fnr > t || r.fpr > t) edges.emplace_back(i, j);
    }
  return edges;
}

ClusterMap build_cluster_map(const ConfusionMatrix& cm, double threshold) {
  require(cm.k >= 2, "cluster map needs at least 2 classes");
  require(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0,1)");
  UnionFind uf(cm.k);
  for (const auto& [i, j] : confusion_edges(cm, threshold)) uf.unite(i, j);
  ClusterMap map;
  map.parent.resize(cm.k);
  for (std::size_t i = 0; i < cm.k; ++i) map.parent[i] = static_cast<int>(uf.find(i));
  return map;
}

std::vector<int> relabel(const std::vector<int>& labels, const ClusterMap& map) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int y : labels) out.push_back(map(y));
  return out;
}

AfvTable relabel(const AfvTable& table, const ClusterMap& map) {
  AfvTable out = table;
  for (auto& r : out.rows) {
    if (!map.covers(r.label)) throw ValidationError("uncovered label " + std::to_string(r.label));
    r.label = map(r.label);
  }
  std::map<int, std::string> names;
  for (const auto& [label, name] : table.class_names) {
    if (!map.covers(label)) continue;
    const int p = map(label);
    auto& slot = names[p];
    if (p == label) slot = slot.empty() ? name : name + "+" + slot;
    else slot = slot.empty() ? name : slot + "+" + name;
  }
  out.class_names = std::move(names);
  return out;
}

void write_cluster_map(const ClusterMap& map, const std::filesystem::path& path) {
  std::string out = "label,parent\n";
  for (std::size_t i = 0; i < map.parent.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(map.parent[i]) + "\n";
  write_text_file(path, out);
}

ClusterMap read_cluster_map(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "label,parent") throw FormatError("bad cluster map header");
  ClusterMap map;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad cluster map line: " + line);
    const auto label = parse_int(line.substr(0, comma));
    if (label != static_cast<long long>(map.parent.size())) throw FormatError("cluster map labels out of order");
    map.parent.push_back(static_cast<int>(parse_int(line.substr(comma + 1))));
  }
  for (std::size_t i = 0; i < map.parent.size(); ++i) {
    const int p = map.parent[i];
    if (p < 0 || static_cast<std::size_t>(p) >= map.parent.size() || map.parent[p] != p ||
        p > static_cast<int>(i))
      throw FormatError("cluster map is not a flattened lowest-label partition");
    if (i > 0 && p == 0) throw FormatError("cluster map merges an attack label into clean");
  }
  return map;
}

std::string render_confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\pred";
  for (std::size_t p = 0; p < cm.k; ++p) out += "," + std::to_string(p);
  out += "\n";
  for (std::size_t t = 0; t < cm.k; ++t) {
    out += std::to_string(t);
    for (std::size_t p = 0; p < cm.k; ++p) out += "," + std::to_string(cm.at(t, p));
    out += "\n";
  }
  return out;
}

ConfusionMatrix parse_confusion_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw FormatError("empty confusion matrix");
  const std::size_t k = rows.front().size() - 1;
  if (k < 1 || rows.size() != k + 1) throw FormatError("confusion matrix is not square");
  ConfusionMatrix cm(k);
  for (std::size_t t = 0; t < k; ++t) {
    if (rows[t + 1].size() != k + 1) throw FormatError("confusion matrix row has wrong length");
    for (std::size_t p = 0; p < k; ++p) {
      const auto v = parse_int(rows[t + 1][p + 1]);
      if (v < 0) throw FormatError("negative confusion count");
      cm.at(t, p) = static_cast<std::uint64_t>(v);
    }
  }
  return cm;
}

}  // namespace afv
