#include "afv/dataset_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "afv/error.hpp"
#include "afv/random.hpp"
#include "afv/text_format.hpp"

namespace afv {

void Normalizer::apply_in_place(std::span<double> row) const {
  require(row.size() == min.size(), "normalizer dimension mismatch");
  for (std::size_t j = 0; j < row.size(); ++j)
    row[j] = (row[j] - min[j]) / std::max(max[j] - min[j], 1e-12);
}

std::vector<double> Normalizer::apply(std::span<const double> row) const {
  std::vector<double> out(row.begin(), row.end());
  apply_in_place(out);
  return out;
}

Normalizer fit_range_normalizer(const std::vector<std::vector<double>>& rows) {
  require(!rows.empty(), "empty training set");
  Normalizer n;
  n.min = rows.front();
  n.max = rows.front();
  for (const auto& r : rows) {
    require(r.size() == n.min.size(), "normalizer dimension mismatch");
    for (std::size_t j = 0; j < r.size(); ++j) {
      n.min[j] = std::min(n.min[j], r[j]);
      n.max[j] = std::max(n.max[j], r[j]);
    }
  }
  return n;
}

Normalizer fit_range_normalizer(const AfvTable& table) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i : table.indices(Split::Train)) rows.push_back(table.rows[i].values);
  return fit_range_normalizer(rows);
}

AfvTable apply_normalizer(const AfvTable& table, const Normalizer& normalizer) {
  AfvTable out = table;
  for (auto& r : out.rows) normalizer.apply_in_place(r.values);
  return out;
}

void save_normalizer(const Normalizer& normalizer, const std::filesystem::path& path) {
  KvWriter w("afv-normalizer", 1);
  w.put_array("min", normalizer.min);
  w.put_array("max", normalizer.max);
  w.save(path);
}

Normalizer load_normalizer(const std::filesystem::path& path) {
  const auto r = KvReader::load(path, "afv-normalizer", 1);
  Normalizer n{r.get_array("min"), r.get_array("max")};
  if (n.min.size() != n.max.size()) throw FormatError("normalizer: min/max length mismatch");
  return n;
}

std::vector<double> population_stddev(const AfvTable& table) {
  const std::size_t d = table.dim();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  const double n = static_cast<double>(table.size());
  require(n > 0, "empty table");
  for (const auto& r : table.rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r.values[j];
  for (auto& m : mean) m /= n;
  for (const auto& r : table.rows)
    for (std::size_t j = 0; j < d; ++j) var[j] += (r.values[j] - mean[j]) * (r.values[j] - mean[j]);
  for (auto& v : var) v = std::sqrt(v / n);
  return var;
}

AfvTable augment_epsilon_ball(const AfvTable& table, const AugmentConfig& config) {
  require(config.epsilon >= 0.0, "augmentation epsilon must be non-negative");
  require(config.copies >= 0, "augmentation copies must be non-negative");
  require(config.extra_noise >= 0.0, "augmentation noise must be non-negative");
  AfvTable out = table;
  if (config.copies == 0) return out;
  const auto sigma = population_stddev(table);
  const auto train = table.indices(Split::Train);
  Rng rng(config.seed);
  for (int copy = 0; copy < config.copies; ++copy) {
    for (std::size_t i : train) {
      Afv row = table.rows[i];
      for (std::size_t j = 0; j < row.values.size(); ++j) {
        const double rho = rng.uniform(-1.0, 1.0);
        double delta = sigma[j] * rho * config.epsilon;
        if (config.extra_noise > 0.0) delta += rng.uniform(-config.extra_noise, config.extra_noise);
        row.values[j] += delta;
      }
      out.rows.push_back(std::move(row));
      out.split.push_back(Split::Train);
    }
  }
  return out;
}

AfvTable split(const AfvTable& table, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "train fraction must lie in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < table.size(); ++i) by_class[table.rows[i].label].push_back(i);
  AfvTable out = table;
  Rng rng(seed);
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      throw ValidationError("class " + std::to_string(label) + " has fewer than 2 rows");
    rng.shuffle(std::span<std::size_t>(idx));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k) out.split[idx[k]] = k < n_train ? Split::Train : Split::Test;
  }
  return out;
}

AfvTable merge_strains(const AfvTable& table, const std::map<int, int>& strain_to_parent) {
  AfvTable out = table;
  for (const auto& [strain, parent] : strain_to_parent) {
    const bool parent_known =
        table.class_names.contains(parent) ||
        std::any_of(table.rows.begin(), table.rows.end(), [&](const Afv& r) { return r.label == parent; });
    if (!parent_known || strain_to_parent.contains(parent))
      throw ValidationError("dangling parent label " + std::to_string(parent));
  }
  for (auto& r : out.rows)
    if (auto it = strain_to_parent.find(r.label); it != strain_to_parent.end()) r.label = it->second;
  for (const auto& [strain, parent] : strain_to_parent) out.class_names.erase(strain);
  return out;
}

FailedAttackPolicy parse_failed_policy(const std::string& name) {
  if (name == "drop") return FailedAttackPolicy::Drop;
  if (name == "keep") return FailedAttackPolicy::Keep;
  if (name == "centroid") return FailedAttackPolicy::NearestCentroid;
  throw ValidationError("unknown failed-attack policy '" + name + "'");
}

const char* failed_policy_name(FailedAttackPolicy policy) {
  switch (policy) {
    case FailedAttackPolicy::Drop: return "drop";
    case FailedAttackPolicy::Keep: return "keep";
    case FailedAttackPolicy::NearestCentroid: return "centroid";
  }
  return "?";
}

AfvTable apply_failed_attack_policy(const AfvTable& table, FailedAttackPolicy policy) {
  auto failed = [](const Afv& r) { return r.label != 0 && !r.attack_success; };
  switch (policy) {
    case FailedAttackPolicy::Keep:
      return table;
    case FailedAttackPolicy::Drop: {
      AfvTable out;
      out.layout = table.layout;
      out.class_names = table.class_names;
      for (std::size_t i = 0; i < table.size(); ++i) {
        if (failed(table.rows[i])) continue;
        out.rows.push_back(table.rows[i]);
        out.split.push_back(table.split[i]);
      }
      return out;
    }
    case FailedAttackPolicy::NearestCentroid: {
      const std::size_t d = table.dim();
      // Centroids: clean rows, and successful rows per attack label.
      std::map<int, std::pair<std::vector<double>, std::size_t>> centroid;
      for (const auto& r : table.rows) {
        if (failed(r)) continue;
        auto& [sum, n] = centroid[r.label];
        if (sum.empty()) sum.assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) sum[j] += r.values[j];
        ++n;
      }
      for (auto& [label, c] : centroid)
        for (auto& x : c.first) x /= static_cast<double>(c.second);
      auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        return s;
      };
      require(centroid.contains(0), "nearest-centroid policy needs clean rows");
      AfvTable out = table;
      for (auto& r : out.rows) {
        if (!failed(r)) continue;
        const double to_clean = dist2(r.values, centroid.at(0).first);
        auto it = centroid.find(r.label);
        // With no successful rows for this attack, clean is the only centroid.
        if (it == centroid.end() || to_clean <= dist2(r.values, it->second.first)) r.label = 0;
      }
      return out;
    }
  }
  throw ValidationError("unknown failed-attack policy");
}

}  // namespace afv
