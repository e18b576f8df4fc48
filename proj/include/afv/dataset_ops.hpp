#pragma once

// AFV-table preparation: range normalization, epsilon-ball augmentation,
// stratified train/test split, weakened-strain merging, failed-attack policy.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "afv/afv_table.hpp"

namespace afv {

struct Normalizer {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t dim() const { return min.size(); }
  // x' = (x - min) / max(max - min, 1e-12); no clamping.
  void apply_in_place(std::span<double> row) const;
  std::vector<double> apply(std::span<const double> row) const;
};

Normalizer fit_range_normalizer(const std::vector<std::vector<double>>& train_rows);
// Fits on the rows tagged Train.
Normalizer fit_range_normalizer(const AfvTable& table);
AfvTable apply_normalizer(const AfvTable& table, const Normalizer& normalizer);

// Text format "afv-normalizer 1" with arrays min and max.
void save_normalizer(const Normalizer& normalizer, const std::filesystem::path& path);
Normalizer load_normalizer(const std::filesystem::path& path);

struct AugmentConfig {
  double epsilon = 0.0;
  int copies = 1;
  std::uint64_t seed = 0;
  // Half-width of an extra additive uniform term; 0 disables it.
  double extra_noise = 0.0;
};

// Appends `copies` perturbed duplicates of every Train row:
// x*_ij = x_ij + sigma_j * rho_ij * epsilon, rho_ij ~ U[-1,1], sigma_j the
// population standard deviation of feature j over all rows of the table.
AfvTable augment_epsilon_ball(const AfvTable& table, const AugmentConfig& config);

// Stratified by label; per class, round(fraction * n_class) rows go to Train.
AfvTable split(const AfvTable& table, double train_fraction, std::uint64_t seed);

// Relabels strain classes to their parent class and drops the strain names.
AfvTable merge_strains(const AfvTable& table, const std::map<int, int>& strain_to_parent);

enum class FailedAttackPolicy { Drop, Keep, NearestCentroid };

FailedAttackPolicy parse_failed_policy(const std::string& name);
const char* failed_policy_name(FailedAttackPolicy policy);

// Drop removes failed attack rows; Keep is the identity; NearestCentroid
// relabels each failed row to 0 when it is closer to the clean centroid than
// to its attack's centroid of successful rows.
AfvTable apply_failed_attack_policy(const AfvTable& table, FailedAttackPolicy policy);

std::vector<double> population_stddev(const AfvTable& table);

}  // namespace afv
