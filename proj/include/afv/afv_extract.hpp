#pragma once

// Per-sample anomaly feature extraction against a fitted BaselineProfile.
//
// Canonical core layout (132 features when every optional group is on):
//   region      25   C/Z aggregations of the lo/mi/hi/ov indicator sets
//   extrema     27   normative score, normalized score, 25 extrema flags
//   histogram   72   23 observed bins, 23 squared diffs, 23 relative errors,
//                    sum/mean/variance of the relative errors
//   stat_tests   5   p-values: normality KS, channel-mean MWU, Welch t,
//                    two-sample KS, Bartlett
//   wasserstein  3   1D EMD of the left tail, center, right tail slices

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "afv/afv_table.hpp"
#include "afv/baseline_profile.hpp"
#include "afv/latent_io.hpp"
#include "afv/stat_tests.hpp"

namespace afv {

inline constexpr double kRatioGuard = 1e-12;
inline constexpr std::size_t kExtremaFeatures = 27;
inline constexpr std::size_t kHistogramFeatures = 72;
inline constexpr std::size_t kTestFeatures = 5;
inline constexpr std::size_t kWassersteinFeatures = 3;
inline constexpr std::size_t kCoreFeatures =
    kRegionFeatures + kExtremaFeatures + kHistogramFeatures + kTestFeatures + kWassersteinFeatures;
inline constexpr std::size_t kTestSubsample = 1000;

using RegionFeatures = std::array<double, kRegionFeatures>;
using ExtremaFeatures = std::array<double, kExtremaFeatures>;
using HistogramFeatures = std::array<double, kHistogramFeatures>;
using TestFeatures = std::array<double, kTestFeatures>;
using WassersteinFeatures = std::array<double, kWassersteinFeatures>;

struct IndicatorSets {
  std::vector<std::uint8_t> s_lo, s_mi, s_hi, s_ov;
  std::vector<double> z;
};

struct Aggregates {
  double c_lo = 0, c_mi = 0, c_hi = 0, c_ov = 0;
  double z_lo = 0, z_mi = 0, z_hi = 0, z_ov = 0;
};

struct FeatureToggles {
  bool histograms = true;
  bool stat_tests = true;
  bool wasserstein = true;
  bool pca = false;
  bool lda = false;
  bool rnn_votes = false;
};

std::vector<double> zscore(std::span<const float> v, Shape shape, std::span<const double> mu,
                           std::span<const double> sigma);
std::vector<double> zscore(const LatentTensor& v, const BaselineProfile& profile);

IndicatorSets indicator_sets(std::span<const float> v, Shape shape, std::span<const double> mu,
                             std::span<const double> sigma);
IndicatorSets indicator_sets(const LatentTensor& v, const BaselineProfile& profile);

Aggregates aggregate(const IndicatorSets& sets);

RegionFeatures region_features(const Aggregates& agg, std::size_t length);
RegionFeatures region_features(const IndicatorSets& sets);

ExtremaFeatures extrema_features(const RegionFeatures& f, const BaselineProfile& profile);

Histogram histogram23(std::span<const double> z);

HistogramFeatures histogram_features(const Histogram& observed, const Histogram& reference);

WassersteinFeatures wasserstein_tail_features(const Histogram& observed, const Histogram& reference);

// A/B test p-values for one sample against the profile's normative layer.
// Degenerate inputs (zero variance) yield p = 1.
TestFeatures ab_test_features(const LatentTensor& v, const BaselineProfile& profile,
                              std::uint64_t seed);

FeatureLayout core_layout(const FeatureToggles& toggles);

class AfvExtractor {
 public:
  AfvExtractor(const BaselineProfile& profile, FeatureToggles toggles, std::uint64_t seed = 0);

  // sample_index selects the deterministic subsample stream for the tests.
  Afv extract(const LatentTensor& v, std::size_t sample_index = 0, int label = 0,
              bool attack_success = true) const;
  AfvTable extract_all(const LatentDataset& dataset) const;

  const std::shared_ptr<const FeatureLayout>& layout() const { return layout_; }

 private:
  BaselineProfile profile_;
  FeatureToggles toggles_;
  std::uint64_t seed_;
  std::shared_ptr<const FeatureLayout> layout_;
};

Afv extract_afv(const LatentTensor& v, const BaselineProfile& profile, const FeatureToggles& toggles);

}  // namespace afv
