#pragma once

// The fitted "reference temperature" of natural samples: per-channel
// baseline statistics and watermarks, the normative mean layer, the
// normative z-score histogram, and extrema percentiles of the region
// features.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afv/latent_io.hpp"

namespace afv {

inline constexpr std::size_t kHistBins = 23;
inline constexpr std::size_t kRegionFeatures = 25;

using Histogram = std::array<double, kHistBins>;

enum class FitMode {
  EqualWeight,  // exact two-pass mean/variance over all natural values
  Exponential,  // per-batch running update stat <- (1-alpha)*stat + alpha*stat_b
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct ProfileConfig {
  FitMode mode = FitMode::EqualWeight;
  double alpha = 0.1;
  std::size_t batch_size = 100;
  double lo_pct = 0.10;
  double hi_pct = 0.90;
};

struct BaselineProfile {
  Shape shape;
  std::vector<double> mu_base;
  std::vector<double> sigma_base;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> normative_layer;
  Histogram normative_hist{};
  std::array<double, kRegionFeatures> feature_lo{};
  std::array<double, kRegionFeatures> feature_hi{};
  std::size_t d_count = 0;

  // Throws ValidationError if any stored invariant is broken.
  void validate() const;
};

ChannelStats fit_channel_stats(const LatentDataset& naturals, FitMode mode = FitMode::EqualWeight,
                               double alpha = 0.1, std::size_t batch_size = 100);

std::vector<double> fit_normative_layer(const LatentDataset& naturals);

// Nearest-rank empirical quantile: sorted[ceil(p*n) - 1].
double nearest_rank_quantile(std::span<const double> values, double p);

// rows = one region-feature vector per natural sample.
std::pair<std::array<double, kRegionFeatures>, std::array<double, kRegionFeatures>>
fit_feature_percentiles(std::span<const std::array<double, kRegionFeatures>> rows, double lo_pct,
                        double hi_pct);

// Full profile fit. Every sample must carry label 0; needs at least 10 samples
// for the percentile step.
BaselineProfile fit_profile(const LatentDataset& naturals, const ProfileConfig& config = {});

void save_profile(const BaselineProfile& profile, const std::filesystem::path& path);
BaselineProfile load_profile(const std::filesystem::path& path);
std::string render_profile(const BaselineProfile& profile);
BaselineProfile parse_profile(std::string_view text);

}  // namespace afv
