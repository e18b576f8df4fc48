#include "afv/afv_extract.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "afv/emd.hpp"
#include "afv/error.hpp"
#include "afv/random.hpp"

namespace afv {

namespace {

constexpr double kHistLo = -3.0;
constexpr double kHistWidth = 6.0 / static_cast<double>(kHistBins);

double guard(double d) { return std::max(d, kRatioGuard); }

void check_stats(Shape shape, std::size_t n, std::span<const double> mu,
                 std::span<const double> sigma) {
  require(n == shape.size(), "tensor length does not match shape");
  require(mu.size() == shape.channels && sigma.size() == shape.channels,
          "shape mismatch between tensor and profile");
}

void check_profile(const LatentTensor& v, const BaselineProfile& p) {
  if (!(v.shape == p.shape)) throw ValidationError("shape mismatch between tensor and profile");
}

constexpr const char* kRegionNames[kRegionFeatures] = {
    "error_density",        "right_error_count",      "left_error_count",
    "overall_error_count",  "right_over_overall",     "left_over_overall",
    "right_minus_left",     "right_anomaly_signal",   "left_anomaly_signal",
    "overall_anomaly_signal", "right_norm_signal",    "left_norm_signal",
    "overall_norm_signal",  "anomaly_error",          "within_anomaly_error",
    "overall_error",        "anomaly_within_ratio",   "anomaly_per_error",
    "within_per_inlier",    "normalized_within_area", "within_overall_ratio",
    "norm_overall_error_ratio", "average_anomaly_score", "average_within_score",
    "average_overall_score"};

std::string two_digit(std::size_t i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (m >= n) return idx;
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

template <class F>
double p_or_one(F&& test) {
  try {
    return test().p_value;
  } catch (const ValidationError&) {
    return 1.0;  // degenerate populations carry no evidence
  }
}

}  // namespace

std::vector<double> zscore(std::span<const float> v, Shape shape, std::span<const double> mu,
                           std::span<const double> sigma) {
  check_stats(shape, v.size(), mu, sigma);
  std::vector<double> z(v.size());
  const std::size_t hw = shape.spatial();
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const double m = mu[c], s = std::max(sigma[c], kRatioGuard);
    for (std::size_t k = c * hw; k < (c + 1) * hw; ++k) z[k] = (static_cast<double>(v[k]) - m) / s;
  }
  return z;
}

std::vector<double> zscore(const LatentTensor& v, const BaselineProfile& profile) {
  check_profile(v, profile);
  return zscore(v.values, v.shape, profile.mu_base, profile.sigma_base);
}

IndicatorSets indicator_sets(std::span<const float> v, Shape shape, std::span<const double> mu,
                             std::span<const double> sigma) {
  IndicatorSets s;
  s.z = zscore(v, shape, mu, sigma);
  const std::size_t n = v.size(), hw = shape.spatial();
  s.s_lo.assign(n, 0);
  s.s_mi.assign(n, 0);
  s.s_hi.assign(n, 0);
  s.s_ov.assign(n, 0);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const double lo = mu[c] - sigma[c], hi = mu[c] + sigma[c];
    for (std::size_t k = c * hw; k < (c + 1) * hw; ++k) {
      const double x = v[k];
      if (x <= lo) s.s_lo[k] = 1;
      else if (x >= hi) s.s_hi[k] = 1;
      else s.s_mi[k] = 1;
      s.s_ov[k] = s.s_lo[k] | s.s_hi[k];
    }
  }
  return s;
}

IndicatorSets indicator_sets(const LatentTensor& v, const BaselineProfile& profile) {
  check_profile(v, profile);
  return indicator_sets(v.values, v.shape, profile.mu_base, profile.sigma_base);
}

Aggregates aggregate(const IndicatorSets& s) {
  Aggregates a;
  for (std::size_t k = 0; k < s.z.size(); ++k) {
    const double az = std::fabs(s.z[k]);
    a.c_lo += s.s_lo[k];
    a.c_mi += s.s_mi[k];
    a.c_hi += s.s_hi[k];
    a.c_ov += s.s_ov[k];
    a.z_lo += s.s_lo[k] * az;
    a.z_mi += s.s_mi[k] * az;
    a.z_hi += s.s_hi[k] * az;
    a.z_ov += s.s_ov[k] * az;
  }
  return a;
}

RegionFeatures region_features(const Aggregates& a, std::size_t length) {
  const double L = guard(static_cast<double>(length));
  const double tails_c = a.c_lo + a.c_hi;
  const double tails_z = a.z_lo + a.z_hi;
  return {
      tails_c / L,                // error density
      a.c_hi,                     // right error count
      a.c_lo,                     // left error count
      a.c_ov,                     // overall error count
      a.c_hi / L,
      a.c_lo / L,
      (a.c_hi - a.c_lo) / L,
      a.z_hi,                     // right anomaly signal
      a.z_lo,
      a.z_ov,
      a.z_hi / L,                 // right norm signal
      a.z_lo / L,
      a.z_ov / L,
      tails_z,                    // anomaly error
      a.z_mi,                     // within anomaly error
      a.z_ov,                     // overall error
      tails_z / guard(a.z_mi),    // anomaly/within
      tails_z / guard(tails_c),   // anomaly/num errors
      a.z_mi / guard(a.c_mi + 1), // within/(n - num errors), "+1" as published
      a.z_mi / L,
      a.z_mi / guard(a.z_ov),
      a.z_ov / L,
      tails_z / guard(tails_c),   // average anomaly score
      a.z_mi / guard(a.c_mi),     // average within score
      a.z_ov / guard(a.c_ov),     // average overall score
  };
}

RegionFeatures region_features(const IndicatorSets& sets) {
  return region_features(aggregate(sets), sets.z.size());
}

ExtremaFeatures extrema_features(const RegionFeatures& f, const BaselineProfile& profile) {
  ExtremaFeatures out{};
  double score = 0.0;
  for (std::size_t r = 0; r < kRegionFeatures; ++r) {
    const bool extreme = f[r] >= profile.feature_hi[r] || f[r] <= profile.feature_lo[r];
    out[2 + r] = extreme ? 1.0 : 0.0;
    score += out[2 + r];
  }
  out[0] = score;
  out[1] = score / static_cast<double>(kRegionFeatures);
  return out;
}

Histogram histogram23(std::span<const double> z) {
  Histogram h{};
  for (double x : z) {
    require(std::isfinite(x), "histogram23: non-finite z");
    const double pos = std::floor((x - kHistLo) / kHistWidth);
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(kHistBins - 1)));
    h[bin] += 1.0;
  }
  return h;
}

HistogramFeatures histogram_features(const Histogram& obs, const Histogram& ref) {
  HistogramFeatures out{};
  double sum = 0.0;
  for (std::size_t b = 0; b < kHistBins; ++b) {
    const double diff = obs[b] - ref[b];
    out[b] = obs[b];
    out[kHistBins + b] = diff * diff;
    out[2 * kHistBins + b] = diff / std::max(ref[b], 1.0);
    sum += out[2 * kHistBins + b];
  }
  const double mean = sum / static_cast<double>(kHistBins);
  double var = 0.0;
  for (std::size_t b = 0; b < kHistBins; ++b) {
    const double d = out[2 * kHistBins + b] - mean;
    var += d * d;
  }
  out[3 * kHistBins] = sum;
  out[3 * kHistBins + 1] = mean;
  out[3 * kHistBins + 2] = var / static_cast<double>(kHistBins);
  return out;
}

WassersteinFeatures wasserstein_tail_features(const Histogram& obs, const Histogram& ref) {
  // Slices at roughly -1 and +1 sigma: bins 0..7, 8..14, 15..22.
  constexpr std::size_t cuts[4] = {0, 8, 15, kHistBins};
  WassersteinFeatures w{};
  for (std::size_t s = 0; s < 3; ++s) {
    const std::span<const double> o(obs.data() + cuts[s], cuts[s + 1] - cuts[s]);
    const std::span<const double> r(ref.data() + cuts[s], cuts[s + 1] - cuts[s]);
    w[s] = emd_1d(o, r, kHistWidth);
  }
  return w;
}

TestFeatures ab_test_features(const LatentTensor& v, const BaselineProfile& profile,
                              std::uint64_t seed) {
  check_profile(v, profile);
  const std::size_t n = v.size();
  const std::size_t m = std::min(kTestSubsample, n);
  Rng rng(seed);
  const auto idx_obs = subsample_indices(n, m, rng);
  const auto idx_ref = subsample_indices(n, m, rng);

  const auto z = zscore(v, profile);
  std::vector<double> z_obs, raw_obs, raw_ref;
  z_obs.reserve(m);
  raw_obs.reserve(m);
  raw_ref.reserve(m);
  for (std::size_t k : idx_obs) {
    z_obs.push_back(z[k]);
    raw_obs.push_back(v.values[k]);
  }
  for (std::size_t k : idx_ref) raw_ref.push_back(profile.normative_layer[k]);

  // Channel-mean comparison when there are enough channels, else raw values.
  std::vector<double> means_obs, means_ref;
  const Shape s = v.shape;
  if (s.channels >= kMinTestSamples) {
    const std::size_t hw = s.spatial();
    for (std::size_t c = 0; c < s.channels; ++c) {
      double a = 0.0, b = 0.0;
      for (std::size_t k = c * hw; k < (c + 1) * hw; ++k) {
        a += v.values[k];
        b += profile.normative_layer[k];
      }
      means_obs.push_back(a / static_cast<double>(hw));
      means_ref.push_back(b / static_cast<double>(hw));
    }
  } else {
    means_obs = raw_obs;
    means_ref = raw_ref;
  }

  return {
      p_or_one([&] { return ks_one_sample_normal(z_obs); }),
      p_or_one([&] { return mann_whitney_u(means_obs, means_ref); }),
      p_or_one([&] { return t_test_welch(raw_obs, raw_ref); }),
      p_or_one([&] { return ks_two_sample(raw_obs, raw_ref); }),
      p_or_one([&] { return bartlett(raw_obs, raw_ref); }),
  };
}

FeatureLayout core_layout(const FeatureToggles& t) {
  FeatureLayout layout;
  for (auto* name : kRegionNames) layout.append("region", std::string("region.") + name);
  layout.append("extrema", "extrema.normative_score");
  layout.append("extrema", "extrema.normalized_score");
  for (std::size_t r = 1; r <= kRegionFeatures; ++r)
    layout.append("extrema", "extrema.flag_" + two_digit(r));
  if (t.histograms) {
    for (const char* g : {"obs", "sqdiff", "relerr"})
      for (std::size_t b = 0; b < kHistBins; ++b)
        layout.append("histogram", std::string("hist.") + g + "_" + two_digit(b));
    layout.append("histogram", "hist.relerr_sum");
    layout.append("histogram", "hist.relerr_mean");
    layout.append("histogram", "hist.relerr_var");
  }
  if (t.stat_tests) {
    for (const char* name : {"p_normal_ks", "p_channel_means_mwu", "p_means_welch",
                             "p_same_dist_ks", "p_variance_bartlett"})
      layout.append("stat_tests", std::string("test.") + name);
  }
  if (t.wasserstein) {
    for (const char* name : {"left", "center", "right"})
      layout.append("wasserstein", std::string("emd.") + name);
  }
  return layout;
}

AfvExtractor::AfvExtractor(const BaselineProfile& profile, FeatureToggles toggles, std::uint64_t seed)
    : profile_(profile),
      toggles_(toggles),
      seed_(seed),
      layout_(std::make_shared<const FeatureLayout>(core_layout(toggles))) {
  profile_.validate();
}

Afv AfvExtractor::extract(const LatentTensor& v, std::size_t sample_index, int label,
                          bool attack_success) const {
  v.validate();
  check_profile(v, profile_);
  const auto sets = indicator_sets(v, profile_);
  const auto region = region_features(sets);
  const auto extrema = extrema_features(region, profile_);

  Afv out;
  out.layout = layout_;
  out.label = label;
  out.attack_success = attack_success;
  out.values.reserve(layout_->size());
  out.values.insert(out.values.end(), region.begin(), region.end());
  out.values.insert(out.values.end(), extrema.begin(), extrema.end());
  Histogram h{};
  if (toggles_.histograms || toggles_.wasserstein) h = histogram23(sets.z);
  if (toggles_.histograms) {
    const auto hf = histogram_features(h, profile_.normative_hist);
    out.values.insert(out.values.end(), hf.begin(), hf.end());
  }
  if (toggles_.stat_tests) {
    const auto tf = ab_test_features(v, profile_, derive_seed(seed_, sample_index));
    out.values.insert(out.values.end(), tf.begin(), tf.end());
  }
  if (toggles_.wasserstein) {
    const auto wf = wasserstein_tail_features(h, profile_.normative_hist);
    out.values.insert(out.values.end(), wf.begin(), wf.end());
  }
  return out;
}

AfvTable AfvExtractor::extract_all(const LatentDataset& dataset) const {
  dataset.validate();
  AfvTable table;
  table.layout = layout_;
  table.class_names = dataset.class_names;
  table.rows.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    table.rows.push_back(extract(dataset.samples[i], i, dataset.labels[i], dataset.attack_success[i]));
    table.split.push_back(Split::None);
  }
  return table;
}

Afv extract_afv(const LatentTensor& v, const BaselineProfile& profile, const FeatureToggles& toggles) {
  return AfvExtractor(profile, toggles).extract(v);
}

}  // namespace afv
