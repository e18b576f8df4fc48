#include "afv/baseline_profile.hpp"

#include <algorithm>
#include <cmath>

#include "afv/afv_extract.hpp"
#include "afv/error.hpp"
#include "afv/text_format.hpp"

namespace afv {

namespace {

void require_naturals(const LatentDataset& naturals) {
  if (naturals.empty()) throw ValidationError("empty dataset");
  naturals.validate();
  for (int label : naturals.labels)
    if (label != 0) throw ValidationError("profile requires label-0 samples only");
}

// Population mean and variance per channel over samples [first, last).
void batch_moments(const LatentDataset& d, std::size_t first, std::size_t last,
                   std::vector<double>& mean, std::vector<double>& var) {
  const Shape s = d.shape();
  const std::size_t hw = s.spatial();
  const double count = static_cast<double>((last - first) * hw);
  mean.assign(s.channels, 0.0);
  var.assign(s.channels, 0.0);
  for (std::size_t i = first; i < last; ++i) {
    const auto& v = d.samples[i].values;
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t k = c * hw; k < (c + 1) * hw; ++k) mean[c] += v[k];
  }
  for (auto& m : mean) m /= count;
  for (std::size_t i = first; i < last; ++i) {
    const auto& v = d.samples[i].values;
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t k = c * hw; k < (c + 1) * hw; ++k) {
        const double dev = v[k] - mean[c];
        var[c] += dev * dev;
      }
  }
  for (auto& x : var) x /= count;
}

}  // namespace

void BaselineProfile::validate() const {
  const std::size_t C = shape.channels;
  require(C > 0 && shape.size() > 0, "profile has an empty shape");
  require(mu_base.size() == C && sigma_base.size() == C && lo.size() == C && hi.size() == C,
          "profile channel arrays do not match the channel count");
  require(normative_layer.size() == shape.size(), "normative layer length does not match shape");
  require(d_count > 0, "profile was fitted on zero samples");
  for (std::size_t c = 0; c < C; ++c) {
    require(std::isfinite(mu_base[c]) && sigma_base[c] >= 0.0, "invalid channel statistics");
    require(lo[c] == mu_base[c] - sigma_base[c] && hi[c] == mu_base[c] + sigma_base[c],
            "watermarks are not mu -/+ sigma");
  }
  for (std::size_t r = 0; r < kRegionFeatures; ++r)
    require(feature_lo[r] <= feature_hi[r], "feature percentile lo exceeds hi");
  double mass = 0.0;
  for (double b : normative_hist) mass += b;
  const double L = static_cast<double>(shape.size());
  require(std::fabs(mass - L) <= 1e-6 * L, "normative histogram mass differs from L");
}

ChannelStats fit_channel_stats(const LatentDataset& naturals, FitMode mode, double alpha,
                               std::size_t batch_size) {
  require_naturals(naturals);
  ChannelStats out;
  std::vector<double> var;
  if (mode == FitMode::EqualWeight) {
    batch_moments(naturals, 0, naturals.size(), out.mean, var);
  } else {
    require(alpha > 0.0 && alpha <= 1.0, "smoothing factor alpha must lie in (0,1]");
    require(batch_size >= 1, "batch size must be positive");
    std::vector<double> bm, bv;
    for (std::size_t first = 0; first < naturals.size(); first += batch_size) {
      const std::size_t last = std::min(naturals.size(), first + batch_size);
      batch_moments(naturals, first, last, bm, bv);
      if (first == 0) {
        out.mean = bm;
        var = bv;
        continue;
      }
      for (std::size_t c = 0; c < bm.size(); ++c) {
        out.mean[c] = (1.0 - alpha) * out.mean[c] + alpha * bm[c];
        var[c] = (1.0 - alpha) * var[c] + alpha * bv[c];
      }
    }
  }
  out.stddev.resize(var.size());
  for (std::size_t c = 0; c < var.size(); ++c) out.stddev[c] = std::sqrt(std::max(var[c], 0.0));
  return out;
}

std::vector<double> fit_normative_layer(const LatentDataset& naturals) {
  if (naturals.empty()) throw ValidationError("empty dataset");
  naturals.validate();
  std::vector<double> layer(naturals.shape().size(), 0.0);
  for (const auto& t : naturals.samples)
    for (std::size_t k = 0; k < layer.size(); ++k) layer[k] += t.values[k];
  const double d = static_cast<double>(naturals.size());
  for (auto& x : layer) x /= d;
  return layer;
}

double nearest_rank_quantile(std::span<const double> values, double p) {
  require(!values.empty(), "quantile of an empty sample");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, s.size());
  return s[rank - 1];
}

std::pair<std::array<double, kRegionFeatures>, std::array<double, kRegionFeatures>>
fit_feature_percentiles(std::span<const std::array<double, kRegionFeatures>> rows, double lo_pct,
                        double hi_pct) {
  require(rows.size() >= 10, "insufficient samples for feature percentiles (need >= 10)");
  require(0.0 < lo_pct && lo_pct < hi_pct && hi_pct < 1.0, "need 0 < lo_pct < hi_pct < 1");
  std::array<double, kRegionFeatures> lo{}, hi{};
  std::vector<double> col(rows.size());
  for (std::size_t r = 0; r < kRegionFeatures; ++r) {
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][r];
    lo[r] = nearest_rank_quantile(col, lo_pct);
    hi[r] = nearest_rank_quantile(col, hi_pct);
  }
  return {lo, hi};
}

BaselineProfile fit_profile(const LatentDataset& naturals, const ProfileConfig& config) {
  require_naturals(naturals);
  require(naturals.size() >= 10, "insufficient samples for feature percentiles (need >= 10)");
  BaselineProfile p;
  p.shape = naturals.shape();
  auto stats = fit_channel_stats(naturals, config.mode, config.alpha, config.batch_size);
  p.mu_base = std::move(stats.mean);
  p.sigma_base = std::move(stats.stddev);
  for (std::size_t c = 0; c < p.mu_base.size(); ++c) {
    p.lo.push_back(p.mu_base[c] - p.sigma_base[c]);
    p.hi.push_back(p.mu_base[c] + p.sigma_base[c]);
  }
  p.normative_layer = fit_normative_layer(naturals);
  p.d_count = naturals.size();

  std::vector<RegionFeatures> rows;
  rows.reserve(naturals.size());
  Histogram sum{};
  for (const auto& t : naturals.samples) {
    const auto sets = indicator_sets(t.values, t.shape, p.mu_base, p.sigma_base);
    rows.push_back(region_features(sets));
    const auto h = histogram23(sets.z);
    for (std::size_t b = 0; b < kHistBins; ++b) sum[b] += h[b];
  }
  for (std::size_t b = 0; b < kHistBins; ++b) p.normative_hist[b] = sum[b] / static_cast<double>(p.d_count);
  std::tie(p.feature_lo, p.feature_hi) = fit_feature_percentiles(rows, config.lo_pct, config.hi_pct);
  p.validate();
  return p;
}

std::string render_profile(const BaselineProfile& p) {
  p.validate();
  KvWriter w("afv-profile", 1);
  w.put_string("shape", std::to_string(p.shape.channels) + " " + std::to_string(p.shape.height) +
                            " " + std::to_string(p.shape.width));
  w.put_int("d_count", static_cast<long long>(p.d_count));
  w.put_array("mu_base", p.mu_base);
  w.put_array("sigma_base", p.sigma_base);
  w.put_array("lo", p.lo);
  w.put_array("hi", p.hi);
  w.put_array("normative_hist", p.normative_hist);
  w.put_array("feature_lo", p.feature_lo);
  w.put_array("feature_hi", p.feature_hi);
  w.put_array("normative_layer", p.normative_layer);
  return w.str();
}

BaselineProfile parse_profile(std::string_view text) {
  KvReader r(text, "afv-profile", 1);
  BaselineProfile p;
  {
    std::istringstream ss(r.get_string("shape"));
    if (!(ss >> p.shape.channels >> p.shape.height >> p.shape.width))
      throw FormatError("profile: malformed shape");
  }
  p.d_count = static_cast<std::size_t>(r.get_int("d_count"));
  p.mu_base = r.get_array("mu_base");
  p.sigma_base = r.get_array("sigma_base");
  p.lo = r.get_array("lo");
  p.hi = r.get_array("hi");
  p.normative_layer = r.get_array("normative_layer");
  auto copy_fixed = [&](const std::string& key, auto& dst) {
    const auto v = r.get_array(key);
    if (v.size() != dst.size()) throw FormatError("profile: wrong length for " + key);
    std::copy(v.begin(), v.end(), dst.begin());
  };
  copy_fixed("normative_hist", p.normative_hist);
  copy_fixed("feature_lo", p.feature_lo);
  copy_fixed("feature_hi", p.feature_hi);
  p.validate();
  return p;
}

void save_profile(const BaselineProfile& profile, const std::filesystem::path& path) {
  write_text_file(path, render_profile(profile));
}

BaselineProfile load_profile(const std::filesystem::path& path) {
  return parse_profile(read_text_file(path));
}

}  // namespace afv
