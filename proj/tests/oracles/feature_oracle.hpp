#pragma once

// Second, deliberately naive implementation of the per-sample features.
// Shares no code with the library: thresholds against raw values instead of
// z-scores, bins by edge comparison, recomputes baselines from scratch.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace oracle {

struct Baseline {
  std::size_t channels = 0, spatial = 0;
  std::vector<double> mean, sd;
  std::array<double, 23> ref_hist{};
  std::array<double, 25> pct_lo{}, pct_hi{};
};

inline double safe_div(double a, double b) { return a / (b > 1e-12 ? b : 1e-12); }

inline std::array<double, 23> bin_counts(const std::vector<double>& z) {
  std::array<double, 23> h{};
  const double width = 6.0 / 23.0;
  for (double x : z) {
    int b = 0;
    // smallest b with x < -3 + (b+1)*width, scanning edges
    while (b < 22 && (x + 3.0) / width >= b + 1) ++b;
    ++h[b];
  }
  return h;
}

inline std::vector<double> standardize(const std::vector<float>& v, const Baseline& base) {
  std::vector<double> z(v.size());
  for (std::size_t c = 0; c < base.channels; ++c)
    for (std::size_t s = 0; s < base.spatial; ++s) {
      const std::size_t k = c * base.spatial + s;
      const double sd = base.sd[c] > 1e-12 ? base.sd[c] : 1e-12;
      z[k] = (static_cast<double>(v[k]) - base.mean[c]) / sd;
    }
  return z;
}

inline std::array<double, 25> region(const std::vector<float>& v, const Baseline& base) {
  const auto z = standardize(v, base);
  double n_lo = 0, n_hi = 0, n_mid = 0, a_lo = 0, a_hi = 0, a_mid = 0;
  for (std::size_t c = 0; c < base.channels; ++c)
    for (std::size_t s = 0; s < base.spatial; ++s) {
      const std::size_t k = c * base.spatial + s;
      const double x = v[k];
      if (x <= base.mean[c] - base.sd[c]) {
        n_lo += 1;
        a_lo += std::fabs(z[k]);
      } else if (x >= base.mean[c] + base.sd[c]) {
        n_hi += 1;
        a_hi += std::fabs(z[k]);
      } else {
        n_mid += 1;
        a_mid += std::fabs(z[k]);
      }
    }
  const double L = static_cast<double>(v.size());
  const double n_out = n_lo + n_hi, a_out = a_lo + a_hi;
  std::array<double, 25> f{};
  f[0] = (n_lo + n_hi) / L;
  f[1] = n_hi;
  f[2] = n_lo;
  f[3] = n_out;
  f[4] = n_hi / L;
  f[5] = n_lo / L;
  f[6] = (n_hi - n_lo) / L;
  f[7] = a_hi;
  f[8] = a_lo;
  f[9] = a_out;
  f[10] = a_hi / L;
  f[11] = a_lo / L;
  f[12] = a_out / L;
  f[13] = a_lo + a_hi;
  f[14] = a_mid;
  f[15] = a_out;
  f[16] = safe_div(a_lo + a_hi, a_mid);
  f[17] = safe_div(a_lo + a_hi, n_lo + n_hi);
  f[18] = a_mid / (n_mid + 1.0);
  f[19] = a_mid / L;
  f[20] = safe_div(a_mid, a_out);
  f[21] = a_out / L;
  f[22] = safe_div(a_lo + a_hi, n_lo + n_hi);
  f[23] = safe_div(a_mid, n_mid);
  f[24] = safe_div(a_out, n_out);
  return f;
}

inline double nearest_rank(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  std::size_t rank = 1;
  while (static_cast<double>(rank) < p * static_cast<double>(xs.size()) - 1e-9) ++rank;
  return xs[rank - 1];
}

inline Baseline fit(const std::vector<std::vector<float>>& naturals, std::size_t channels, std::size_t spatial,
                    double lo_pct = 0.1, double hi_pct = 0.9) {
  Baseline b;
  b.channels = channels;
  b.spatial = spatial;
  b.mean.assign(channels, 0.0);
  b.sd.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& v : naturals)
      for (std::size_t s = 0; s < spatial; ++s, ++n) sum += v[c * spatial + s];
    const double m = sum / static_cast<double>(n);
    double ss = 0;
    for (const auto& v : naturals)
      for (std::size_t s = 0; s < spatial; ++s) ss += (v[c * spatial + s] - m) * (v[c * spatial + s] - m);
    b.mean[c] = m;
    b.sd[c] = std::sqrt(ss / static_cast<double>(n));
  }
  for (const auto& v : naturals) {
    const auto h = bin_counts(standardize(v, b));
    for (int i = 0; i < 23; ++i) b.ref_hist[i] += h[i] / static_cast<double>(naturals.size());
  }
  std::vector<std::array<double, 25>> rows;
  for (const auto& v : naturals) rows.push_back(region(v, b));
  for (int r = 0; r < 25; ++r) {
    std::vector<double> col;
    for (const auto& row : rows) col.push_back(row[r]);
    b.pct_lo[r] = nearest_rank(col, lo_pct);
    b.pct_hi[r] = nearest_rank(col, hi_pct);
  }
  return b;
}

// Exact 1D transport cost between two histograms on a unit grid, found by
// greedily matching mass in sorted (left-to-right) order.
inline double sorted_transport(std::vector<double> p, std::vector<double> q, double width) {
  double sp = 0, sq = 0;
  for (double x : p) sp += x;
  for (double x : q) sq += x;
  if (sp <= 0 || sq <= 0) return 0.0;
  for (double& x : p) x /= sp;
  for (double& x : q) x /= sq;
  std::size_t i = 0, j = 0;
  double cost = 0;
  while (i < p.size() && j < q.size()) {
    if (p[i] <= 1e-300) { ++i; continue; }
    if (q[j] <= 1e-300) { ++j; continue; }
    const double moved = std::min(p[i], q[j]);
    cost += moved * std::fabs(static_cast<double>(i) - static_cast<double>(j));
    p[i] -= moved;
    q[j] -= moved;
    if (p[i] <= 1e-300) ++i;
    if (q[j] <= 1e-300) ++j;
  }
  return cost * width;
}

// Region (25), extrema (27), histogram (72), Wasserstein (3): 127 values.
inline std::vector<double> features(const std::vector<float>& v, const Baseline& base) {
  std::vector<double> out;
  const auto f = region(v, base);
  out.insert(out.end(), f.begin(), f.end());
  double score = 0;
  std::array<double, 25> flags{};
  for (int r = 0; r < 25; ++r) {
    flags[r] = (f[r] >= base.pct_hi[r] || f[r] <= base.pct_lo[r]) ? 1.0 : 0.0;
    score += flags[r];
  }
  out.push_back(score);
  out.push_back(score / 25.0);
  out.insert(out.end(), flags.begin(), flags.end());

  const auto h = bin_counts(standardize(v, base));
  out.insert(out.end(), h.begin(), h.end());
  for (int b = 0; b < 23; ++b) out.push_back((h[b] - base.ref_hist[b]) * (h[b] - base.ref_hist[b]));
  std::vector<double> rel;
  for (int b = 0; b < 23; ++b) rel.push_back((h[b] - base.ref_hist[b]) / std::max(base.ref_hist[b], 1.0));
  out.insert(out.end(), rel.begin(), rel.end());
  double sum = 0;
  for (double r : rel) sum += r;
  const double mean = sum / 23.0;
  double var = 0;
  for (double r : rel) var += (r - mean) * (r - mean);
  out.push_back(sum);
  out.push_back(mean);
  out.push_back(var / 23.0);

  const int cuts[4] = {0, 8, 15, 23};
  for (int s = 0; s < 3; ++s) {
    std::vector<double> a(h.begin() + cuts[s], h.begin() + cuts[s + 1]);
    std::vector<double> b(base.ref_hist.begin() + cuts[s], base.ref_hist.begin() + cuts[s + 1]);
    out.push_back(sorted_transport(a, b, 6.0 / 23.0));
  }
  return out;
}

}  // namespace oracle
