#pragma once

#include <span>

namespace afv {

// Exact 1D earth mover's distance between two histograms on a shared uniform
// grid: bin_width * sum_b |CDF_p(b) - CDF_q(b)|. Each histogram is normalized
// to unit mass first; if either has zero mass the distance is 0.
double emd_1d(std::span<const double> p, std::span<const double> q, double bin_width);

}  // namespace afv
