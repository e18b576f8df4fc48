#include "afv/emd.hpp"

#include <cmath>
#include <numeric>

#include "afv/error.hpp"

namespace afv {

double emd_1d(std::span<const double> p, std::span<const double> q, double bin_width) {
  require(p.size() == q.size(), "emd_1d: length mismatch");
  const double mp = std::accumulate(p.begin(), p.end(), 0.0);
  const double mq = std::accumulate(q.begin(), q.end(), 0.0);
  if (mp <= 0.0 || mq <= 0.0) return 0.0;
  double carry = 0.0, work = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) {
    carry += p[b] / mp - q[b] / mq;
    work += std::fabs(carry);
  }
  return bin_width * work;
}

}  // namespace afv
