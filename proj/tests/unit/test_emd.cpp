#include <doctest.h>

#include "afv/emd.hpp"
#include "afv/error.hpp"
#include "afv/random.hpp"
#include "oracles/feature_oracle.hpp"

using namespace afv;

TEST_CASE("identical and empty slices cost nothing") {
  const std::vector<double> a{1, 2, 3, 0, 5};
  CHECK(emd_1d(a, a, 0.5) == 0.0);
  const std::vector<double> zero(5, 0.0);
  CHECK(emd_1d(a, zero, 1.0) == 0.0);
  CHECK(emd_1d(zero, zero, 1.0) == 0.0);
}

TEST_CASE("unit mass across the slice") {
  std::vector<double> a(8, 0.0), b(8, 0.0);
  a[0] = 1;
  b[7] = 1;
  CHECK(emd_1d(a, b, 6.0 / 23.0) == doctest::Approx(7 * 6.0 / 23.0).epsilon(1e-15));
  // Scale of either side does not matter after normalization.
  a[0] = 40;
  CHECK(emd_1d(a, b, 1.0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("matches sorted transport on random slices") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12);
    std::vector<double> p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform() < 0.3 ? 0.0 : std::floor(rng.uniform(0, 30));
      q[i] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0, 30);
    }
    CHECK(std::fabs(emd_1d(p, q, 0.25) - oracle::sorted_transport(p, q, 0.25)) <= 1e-10);
  }
}

TEST_CASE("symmetric and length-checked") {
  const std::vector<double> a{1, 0, 3}, b{0, 2, 2};
  CHECK(emd_1d(a, b, 1.0) == doctest::Approx(emd_1d(b, a, 1.0)).epsilon(1e-15));
  const std::vector<double> c{1, 2};
  CHECK_THROWS_AS(emd_1d(a, c, 1.0), ValidationError);
}
