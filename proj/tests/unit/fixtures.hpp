#pragma once

#include <json.hpp>

#include "unit/helpers.hpp"

namespace testing_support {

inline nlohmann::json stat_fixtures() {
  return nlohmann::json::parse(slurp(std::filesystem::path(AFV_FIXTURE_DIR) / "stat_fixtures.json"));
}

// Relative error with an absolute floor for values near zero.
inline double rel_err(double got, double want) {
  const double scale = std::max(std::fabs(want), 1e-300);
  return std::fabs(got - want) / scale;
}

}  // namespace testing_support
