#pragma once

#include <stdexcept>
#include <string>

namespace manyiv {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input fails validation (non-finite values, dimension mismatch, bad options).
struct InvalidInput : Error {
  using Error::Error;
};

// A design matrix lost rank where full rank is required.
struct RankCollapse : Error {
  using Error::Error;
};

// A ratio estimator's denominator is numerically zero.
struct DegenerateDenominator : Error {
  using Error::Error;
};

// The first stage fits every observation exactly (no off-diagonal weight left).
struct SaturatedFirstStage : Error {
  using Error::Error;
};

}  // namespace manyiv
