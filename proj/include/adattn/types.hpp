#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace adattn {

// Sentinel for excluded entries. Sorts below every finite score and drops out
// of all thresholded sums without special casing.
inline constexpr double kMaskedScore = -std::numeric_limits<double>::infinity();

// Raw scores for one row. `mask` is either empty (all visible) or has one
// byte per entry; nonzero means the entry is excluded.
struct ScoreVector {
  std::vector<double> values;
  std::vector<uint8_t> mask;
};

// Scores after the change of variables that pins the maximum at 1. Excluded
// entries hold kMaskedScore. `visible_n` counts the entries that remain,
// which is the n used for the threshold bracket 1 - n^(1-alpha).
struct CenteredScores {
  std::vector<double> z;
  double alpha = 0.0;
  int visible_n = 0;
};

struct EntmaxParams {
  double alpha = 1.5;
  double tol = 1e-6;
  int max_iters = 100;
};

// Sparse probability row. `support` lists the indices with p > 0, ascending.
struct Probabilities {
  std::vector<double> p;
  std::vector<int32_t> support;
};

struct ThresholdSolution {
  double tau = 0.0;
  double residual = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

// Value and first two derivatives of the threshold objective at one point.
struct FDerivatives {
  double f = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
};

}  // namespace adattn
