#pragma once

#include <span>

#include "adattn/types.hpp"

namespace adattn {

// Change of variables z = (alpha-1)*s - (m-1) with m = (alpha-1)*max(s).
// Entries equal to the row maximum become exactly 1. Throws
// std::invalid_argument when alpha <= 1 or every entry is masked.
CenteredScores center_scores(const ScoreVector& s, double alpha);

// Threshold objective on centered scores,
//   f(tau)  = -1 + sum_{z_i > tau} (z_i - tau)^(1/(alpha-1)),
// with its first two derivatives. Total for every real tau. Terms raised to a
// negative exponent clamp their base at 1e-12 so f1/f2 stay finite near the
// support boundary.
FDerivatives f_eval(const CenteredScores& z, double tau);

// Sort-based exact threshold, alpha in {1.5, 2.0} only. Machine-precision
// root of f; ties at the support boundary all land at probability zero
// either way.
ThresholdSolution solve_exact(const CenteredScores& z);

// Bisection on the bracket [0, 1 - n^(1-alpha)], stopping at
// |f(tau)| <= params.tol or params.max_iters halvings. `iterates`, when
// given, receives every midpoint in order.
ThresholdSolution solve_bisection(const CenteredScores& z, const EntmaxParams& params,
                                  std::vector<double>* iterates = nullptr);

// p_i = max(z_i - tau, 0)^(1/(alpha-1)), no renormalisation. Masked entries
// come out exactly 0.
Probabilities entmax_apply(const CenteredScores& z, double tau);

struct VjpResult {
  std::vector<double> ds;
  double delta = 0.0;
};

// Jacobian-transpose product of the mapping scores -> probabilities:
//   u_i = p_i^(2-alpha) (0 off support), delta = <u,dp>/<u,1>,
//   ds_i = u_i * (dp_i - delta).
// Throws std::invalid_argument when p is all zero or sizes differ.
VjpResult entmax_vjp(const Probabilities& p, std::span<const double> dp, double alpha);

}  // namespace adattn
