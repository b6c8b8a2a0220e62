#pragma once

#include <utility>

#include "adattn/types.hpp"

namespace adattn {

// Equal-width bin counts over [0, 1]. Centered scores below 0 never enter
// the support, so they are not counted.
struct Histogram {
  std::vector<uint32_t> counts;
  int bins = 0;
  double width = 0.0;
};

// Which edge of a bin stands in for the scores inside it. LeftEdge is the
// production rule (threshold comes out at or below the true one, so no
// support is lost). The other two exist for the test suite.
enum class BinningMode { kLeftEdge, kRightEdge, kCentered };

struct HistogramSolution {
  double tau_h = 0.0;
  // Scan bracket floor k: tau_h lies in [k/B, (k+1)/B).
  int bracket_floor = 0;
  // Prefix sums over the bins strictly above the bracket floor:
  // s0 = sum H_k, s1 = sum H_k * v_k, s2 = sum H_k * v_k^2 with v_k the bin
  // representative value.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  double width = 0.0;
};

// Bin rule b(z) = min(floor(B*z), B-1); entries < 0 or masked are skipped.
// bins must be >= 2.
Histogram build_histogram(const CenteredScores& z, int bins);

// Histogram surrogate of the threshold objective,
//   f_h(tau) = -1 + sum_k H_k * max(v_k - tau, 0)^(1/(alpha-1)).
double f_h_eval(const Histogram& h, double tau, double alpha,
                BinningMode mode = BinningMode::kLeftEdge);

// Root of the surrogate. Scans edges k = B-1 .. 0 with running prefix sums,
// stops at the largest edge with f_h >= 0, then solves in closed form for
// alpha in {1.5, 2} and by bisection (tol 1e-10) otherwise. When every edge
// is negative the threshold clamps to 0. Throws std::invalid_argument on an
// empty histogram or alpha <= 1.
HistogramSolution solve_histogram(const Histogram& h, double alpha,
                                  BinningMode mode = BinningMode::kLeftEdge);

// [tau_h, tau_h + width]: always straddles the true threshold, since
// f(tau_h) >= 0 >= f(tau_h + width).
std::pair<double, double> refine_bracket(const HistogramSolution& sol);

}  // namespace adattn
