#pragma once

#include <string>

#include "adattn/types.hpp"

namespace adattn {

// kInit tags the starting point (iteration 0); kConverged replaces it when
// the start already meets the tolerance. Every later entry is tagged by the
// step that produced it.
enum class StepKind { kInit, kHalley, kNewton, kSecant, kBisection, kConverged };

const char* step_kind_name(StepKind k);

struct TraceEntry {
  double tau = 0.0;
  double residual = 0.0;
  StepKind kind = StepKind::kInit;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
};

struct SolverTrace {
  std::vector<TraceEntry> iterations;
  double final_tau = 0.0;
  bool converged = false;
};

// Safeguarded root refinement of the threshold objective inside a known
// bracket. Step family by alpha: Halley for alpha <= 1.5, Newton for
// 1.5 < alpha <= 2, secant above (first secant step pairs init with the
// opposite-sign bracket endpoint). Proposals that leave the bracket or hit a
// vanishing denominator fall back to the bracket midpoint. Requires
// f(lo) >= 0 >= f(hi) and init inside [lo, hi].
SolverTrace hybrid_solve(const CenteredScores& z, double init, double bracket_lo,
                         double bracket_hi, const EntmaxParams& params);

// One benchmark measurement: mean |tau_k - tau*| over the runs at refinement
// iteration k of the named method.
struct BenchRow {
  std::string method;
  int iteration = 0;
  double mae = 0.0;
};

// Convergence comparison on Gaussian score vectors: plain bisection, the
// hybrid solver from the bracket midpoint, and the hybrid solver from a
// histogram initialisation per requested bin count (method "hist-B<bins>").
// Iteration 0 is each method's starting point. Deterministic in `seed`.
std::vector<BenchRow> solver_bench(int n, double alpha, const std::vector<int>& bins_list,
                                   int runs, uint64_t seed, int iters = 10);

}  // namespace adattn
