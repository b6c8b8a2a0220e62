#include "adattn/hybrid.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "adattn/entmax.hpp"
#include "adattn/histogram.hpp"
#include "adattn/rng.hpp"
#include "internal.hpp"

namespace adattn {

const char* step_kind_name(StepKind k) {
  switch (k) {
    case StepKind::kInit: return "init";
    case StepKind::kHalley: return "halley";
    case StepKind::kNewton: return "newton";
    case StepKind::kSecant: return "secant";
    case StepKind::kBisection: return "bisection";
    case StepKind::kConverged: return "converged";
  }
  return "?";
}

namespace {

// A histogram bracket endpoint can coincide with the root itself, where the
// recomputed residual rounds to either side of zero. The straddle check
// tolerates that much.
constexpr double kStraddleSlack = 1e-9;

}  // namespace

SolverTrace hybrid_solve(const CenteredScores& z, double init, double bracket_lo,
                         double bracket_hi, const EntmaxParams& params) {
  if (params.alpha != z.alpha)
    throw std::invalid_argument("hybrid_solve: params.alpha disagrees with scores");
  if (!(bracket_lo <= bracket_hi))
    throw std::invalid_argument("hybrid_solve: empty bracket");
  if (init < bracket_lo || init > bracket_hi)
    throw std::invalid_argument("hybrid_solve: init outside bracket");
  const double f_at_lo = f_eval(z, bracket_lo).f;
  const double f_at_hi = f_eval(z, bracket_hi).f;
  if (f_at_lo < -kStraddleSlack || f_at_hi > kStraddleSlack)
    throw std::invalid_argument("hybrid_solve: bracket does not straddle the root");

  double lo = bracket_lo, hi = bracket_hi;
  double tau = init;
  FDerivatives d = f_eval(z, tau);

  // Opposite-sign partner for the first secant step.
  double sec_tau, sec_f;
  if (d.f > 0.0) {
    sec_tau = bracket_hi;
    sec_f = f_at_hi;
  } else {
    sec_tau = bracket_lo;
    sec_f = f_at_lo;
  }

  SolverTrace trace;
  auto shrink = [&](double t, double fv) {
    if (fv > 0.0)
      lo = t;
    else
      hi = t;
  };
  auto record = [&](double t, double fv, StepKind kind) {
    trace.iterations.push_back({t, fv, kind, lo, hi});
  };

  shrink(tau, d.f);
  const bool done_at_init = std::abs(d.f) <= params.tol;
  record(tau, d.f, done_at_init ? StepKind::kConverged : StepKind::kInit);
  if (done_at_init) {
    trace.final_tau = tau;
    trace.converged = true;
    return trace;
  }

  // A bisection fallback late in the run can replace a near-root iterate
  // with a distant bracket midpoint, so the answer is the best evaluated
  // point, not the last one.
  double best_tau = tau, best_af = std::abs(d.f);
  for (int it = 0; it < params.max_iters; ++it) {
    const auto [prop, kind] = detail::propose_step(z.alpha, tau, d, sec_tau, sec_f, lo, hi);

    sec_tau = tau;
    sec_f = d.f;
    tau = prop;
    d = f_eval(z, tau);
    shrink(tau, d.f);
    record(tau, d.f, kind);
    if (std::abs(d.f) < best_af) {
      best_tau = tau;
      best_af = std::abs(d.f);
    }
    if (std::abs(d.f) <= params.tol) {
      trace.converged = true;
      break;
    }
  }
  trace.final_tau = best_tau;
  return trace;
}

std::vector<BenchRow> solver_bench(int n, double alpha, const std::vector<int>& bins_list,
                                   int runs, uint64_t seed, int iters) {
  if (n < 2 || runs < 1 || iters < 1)
    throw std::invalid_argument("solver_bench: bad n/runs/iters");

  struct Acc {
    std::string method;
    std::vector<double> abs_err_sum;
  };
  std::vector<Acc> accs;
  accs.push_back({"bisection", std::vector<double>(iters + 1, 0.0)});
  accs.push_back({"hybrid", std::vector<double>(iters + 1, 0.0)});
  for (int b : bins_list)
    accs.push_back({"hist-B" + std::to_string(b), std::vector<double>(iters + 1, 0.0)});

  // Errors past a method's last iterate carry its final value forward.
  auto tally = [&](Acc& acc, const std::vector<double>& taus, double tau_star) {
    double last = taus.empty() ? 0.0 : taus.back();
    for (int k = 0; k <= iters; ++k) {
      const double t = k < int(taus.size()) ? taus[k] : last;
      acc.abs_err_sum[k] += std::abs(t - tau_star);
    }
  };

  for (int r = 0; r < runs; ++r) {
    Xoshiro256pp rng(seed + uint64_t(r));
    ScoreVector s;
    s.values.resize(n);
    for (double& v : s.values) v = rng.gaussian();
    const CenteredScores z = center_scores(s, alpha);

    double tau_star;
    if (alpha == 1.5 || alpha == 2.0) {
      tau_star = solve_exact(z).tau;
    } else {
      EntmaxParams ref{alpha, 1e-14, 200};
      tau_star = solve_bisection(z, ref).tau;
    }

    const double upper = 1.0 - std::pow(double(z.visible_n), 1.0 - alpha);
    EntmaxParams params{alpha, 0.0, iters};

    {
      std::vector<double> mids;
      EntmaxParams bp{alpha, 0.0, iters + 1};
      solve_bisection(z, bp, &mids);
      tally(accs[0], mids, tau_star);
    }
    {
      SolverTrace t = hybrid_solve(z, 0.5 * upper, 0.0, upper, params);
      std::vector<double> taus;
      for (const auto& e : t.iterations) taus.push_back(e.tau);
      tally(accs[1], taus, tau_star);
    }
    for (size_t bi = 0; bi < bins_list.size(); ++bi) {
      const Histogram h = build_histogram(z, bins_list[bi]);
      const HistogramSolution hs = solve_histogram(h, alpha);
      const auto [lo, hi] = refine_bracket(hs);
      SolverTrace t = hybrid_solve(z, hs.tau_h, lo, hi, params);
      std::vector<double> taus;
      for (const auto& e : t.iterations) taus.push_back(e.tau);
      tally(accs[2 + bi], taus, tau_star);
    }
  }

  std::vector<BenchRow> rows;
  for (const auto& acc : accs)
    for (int k = 0; k <= iters; ++k)
      rows.push_back({acc.method, k, acc.abs_err_sum[k] / runs});
  return rows;
}

}  // namespace adattn
