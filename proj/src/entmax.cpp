#include "adattn/entmax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "internal.hpp"

namespace adattn {

using detail::pow_e;

namespace {

// Base clamp for negative exponents; keeps f1/f2 finite as tau approaches a
// score from below.
constexpr double kDerivBaseFloor = 1e-12;

}  // namespace

CenteredScores center_scores(const ScoreVector& s, double alpha) {
  if (!(alpha > 1.0))
    throw std::invalid_argument("center_scores: alpha must exceed 1");
  const size_t n = s.values.size();
  if (n == 0) throw std::invalid_argument("center_scores: empty score vector");
  if (!s.mask.empty() && s.mask.size() != n)
    throw std::invalid_argument("center_scores: mask size mismatch");

  double max_val = kMaskedScore;
  int visible = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!s.mask.empty() && s.mask[i]) continue;
    const double v = s.values[i];
    if (!std::isfinite(v))
      throw std::invalid_argument("center_scores: non-finite unmasked score");
    max_val = std::max(max_val, v);
    ++visible;
  }
  if (visible == 0)
    throw std::invalid_argument("center_scores: every entry is masked");

  CenteredScores out;
  out.alpha = alpha;
  out.visible_n = visible;
  out.z.resize(n);
  for (size_t i = 0; i < n; ++i) {
    if (!s.mask.empty() && s.mask[i]) {
      out.z[i] = kMaskedScore;
    } else if (s.values[i] == max_val) {
      out.z[i] = 1.0;
    } else {
      out.z[i] = (alpha - 1.0) * (s.values[i] - max_val) + 1.0;
    }
  }
  return out;
}

FDerivatives f_eval(const CenteredScores& z, double tau) {
  const double e0 = 1.0 / (z.alpha - 1.0);
  const double e1 = e0 - 1.0;
  const double e2 = e0 - 2.0;
  double sum0 = 0.0, sum1 = 0.0, sum2 = 0.0;
  for (double zi : z.z) {
    const double t = zi - tau;
    if (!(t > 0.0)) continue;
    sum0 += pow_e(t, e0);
    const double t1 = e1 < 0.0 ? std::max(t, kDerivBaseFloor) : t;
    sum1 += pow_e(t1, e1);
    const double t2 = e2 < 0.0 ? std::max(t, kDerivBaseFloor) : t;
    sum2 += pow_e(t2, e2);
  }
  FDerivatives d;
  d.f = sum0 - 1.0;
  d.f1 = -e0 * sum1;
  d.f2 = e0 * (e0 - 1.0) * sum2;
  return d;
}

ThresholdSolution solve_exact(const CenteredScores& z) {
  if (z.alpha != 1.5 && z.alpha != 2.0)
    throw std::invalid_argument("solve_exact: alpha must be exactly 1.5 or 2.0");

  std::vector<double> sorted;
  sorted.reserve(z.z.size());
  for (double v : z.z)
    if (v != kMaskedScore) sorted.push_back(v);
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<double>());

  const int n = int(sorted.size());
  double tau = 0.0;
  if (z.alpha == 2.0) {
    // f is piecewise linear: over the top-k entries, tau_k = (sum_k - 1)/k.
    double cumsum = 0.0;
    for (int k = 1; k <= n; ++k) {
      cumsum += sorted[k - 1];
      const double cand = (cumsum - 1.0) / k;
      if (k == n || sorted[k] <= cand) {
        tau = cand;
        break;
      }
    }
  } else {
    // alpha = 1.5: over the top-k entries sum (z - tau)^2 = 1, a quadratic
    // whose smaller root keeps every active entry above tau.
    double s1 = 0.0, s2 = 0.0;
    for (int k = 1; k <= n; ++k) {
      s1 += sorted[k - 1];
      s2 += sorted[k - 1] * sorted[k - 1];
      const double mean = s1 / k;
      const double disc = std::max(1.0 / k - (s2 / k - mean * mean), 0.0);
      const double cand = mean - std::sqrt(disc);
      if (k == n || sorted[k] <= cand) {
        tau = cand;
        break;
      }
    }
  }

  ThresholdSolution sol;
  sol.tau = tau;
  sol.residual = f_eval(z, tau).f;
  sol.bracket_lo = tau;
  sol.bracket_hi = tau;
  return sol;
}

ThresholdSolution solve_bisection(const CenteredScores& z, const EntmaxParams& params,
                                  std::vector<double>* iterates) {
  if (params.alpha != z.alpha)
    throw std::invalid_argument("solve_bisection: params.alpha disagrees with scores");
  if (params.max_iters < 1)
    throw std::invalid_argument("solve_bisection: max_iters must be positive");

  double lo = 0.0;
  double hi = 1.0 - std::pow(double(z.visible_n), 1.0 - z.alpha);

  ThresholdSolution sol;
  if (hi <= lo) {
    // Single visible entry: the bracket degenerates to tau = 0.
    sol.tau = 0.0;
    sol.residual = f_eval(z, 0.0).f;
    sol.bracket_lo = sol.bracket_hi = 0.0;
    if (iterates) iterates->push_back(0.0);
    return sol;
  }

  double tau = lo, res = 0.0;
  for (int it = 0; it < params.max_iters; ++it) {
    tau = 0.5 * (lo + hi);
    res = f_eval(z, tau).f;
    if (iterates) iterates->push_back(tau);
    if (std::abs(res) <= params.tol) break;
    if (res > 0.0)
      lo = tau;
    else
      hi = tau;
  }
  sol.tau = tau;
  sol.residual = res;
  sol.bracket_lo = lo;
  sol.bracket_hi = hi;
  return sol;
}

Probabilities entmax_apply(const CenteredScores& z, double tau) {
  const double e0 = 1.0 / (z.alpha - 1.0);
  Probabilities out;
  out.p.resize(z.z.size());
  for (size_t i = 0; i < z.z.size(); ++i) {
    const double t = z.z[i] - tau;
    if (t > 0.0) {
      out.p[i] = pow_e(t, e0);
      out.support.push_back(int32_t(i));
    } else {
      out.p[i] = 0.0;
    }
  }
  return out;
}

VjpResult entmax_vjp(const Probabilities& p, std::span<const double> dp, double alpha) {
  if (dp.size() != p.p.size())
    throw std::invalid_argument("entmax_vjp: dp size mismatch");

  const size_t n = p.p.size();
  std::vector<double> u(n, 0.0);
  double u_sum = 0.0, ud_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (p.p[i] > 0.0) {
      u[i] = pow_e(p.p[i], 2.0 - alpha);
      u_sum += u[i];
      ud_sum += u[i] * dp[i];
    }
  }
  if (u_sum == 0.0)
    throw std::invalid_argument("entmax_vjp: probabilities are all zero");

  VjpResult out;
  out.delta = ud_sum / u_sum;
  out.ds.resize(n);
  for (size_t i = 0; i < n; ++i) out.ds[i] = u[i] * (dp[i] - out.delta);
  return out;
}

}  // namespace adattn
