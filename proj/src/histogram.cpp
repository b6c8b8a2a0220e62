#include "adattn/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "internal.hpp"

namespace adattn {

using detail::pow_e;

namespace {

inline double rep_offset(BinningMode mode) {
  switch (mode) {
    case BinningMode::kLeftEdge: return 0.0;
    case BinningMode::kRightEdge: return 1.0;
    case BinningMode::kCentered: return 0.5;
  }
  return 0.0;
}

}  // namespace

Histogram build_histogram(const CenteredScores& z, int bins) {
  if (bins < 2) throw std::invalid_argument("build_histogram: bins must be >= 2");
  Histogram h;
  h.bins = bins;
  h.width = 1.0 / bins;
  h.counts.assign(bins, 0);
  for (double zi : z.z) {
    if (!(zi >= 0.0)) continue;
    const int k = std::min(int(bins * zi), bins - 1);
    ++h.counts[k];
  }
  return h;
}

double f_h_eval(const Histogram& h, double tau, double alpha, BinningMode mode) {
  const double e0 = 1.0 / (alpha - 1.0);
  const double off = rep_offset(mode);
  double sum = 0.0;
  for (int k = 0; k < h.bins; ++k) {
    if (h.counts[k] == 0) continue;
    const double t = (k + off) * h.width - tau;
    if (t > 0.0) sum += double(h.counts[k]) * pow_e(t, e0);
  }
  return sum - 1.0;
}

namespace {

// Bisection on f_h used for general alpha and for the test-only binning
// modes. Stops when the interval narrows to 1e-10 and returns the endpoint
// with f_h >= 0, so the result never overshoots the surrogate root.
double bisect_f_h(const Histogram& h, double alpha, BinningMode mode, double lo,
                  double hi) {
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = f_h_eval(h, mid, alpha, mode);
    if (v == 0.0) return mid;
    if (v > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

HistogramSolution solve_histogram(const Histogram& h, double alpha, BinningMode mode) {
  if (!(alpha > 1.0))
    throw std::invalid_argument("solve_histogram: alpha must exceed 1");
  uint64_t total = 0;
  for (uint32_t c : h.counts) total += c;
  if (total == 0) throw std::invalid_argument("solve_histogram: empty histogram");

  const int B = h.bins;
  const double w = h.width;
  const double off = rep_offset(mode);

  HistogramSolution sol;
  sol.width = w;

  if (mode != BinningMode::kLeftEdge) {
    // Test-only modes: plain bisection over the representative range.
    const double vmax = (B - 1 + off) * w;
    double tau = 0.0;
    if (f_h_eval(h, 0.0, alpha, mode) >= 0.0)
      tau = bisect_f_h(h, alpha, mode, 0.0, vmax);
    sol.tau_h = tau;
    sol.bracket_floor = std::min(int(tau * B), B - 1);
    for (int k = sol.bracket_floor + 1; k < B; ++k) {
      const double v = (k + off) * w;
      sol.s0 += h.counts[k];
      sol.s1 += h.counts[k] * v;
      sol.s2 += h.counts[k] * v * v;
    }
    return sol;
  }

  // Scan edges top-down. At edge k/B the active bins are exactly {k' > k};
  // the prefix sums cover them, so f_h(k/B) has a closed form for the two
  // polynomial alphas.
  const double e0 = 1.0 / (alpha - 1.0);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  int floor_k = -1;
  for (int k = B - 1; k >= 0; --k) {
    const double tau = k * w;
    double fh;
    if (e0 == 1.0)
      fh = s1 - tau * s0 - 1.0;
    else if (e0 == 2.0)
      fh = s2 - 2.0 * tau * s1 + tau * tau * s0 - 1.0;
    else
      fh = f_h_eval(h, tau, alpha, mode);
    if (fh >= 0.0) {
      floor_k = k;
      break;
    }
    // Bin k becomes active below its own edge.
    const double v = k * w;
    s0 += h.counts[k];
    s1 += h.counts[k] * v;
    s2 += h.counts[k] * v * v;
  }

  if (floor_k < 0) {
    // Even f_h(0) < 0: the surrogate root would be negative, but the true
    // threshold is never below 0, so clamp.
    sol.tau_h = 0.0;
    sol.bracket_floor = 0;
    sol.s0 = s0 - h.counts[0];
    sol.s1 = s1;
    sol.s2 = s2;
    return sol;
  }

  sol.bracket_floor = floor_k;
  sol.s0 = s0;
  sol.s1 = s1;
  sol.s2 = s2;

  const double lo = floor_k * w;
  const double hi = (floor_k + 1) * w;
  double tau;
  if (e0 == 1.0) {
    tau = (s1 - 1.0) / s0;
  } else if (e0 == 2.0) {
    const double disc = std::max(s1 * s1 - s0 * (s2 - 1.0), 0.0);
    tau = (s1 - std::sqrt(disc)) / s0;
  } else {
    tau = bisect_f_h(h, alpha, mode, lo, hi);
  }
  // The root is strictly below the upper edge (that edge scanned negative),
  // so keep the stored value there even if the closed form rounds up.
  sol.tau_h = std::clamp(tau, lo, std::nextafter(hi, lo));
  return sol;
}

std::pair<double, double> refine_bracket(const HistogramSolution& sol) {
  return {sol.tau_h, sol.tau_h + sol.width};
}

}  // namespace adattn
