#pragma once

#include <cmath>
#include <limits>

#include "adattn/hybrid.hpp"
#include "adattn/types.hpp"

namespace adattn::detail {

// pow with the exponents that dominate the hot paths special-cased:
// alpha = 2 gives exponent 1, alpha = 1.5 gives 2 forward and 0.5 backward.
inline double pow_e(double base, double e) {
  if (e == 1.0) return base;
  if (e == 2.0) return base * base;
  if (e == 0.0) return 1.0;
  if (e == 0.5) return std::sqrt(base);
  return std::pow(base, e);
}

constexpr double kStepDenomFloor = 1e-300;

struct StepProposal {
  double tau;
  StepKind kind;
};

// One safeguarded root-refinement step from tau, where d holds f and its
// derivatives there. Halley for alpha <= 1.5, Newton up to 2, secant above
// (sec_tau/sec_f is the partner point). Anything non-finite, outside
// [lo, hi], or over a vanishing denominator turns into the midpoint.
inline StepProposal propose_step(double alpha, double tau, const FDerivatives& d,
                                 double sec_tau, double sec_f, double lo, double hi) {
  double prop;
  StepKind kind;
  if (alpha <= 1.5) {
    kind = StepKind::kHalley;
    const double denom = 2.0 * d.f1 * d.f1 - d.f * d.f2;
    prop = std::abs(denom) < kStepDenomFloor ? std::numeric_limits<double>::quiet_NaN()
                                             : tau - 2.0 * d.f * d.f1 / denom;
  } else if (alpha <= 2.0) {
    kind = StepKind::kNewton;
    prop = std::abs(d.f1) < kStepDenomFloor ? std::numeric_limits<double>::quiet_NaN()
                                            : tau - d.f / d.f1;
  } else {
    kind = StepKind::kSecant;
    const double denom = d.f - sec_f;
    prop = std::abs(denom) < kStepDenomFloor
               ? std::numeric_limits<double>::quiet_NaN()
               : tau - d.f * (tau - sec_tau) / denom;
  }
  if (!std::isfinite(prop) || prop < lo || prop > hi)
    return {0.5 * (lo + hi), StepKind::kBisection};
  return {prop, kind};
}

}  // namespace adattn::detail
