#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <span>
#include <stdexcept>

#include "psaem/core.hpp"
#include "psaem/math.hpp"

namespace psaem {

struct BetaHyper {
  double a = 1.0;
  double b = 1.0;
};

// Sufficient statistics for M Beta-distributed probabilities:
// (M, sum log theta_m, sum log(1 - theta_m)). Each theta_m must lie strictly
// inside (0, 1).
inline Vector beta_prior_suffstats(std::span<const double> thetas) {
  Vector s = Vector::Zero(3);
  s[0] = static_cast<double>(thetas.size());
  for (double th : thetas) {
    if (!(th > 0.0) || !(th < 1.0))
      throw std::invalid_argument("beta_prior_suffstats: theta must lie in (0, 1)");
    s[1] += std::log(th);
    s[2] += std::log1p(-th);
  }
  return s;
}

// Beta log likelihood of the statistics, M [lgamma(a+b) - lgamma(a) -
// lgamma(b)] + (a-1) s1 + (b-1) s2; concave in (a, b).
inline double beta_prior_loglik(const Vector& s, double a, double b) {
  return s[0] * (std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b)) + (a - 1.0) * s[1] +
         (b - 1.0) * s[2];
}

// Maximizes the Beta likelihood of the statistics by Newton iteration with a
// positivity-preserving line search. The objective is globally concave in
// (a, b) (exponential-family log likelihood), so the Newton direction always
// ascends. The returned point has gradient norm below 1e-8; failure to reach
// that is reported, never swallowed.
inline BetaHyper beta_prior_mstep(const Vector& s) {
  if (s.size() != 3) throw std::invalid_argument("beta_prior_mstep: statistic dimension");
  const double m = s[0];
  if (!(m >= 1.0)) throw std::invalid_argument("beta_prior_mstep: need at least one theta");
  if (!std::isfinite(s[1]) || !std::isfinite(s[2]) || s[1] >= 0.0 || s[2] >= 0.0)
    throw std::invalid_argument("beta_prior_mstep: log statistics must be finite and negative");

  double a = 1.0, b = 1.0;
  double f = beta_prior_loglik(s, a, b);
  // The objective is a difference of terms of magnitude ~ m |s|, so its
  // evaluation noise is about eps * that scale; the monotonicity safeguard
  // must not reject Newton steps whose true ascent is below that noise.
  const double f_noise = 4e-13 * (m + std::abs(s[1]) + std::abs(s[2]));
  for (int it = 0; it < 500; ++it) {
    const double ga = m * (boost::math::digamma(a + b) - boost::math::digamma(a)) + s[1];
    const double gb = m * (boost::math::digamma(a + b) - boost::math::digamma(b)) + s[2];
    if (std::sqrt(ga * ga + gb * gb) < 1e-8) return BetaHyper{a, b};

    const double tab = boost::math::trigamma(a + b);
    const double haa = m * (tab - boost::math::trigamma(a));
    const double hbb = m * (tab - boost::math::trigamma(b));
    const double hab = m * tab;
    const double det = haa * hbb - hab * hab;
    double da, db;
    if (std::isfinite(det) && det > 0.0 && haa < 0.0) {
      da = -(hbb * ga - hab * gb) / det;
      db = -(haa * gb - hab * ga) / det;
    } else {
      da = ga / m;
      db = gb / m;
    }
    double scale = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 80; ++bt) {
      const double na = a + scale * da, nb = b + scale * db;
      if (na > 0.0 && nb > 0.0) {
        const double fn = beta_prior_loglik(s, na, nb);
        if (std::isfinite(fn) && fn >= f - f_noise) {
          a = na;
          b = nb;
          f = std::max(f, fn);
          moved = true;
          break;
        }
      }
      scale *= 0.5;
    }
    if (!moved)
      throw std::runtime_error("beta_prior_mstep: line search failed to improve the likelihood");
  }
  throw std::runtime_error("beta_prior_mstep: optimizer did not reach gradient tolerance 1e-8");
}

}  // namespace psaem
