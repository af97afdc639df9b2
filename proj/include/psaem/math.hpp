#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace psaem {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112353;

// log sum_i exp(v[i]) with max shift; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_normal_pdf(double x, double mean, double var) {
  if (!(var > 0.0)) throw std::invalid_argument("log_normal_pdf: variance must be positive");
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var)) - 0.5 * d * d / var;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Normalizes log weights in place to probabilities summing to one.
// Returns log of the normalizer mean, log((1/n) sum_i exp(lw_i)).
inline double normalize_log_weights(std::vector<double>& lw) {
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse)) return kNegInf;
  for (double& w : lw) w = std::exp(w - lse);
  return lse - std::log(static_cast<double>(lw.size()));
}

}  // namespace psaem
