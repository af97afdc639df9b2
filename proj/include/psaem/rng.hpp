#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/math.hpp"

namespace psaem {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

// Positionally derived child streams: the k-th/tag-th child of a base seed is
// the same no matter how many other children were created. Drivers use this so
// that structurally related runs (e.g. a Gibbs chain with a no-op parameter
// kernel vs. a plain PGAS chain) consume identical randomness per iteration.
struct StreamFork {
  std::uint64_t base;

  explicit StreamFork(std::uint64_t b) : base(b) {}
  explicit StreamFork(Rng& parent) : base(parent()) {}

  Rng at(std::uint64_t k, std::uint64_t tag = 0) const {
    return make_rng(splitmix64(base ^ splitmix64(k)) ^ splitmix64(tag + 0x51ed2701ULL));
  }
  std::uint64_t seed_at(std::uint64_t k, std::uint64_t tag = 0) const {
    return splitmix64(base ^ splitmix64(k)) ^ splitmix64(tag + 0x51ed2701ULL);
  }
};

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return mean + sd * std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double gamma_draw(Rng& rng, double shape, double scale = 1.0) {
  return std::gamma_distribution<double>(shape, scale)(rng);
}

inline double beta_draw(Rng& rng, double a, double b) {
  const double x = gamma_draw(rng, a);
  const double y = gamma_draw(rng, b);
  return x / (x + y);
}

// Draws index j with probability w[j] / sum(w). Weights must be nonnegative
// and finite with at least one strictly positive entry.
inline int categorical_draw(std::span<const double> w, Rng& rng) {
  if (w.empty()) throw std::invalid_argument("categorical_draw: empty weight vector");
  double total = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < 0.0)
      throw std::invalid_argument("categorical_draw: weights must be finite and nonnegative");
    total += x;
  }
  if (!(total > 0.0)) throw std::invalid_argument("categorical_draw: all weights are zero");
  double u = uniform01(rng) * total;
  for (std::size_t j = 0; j + 1 < w.size(); ++j) {
    u -= w[j];
    if (u < 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(w.size()) - 1;
}

// Same draw with unnormalized log weights; all-(-inf) input is an error.
inline int categorical_draw_log(std::span<const double> lw, Rng& rng) {
  double m = kNegInf;
  for (double x : lw) {
    if (std::isnan(x) || x == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("categorical_draw_log: weight is nan or +inf");
    m = std::max(m, x);
  }
  if (!std::isfinite(m))
    throw std::invalid_argument("categorical_draw_log: all log weights are -inf");
  double total = 0.0;
  for (double x : lw) total += std::exp(x - m);
  double u = uniform01(rng) * total;
  for (std::size_t j = 0; j + 1 < lw.size(); ++j) {
    u -= std::exp(lw[j] - m);
    if (u < 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(lw.size()) - 1;
}

// Precomputed cdf for repeated draws from one weight vector (O(log n) each).
class CategoricalDist {
 public:
  explicit CategoricalDist(std::span<const double> w) : cdf_(w.size()) {
    double c = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!std::isfinite(w[j]) || w[j] < 0.0)
        throw std::invalid_argument("CategoricalDist: weights must be finite and nonnegative");
      c += w[j];
      cdf_[j] = c;
    }
    if (cdf_.empty() || !(cdf_.back() > 0.0))
      throw std::invalid_argument("CategoricalDist: all weights are zero");
  }

  int draw(Rng& rng) const {
    const double u = uniform01(rng) * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                     static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace psaem
