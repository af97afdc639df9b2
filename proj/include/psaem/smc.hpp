#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/rng.hpp"

namespace psaem {

// Particles, weights and ancestor indices for t = 0..T. weights[t] are
// normalized (sum 1); log_weights[t] hold the unnormalized log values
// (w_0 = 1, w_t = p_theta(y_t | x_t) for t >= 1). ancestors[t][i] is the index
// of particle i's parent at t-1, defined for t = 1..T (ancestors[0] is empty).
// log_normalizer accumulates sum_t log((1/N) sum_i w_t^i), i.e. the filter's
// log likelihood estimate.
template <class State>
struct ParticleSystem {
  std::vector<std::vector<State>> particles;
  std::vector<std::vector<double>> log_weights;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<int>> ancestors;
  double log_normalizer = 0.0;

  int horizon() const { return static_cast<int>(particles.size()) - 1; }
  int num_particles() const { return particles.empty() ? 0 : static_cast<int>(particles[0].size()); }
};

namespace detail {

inline void normalize_or_throw(std::vector<double>& lw, std::vector<double>& w, int t,
                               double& log_normalizer, const char* what) {
  w = lw;
  const double log_mean = normalize_log_weights(w);
  if (!std::isfinite(log_mean))
    throw std::runtime_error(std::string(what) + ": all weights vanished at t=" + std::to_string(t));
  log_normalizer += log_mean;
}

}  // namespace detail

// Standard bootstrap particle filter with multinomial resampling at every
// step. exp(log_normalizer) is an unbiased estimate of p_theta(y_{1:T}).
template <StateSpaceModel M>
ParticleSystem<typename M::State> bootstrap_pf(const M& model, const typename M::Params& theta,
                                               const std::vector<typename M::Obs>& ys, int n,
                                               Rng& rng) {
  if (n < 1) throw std::invalid_argument("bootstrap_pf: need at least one particle");
  const int T = static_cast<int>(ys.size());
  ParticleSystem<typename M::State> ps;
  ps.particles.resize(T + 1);
  ps.log_weights.resize(T + 1);
  ps.weights.resize(T + 1);
  ps.ancestors.resize(T + 1);

  ps.particles[0].reserve(n);
  for (int i = 0; i < n; ++i) ps.particles[0].push_back(model.sample_initial(theta, rng));
  ps.log_weights[0].assign(n, 0.0);
  ps.weights[0].assign(n, 1.0 / n);

  for (int t = 1; t <= T; ++t) {
    const CategoricalDist resampler(ps.weights[t - 1]);
    ps.ancestors[t].resize(n);
    ps.particles[t].reserve(n);
    for (int i = 0; i < n; ++i) {
      const int a = resampler.draw(rng);
      ps.ancestors[t][i] = a;
      ps.particles[t].push_back(model.sample_transition(theta, ps.particles[t - 1][a], t, rng));
    }
    ps.log_weights[t].resize(n);
    for (int i = 0; i < n; ++i)
      ps.log_weights[t][i] = model.observation_logpdf(theta, ps.particles[t][i], ys[t - 1], t);
    detail::normalize_or_throw(ps.log_weights[t], ps.weights[t], t, ps.log_normalizer,
                               "bootstrap_pf");
  }
  return ps;
}

// Conditional particle filter with ancestor sampling. Particles 1..N-1 evolve
// freely, particle N is pinned to the conditional trajectory at every t, and
// its ancestor is drawn with Pr(a_t^N = j) proportional to
// w_{t-1}^j p_theta(x'_t | x_{t-1}^j). One run of this filter plus a backward
// trace defines one draw from the PGAS Markov kernel.
template <StateSpaceModel M>
ParticleSystem<typename M::State> cpfas_filter(const M& model, const typename M::Params& theta,
                                               const Trajectory<typename M::State>& x_cond,
                                               const std::vector<typename M::Obs>& ys, int n,
                                               Rng& rng) {
  if (n < 2) throw std::invalid_argument("cpfas: need N >= 2 (a conditional and a free particle)");
  const int T = static_cast<int>(ys.size());
  if (static_cast<int>(x_cond.size()) != T + 1)
    throw std::invalid_argument("cpfas: conditional trajectory length must be T+1");

  ParticleSystem<typename M::State> ps;
  ps.particles.resize(T + 1);
  ps.log_weights.resize(T + 1);
  ps.weights.resize(T + 1);
  ps.ancestors.resize(T + 1);

  ps.particles[0].reserve(n);
  for (int i = 0; i < n - 1; ++i) ps.particles[0].push_back(model.sample_initial(theta, rng));
  ps.particles[0].push_back(x_cond[0]);
  ps.log_weights[0].assign(n, 0.0);
  ps.weights[0].assign(n, 1.0 / n);

  std::vector<double> as_logits(n);
  for (int t = 1; t <= T; ++t) {
    const CategoricalDist resampler(ps.weights[t - 1]);
    ps.ancestors[t].resize(n);
    ps.particles[t].reserve(n);
    for (int i = 0; i < n - 1; ++i) {
      const int a = resampler.draw(rng);
      ps.ancestors[t][i] = a;
      ps.particles[t].push_back(model.sample_transition(theta, ps.particles[t - 1][a], t, rng));
    }
    for (int j = 0; j < n; ++j)
      as_logits[j] =
          ps.log_weights[t - 1][j] + model.transition_logpdf(theta, ps.particles[t - 1][j], x_cond[t], t);
    int a_cond;
    try {
      a_cond = categorical_draw_log(as_logits, rng);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(
          "cpfas: ancestor-sampling weights vanished at t=" + std::to_string(t) +
          " (conditional trajectory unreachable under theta)");
    }
    ps.ancestors[t][n - 1] = a_cond;
    ps.particles[t].push_back(x_cond[t]);

    ps.log_weights[t].resize(n);
    for (int i = 0; i < n; ++i)
      ps.log_weights[t][i] = model.observation_logpdf(theta, ps.particles[t][i], ys[t - 1], t);
    detail::normalize_or_throw(ps.log_weights[t], ps.weights[t], t, ps.log_normalizer, "cpfas");
  }
  return ps;
}

// Draws a terminal index proportional to the final weights and follows the
// ancestor lineage backwards.
template <class State>
Trajectory<State> extract_trajectory(const ParticleSystem<State>& ps, Rng& rng) {
  const int T = ps.horizon();
  Trajectory<State> out(T + 1);
  int idx = categorical_draw(ps.weights[T], rng);
  out[T] = ps.particles[T][idx];
  for (int t = T - 1; t >= 0; --t) {
    idx = ps.ancestors[t + 1][idx];
    out[t] = ps.particles[t][idx];
  }
  return out;
}

// One draw from the Markov kernel defined by the conditional particle filter
// with ancestor sampling.
template <StateSpaceModel M>
Trajectory<typename M::State> cpfas_kernel(const M& model, const typename M::Params& theta,
                                           const Trajectory<typename M::State>& x_cond,
                                           const std::vector<typename M::Obs>& ys, int n,
                                           Rng& rng) {
  const auto ps = cpfas_filter(model, theta, x_cond, ys, n, rng);
  return extract_trajectory(ps, rng);
}

// Forward filter backward simulator on an existing particle system. Backward
// weights are w_t^i p_theta(x*_{t+1} | x_t^i), evaluated exactly (O(N) per
// draw per step). Paths are independent draws approximating the joint
// smoothing distribution.
template <StateSpaceModel M>
std::vector<Trajectory<typename M::State>> ffbsi(const ParticleSystem<typename M::State>& ps,
                                                 const M& model, const typename M::Params& theta,
                                                 int n_paths, Rng& rng) {
  const int T = ps.horizon();
  const int n = ps.num_particles();
  std::vector<Trajectory<typename M::State>> paths(n_paths);
  std::vector<double> logits(n);
  for (auto& path : paths) {
    path.resize(T + 1);
    path[T] = ps.particles[T][categorical_draw(ps.weights[T], rng)];
    for (int t = T - 1; t >= 0; --t) {
      for (int i = 0; i < n; ++i)
        logits[i] =
            ps.log_weights[t][i] + model.transition_logpdf(theta, ps.particles[t][i], path[t + 1], t + 1);
      int idx;
      try {
        idx = categorical_draw_log(logits, rng);
      } catch (const std::invalid_argument&) {
        throw std::runtime_error("ffbsi: backward weights vanished at t=" + std::to_string(t));
      }
      path[t] = ps.particles[t][idx];
    }
  }
  return paths;
}

}  // namespace psaem
