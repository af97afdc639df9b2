#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/kernels.hpp"
#include "psaem/math.hpp"
#include "psaem/rng.hpp"
#include "psaem/smc.hpp"

namespace psaem {

// Step lengths gamma_k = 1 for k <= warmup+1, (k - warmup)^(-alpha) after.
// alpha in (1/2, 1] guarantees sum gamma = inf and sum gamma^2 < inf after the
// constant prefix, and gamma_1 = 1 always holds.
struct StepSchedule {
  double alpha;
  int warmup;

  explicit StepSchedule(double alpha_, int warmup_ = 0) : alpha(alpha_), warmup(warmup_) {
    if (!(alpha > 0.5) || !(alpha <= 1.0))
      throw std::invalid_argument("StepSchedule: alpha must lie in (1/2, 1]");
    if (warmup < 0) throw std::invalid_argument("StepSchedule: warmup must be nonnegative");
  }

  double operator()(int k) const {
    if (k < 1) throw std::invalid_argument("StepSchedule: k must be >= 1");
    if (k <= warmup + 1) return 1.0;
    return std::pow(static_cast<double>(k - warmup), -alpha);
  }
};

inline double step_value(const StepSchedule& schedule, int k) { return schedule(k); }

// S_k = (1 - gamma) S_{k-1} + gamma S_new.
inline Vector sa_update(const Vector& stats_prev, const Vector& stat_new, double gamma) {
  if (stats_prev.size() != stat_new.size())
    throw std::invalid_argument("sa_update: statistic dimensions differ");
  if (!(gamma > 0.0) || !(gamma <= 1.0))
    throw std::invalid_argument("sa_update: gamma must lie in (0, 1]");
  return (1.0 - gamma) * stats_prev + gamma * stat_new;
}

struct LearnRecord {
  int k = 0;
  double gamma = 1.0;
  Vector estimate;      // theta_k (Fisherian) or eta_k (Bayesian)
  double overlap = 0.0; // consecutive-trajectory overlap; NaN where undefined
  int accepted = -1;    // PIMH acceptance flag, -1 where not applicable
  double seconds = 0.0; // cumulative wall clock
  std::int64_t propagations = 0;  // cumulative particle propagation count
  bool mixing_warning = false;
};

struct LearnTrace {
  std::vector<LearnRecord> records;
  Vector final_estimate;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Sliding-window mean of the overlap diagnostic; raising the flag is advisory
// only and never feeds back into the algorithm.
class OverlapMonitor {
 public:
  OverlapMonitor(double threshold, int window) : threshold_(threshold), window_(window) {}

  bool push(double overlap) {
    values_.push_back(overlap);
    sum_ += overlap;
    if (static_cast<int>(values_.size()) > window_) {
      sum_ -= values_.front();
      values_.pop_front();
    }
    return static_cast<int>(values_.size()) == window_ && sum_ / window_ > threshold_;
  }

 private:
  double threshold_;
  int window_;
  double sum_ = 0.0;
  std::deque<double> values_;
};

}  // namespace detail

// Trajectory source for the Monte Carlo EM E-step: a PGAS inner chain (the
// Markov-kernel reading of "run the sampler until convergence") or FFBSi
// backward draws from one bootstrap filter (the classical particle-smoothing
// baseline, whose support bias vanishes only as N grows).
enum class McemSampler { kPgas, kFfbsi };

struct McemOptions {
  int n_particles = 20;
  int j_samples = 10;   // trajectories averaged per EM iteration
  int burnin = 20;      // inner PGAS iterations discarded before averaging
  int n_iters = 50;
  McemSampler sampler = McemSampler::kPgas;
};

// Monte Carlo EM: each iteration draws J trajectories at the current theta,
// averages their sufficient statistics and applies the M-step. With the PGAS
// sampler the draws are the last J states of a fresh inner chain (initialized
// from a bootstrap filter extract, burnin sweeps discarded); with the FFBSi
// sampler they are backward-simulated paths from a single bootstrap filter.
template <ExpFamilyModel M>
LearnTrace mcem(const M& model, const typename M::Params& theta_init,
                const std::vector<typename M::Obs>& ys, const McemOptions& opt, Rng& rng) {
  if (opt.j_samples < 1) throw std::invalid_argument("mcem: need J >= 1");
  if (opt.n_particles < 2) throw std::invalid_argument("mcem: need N >= 2");
  if (!model.in_domain(theta_init))
    throw std::invalid_argument("mcem: theta_init outside the declared parameter domain");
  const auto T = static_cast<std::int64_t>(ys.size());
  StreamFork fork(rng);
  detail::Stopwatch clock;
  LearnTrace trace;
  trace.records.reserve(opt.n_iters);
  typename M::Params theta = theta_init;
  std::int64_t props = 0;
  for (int k = 1; k <= opt.n_iters; ++k) {
    Rng it_rng = fork.at(k, 0);
    Vector stats = Vector::Zero(model.suffstat_dim());
    const auto pf = bootstrap_pf(model, theta, ys, opt.n_particles, it_rng);
    props += static_cast<std::int64_t>(opt.n_particles) * T;
    if (opt.sampler == McemSampler::kPgas) {
      auto cond = extract_trajectory(pf, it_rng);
      for (int j = 1; j <= opt.burnin + opt.j_samples; ++j) {
        cond = cpfas_kernel(model, theta, cond, ys, opt.n_particles, it_rng);
        props += static_cast<std::int64_t>(opt.n_particles - 1) * T;
        if (j > opt.burnin) stats += model.suffstats(cond, ys);
      }
    } else {
      for (const auto& path : ffbsi(pf, model, theta, opt.j_samples, it_rng))
        stats += model.suffstats(path, ys);
    }
    stats /= static_cast<double>(opt.j_samples);
    theta = model.mstep(stats);
    trace.records.push_back(LearnRecord{k, 1.0, model.params_to_vector(theta),
                                        std::numeric_limits<double>::quiet_NaN(), -1,
                                        clock.seconds(), props, false});
  }
  trace.final_estimate = model.params_to_vector(theta);
  return trace;
}

struct PsaemOptions {
  int n_particles = 20;
  StepSchedule schedule{0.7, 0};
  int n_iters = 1000;
  int j_samples = 1;              // kernel sweeps averaged per iteration
  double overlap_threshold = 0.9; // advisory mixing warning level
  int overlap_window = 20;
};

// PSAEM for exponential-family models, Fisherian setting: one CPF-AS sweep
// conditioned on (x[k-1], theta_{k-1}), the convex statistic update, and the
// closed-form M-step. gamma_1 = 1 makes the S_0 = 0 initialization irrelevant.
template <ExpFamilyModel M>
LearnTrace psaem_fisherian(const M& model, const typename M::Params& theta_init,
                           const Trajectory<typename M::State>& x_init,
                           const std::vector<typename M::Obs>& ys, const PsaemOptions& opt,
                           Rng& rng) {
  if (opt.n_particles < 2) throw std::invalid_argument("psaem_fisherian: need N >= 2");
  if (opt.j_samples < 1) throw std::invalid_argument("psaem_fisherian: need J >= 1");
  if (!model.in_domain(theta_init))
    throw std::invalid_argument("psaem_fisherian: theta_init outside the declared parameter domain");
  const auto T = static_cast<std::int64_t>(ys.size());
  StreamFork fork(rng);
  detail::Stopwatch clock;
  detail::OverlapMonitor monitor(opt.overlap_threshold, opt.overlap_window);
  LearnTrace trace;
  trace.records.reserve(opt.n_iters);

  typename M::Params theta = theta_init;
  Trajectory<typename M::State> x = x_init;
  Vector stats = Vector::Zero(model.suffstat_dim());
  std::int64_t props = 0;
  for (int k = 1; k <= opt.n_iters; ++k) {
    Rng it_rng = fork.at(k, 0);
    Vector batch = Vector::Zero(model.suffstat_dim());
    double overlap = 0.0;
    for (int j = 0; j < opt.j_samples; ++j) {
      auto next = cpfas_kernel(model, theta, x, ys, opt.n_particles, it_rng);
      props += static_cast<std::int64_t>(opt.n_particles - 1) * T;
      overlap = overlap_diagnostic(x, next);
      x = std::move(next);
      batch += model.suffstats(x, ys);
    }
    batch /= static_cast<double>(opt.j_samples);
    const double gamma = opt.schedule(k);
    stats = sa_update(stats, batch, gamma);
    try {
      theta = model.mstep(stats);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("psaem_fisherian: iteration " + std::to_string(k) + ": " + e.what());
    }
    const bool warn = monitor.push(overlap);
    trace.records.push_back(LearnRecord{k, gamma, model.params_to_vector(theta), overlap, -1,
                                        clock.seconds(), props, warn});
  }
  trace.final_estimate = model.params_to_vector(theta);
  return trace;
}

// PSAEM for the Bayesian setting: CPF-AS sweep at theta[k-1], a theta kernel
// draw leaving p(theta | x, y) invariant, then the stochastic approximation
// runs on the prior-family statistics S_theta(theta[k]) with the
// hyperparameter M-step. The trajectory kernel and the theta kernel consume
// separate child streams (tags 0 and 1 of iteration k).
template <ExpFamilyModel M, class PriorFamily, class ThetaKernel>
LearnTrace psaem_bayesian(const M& model, const PriorFamily& prior,
                          const ThetaKernel& theta_kernel,
                          const typename PriorFamily::Hyper& eta_init,
                          const typename M::Params& theta_init,
                          const Trajectory<typename M::State>& x_init,
                          const std::vector<typename M::Obs>& ys, const PsaemOptions& opt,
                          Rng& rng) {
  if (opt.n_particles < 2) throw std::invalid_argument("psaem_bayesian: need N >= 2");
  const auto T = static_cast<std::int64_t>(ys.size());
  StreamFork fork(rng);
  detail::Stopwatch clock;
  detail::OverlapMonitor monitor(opt.overlap_threshold, opt.overlap_window);
  LearnTrace trace;
  trace.records.reserve(opt.n_iters);

  typename PriorFamily::Hyper eta = eta_init;
  typename M::Params theta = theta_init;
  Trajectory<typename M::State> x = x_init;
  Vector stats = Vector::Zero(prior.dim());
  std::int64_t props = 0;
  for (int k = 1; k <= opt.n_iters; ++k) {
    Rng traj_rng = fork.at(k, 0);
    auto next = cpfas_kernel(model, theta, x, ys, opt.n_particles, traj_rng);
    props += static_cast<std::int64_t>(opt.n_particles - 1) * T;
    const double overlap = overlap_diagnostic(x, next);
    x = std::move(next);
    Rng theta_rng = fork.at(k, 1);
    theta = theta_kernel(eta, theta, x, theta_rng);
    const double gamma = opt.schedule(k);
    stats = sa_update(stats, prior.suffstats(theta), gamma);
    try {
      eta = prior.mstep(stats);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("psaem_bayesian: iteration " + std::to_string(k) + ": " + e.what());
    }
    const bool warn = monitor.push(overlap);
    trace.records.push_back(LearnRecord{k, gamma, prior.hyper_to_vector(eta), overlap, -1,
                                        clock.seconds(), props, warn});
  }
  trace.final_estimate = prior.hyper_to_vector(eta);
  return trace;
}

// PSAEM with the PIMH kernel in place of PGAS: the chain state keeps the
// retained trajectory and its stale log normalizer; on rejection the retained
// trajectory feeds the statistic update again.
template <ExpFamilyModel M>
LearnTrace pimh_saem(const M& model, const typename M::Params& theta_init,
                     const std::vector<typename M::Obs>& ys, const PsaemOptions& opt, Rng& rng) {
  if (opt.n_particles < 1) throw std::invalid_argument("pimh_saem: need N >= 1");
  if (!model.in_domain(theta_init))
    throw std::invalid_argument("pimh_saem: theta_init outside the declared parameter domain");
  const auto T = static_cast<std::int64_t>(ys.size());
  StreamFork fork(rng);
  detail::Stopwatch clock;
  LearnTrace trace;
  trace.records.reserve(opt.n_iters);

  typename M::Params theta = theta_init;
  Rng init_rng = fork.at(0, 0);
  const auto pf0 = bootstrap_pf(model, theta, ys, opt.n_particles, init_rng);
  PimhState<typename M::State> chain{extract_trajectory(pf0, init_rng), pf0.log_normalizer, true};
  std::int64_t props = static_cast<std::int64_t>(opt.n_particles) * T;

  Vector stats = Vector::Zero(model.suffstat_dim());
  for (int k = 1; k <= opt.n_iters; ++k) {
    Rng it_rng = fork.at(k, 0);
    auto prev = chain.trajectory;
    chain = pimh_kernel(model, theta, chain, ys, opt.n_particles, it_rng);
    props += static_cast<std::int64_t>(opt.n_particles) * T;
    const double overlap = overlap_diagnostic(prev, chain.trajectory);
    const double gamma = opt.schedule(k);
    stats = sa_update(stats, model.suffstats(chain.trajectory, ys), gamma);
    try {
      theta = model.mstep(stats);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("pimh_saem: iteration " + std::to_string(k) + ": " + e.what());
    }
    trace.records.push_back(LearnRecord{k, gamma, model.params_to_vector(theta), overlap,
                                        chain.accepted ? 1 : 0, clock.seconds(), props, false});
  }
  trace.final_estimate = model.params_to_vector(theta);
  return trace;
}

}  // namespace psaem
