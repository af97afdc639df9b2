#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/models/lgss.hpp"
#include "psaem/rng.hpp"
#include "psaem/smc.hpp"

namespace psaem {

template <class M>
struct ChainState {
  Trajectory<typename M::State> trajectory;
  typename M::Params theta;
  int iteration = 0;
};

// Iterates the CPF-AS kernel at fixed theta; returns all n_iters trajectories
// in order. Children streams are derived positionally so that a run is
// reproducible and so that a joint chain with a no-op theta kernel consumes
// identical randomness per iteration (see gibbs_chain).
template <StateSpaceModel M>
std::vector<Trajectory<typename M::State>> pgas_chain(const M& model,
                                                      const typename M::Params& theta,
                                                      const Trajectory<typename M::State>& x_init,
                                                      const std::vector<typename M::Obs>& ys,
                                                      int n, int n_iters, Rng& rng) {
  StreamFork fork(rng);
  std::vector<Trajectory<typename M::State>> out;
  out.reserve(n_iters);
  const Trajectory<typename M::State>* cond = &x_init;
  for (int j = 1; j <= n_iters; ++j) {
    Rng child = fork.at(j, 0);
    out.push_back(cpfas_kernel(model, theta, *cond, ys, n, child));
    cond = &out.back();
  }
  return out;
}

// Joint chain over (theta, x_{0:T}) at fixed hyperparameters: alternates a
// CPF-AS sweep with the current theta and a user-supplied theta kernel that
// leaves p(theta | x_{0:T}, y_{1:T}) invariant.
template <StateSpaceModel M, class ThetaKernel>
std::vector<ChainState<M>> gibbs_chain(const M& model, const ThetaKernel& theta_kernel,
                                       const typename M::Params& theta_init,
                                       const Trajectory<typename M::State>& x_init,
                                       const std::vector<typename M::Obs>& ys, int n, int n_iters,
                                       Rng& rng) {
  StreamFork fork(rng);
  std::vector<ChainState<M>> out;
  out.reserve(n_iters);
  typename M::Params theta = theta_init;
  const Trajectory<typename M::State>* cond = &x_init;
  for (int j = 1; j <= n_iters; ++j) {
    Rng traj_rng = fork.at(j, 0);
    auto traj = cpfas_kernel(model, theta, *cond, ys, n, traj_rng);
    Rng theta_rng = fork.at(j, 1);
    theta = theta_kernel(theta, traj, theta_rng);
    out.push_back(ChainState<M>{std::move(traj), theta, j});
    cond = &out.back().trajectory;
  }
  return out;
}

// Exact Gaussian full-conditional draw for the scalar LGSS model with known
// noise variances and prior theta ~ N(mu0, tau02):
//   precision = 1/tau02 + sum x_{t-1}^2 / sigma_w2
//   mean = (mu0/tau02 + sum x_{t-1} x_t / sigma_w2) / precision
struct ConjugateLgssThetaKernel {
  double mu0;
  double tau02;
  double sigma_w2;

  ConjugateLgssThetaKernel(double prior_mean, double prior_var, double sigma_w2_)
      : mu0(prior_mean), tau02(prior_var), sigma_w2(sigma_w2_) {
    if (!(tau02 > 0.0))
      throw std::invalid_argument("ConjugateLgssThetaKernel: prior variance must be positive");
  }

  LgssModel::Params operator()(const LgssModel::Params&, const Trajectory<double>& xs,
                               Rng& rng) const {
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t t = 1; t < xs.size(); ++t) {
      sxx += xs[t - 1] * xs[t - 1];
      sxy += xs[t - 1] * xs[t];
    }
    const double precision = 1.0 / tau02 + sxx / sigma_w2;
    const double mean = (mu0 / tau02 + sxy / sigma_w2) / precision;
    return LgssModel::Params{normal(rng, mean, std::sqrt(1.0 / precision))};
  }
};

// Keeps theta fixed; gibbs_chain with this kernel reduces to pgas_chain.
template <class Params>
struct PointMassThetaKernel {
  template <class Traj>
  Params operator()(const Params& current, const Traj&, Rng&) const {
    return current;
  }
};

template <class State>
struct PimhState {
  Trajectory<State> trajectory;
  double loglik = kNegInf;
  bool accepted = false;
};

// Accept with probability min(1, exp(loglik_new - loglik_current)); depends
// on the log normalizers only through their difference. A -inf proposal never
// accepts, equal log normalizers always accept.
inline bool pimh_accept(double loglik_new, double loglik_current, Rng& rng) {
  return std::log(uniform01(rng)) < loglik_new - loglik_current;
}

// Particle independent Metropolis-Hastings step: propose a trajectory from an
// independent bootstrap filter and accept with probability
// min(1, exp(loglik_new - loglik_current)). The chain state carries the stale
// log normalizer of the retained trajectory.
template <StateSpaceModel M>
PimhState<typename M::State> pimh_kernel(const M& model, const typename M::Params& theta,
                                         const PimhState<typename M::State>& current,
                                         const std::vector<typename M::Obs>& ys, int n, Rng& rng) {
  const auto ps = bootstrap_pf(model, theta, ys, n, rng);
  auto proposal = extract_trajectory(ps, rng);
  if (pimh_accept(ps.log_normalizer, current.loglik, rng))
    return PimhState<typename M::State>{std::move(proposal), ps.log_normalizer, true};
  return PimhState<typename M::State>{current.trajectory, current.loglik, false};
}

// Fraction of time indices where the two trajectories agree. CPF-AS copies
// surviving states verbatim, so the default is exact equality; tol > 0
// switches to componentwise closeness for models that perturb states.
template <class State>
double overlap_diagnostic(const Trajectory<State>& a, const Trajectory<State>& b,
                          double tol = 0.0) {
  if (a.size() != b.size())
    throw std::invalid_argument("overlap_diagnostic: trajectory lengths differ");
  if (a.empty()) throw std::invalid_argument("overlap_diagnostic: empty trajectories");
  std::size_t hits = 0;
  for (std::size_t t = 0; t < a.size(); ++t)
    if (states_close(a[t], b[t], tol)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

}  // namespace psaem
