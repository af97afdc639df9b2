#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/models/discrete_hmm.hpp"
#include "psaem/rng.hpp"

namespace psaem {

struct KalmanResult {
  double loglik = 0.0;
  std::vector<double> filtered_mean;  // E[x_t | y_{1:t}], t = 1..T
  std::vector<double> filtered_var;
};

// Exact log p_theta(y_{1:T}) for the scalar model x_t = theta x_{t-1} + w_t,
// y_t = x_t + e_t, x_0 ~ N(0, prior_var), via the prediction error
// decomposition. Any real theta is accepted; the variances must be positive.
inline KalmanResult kalman_filter(double theta, const std::vector<double>& ys, double sigma_w2,
                                  double sigma_e2, double prior_var = 1.0) {
  if (!(sigma_w2 > 0.0) || !(sigma_e2 > 0.0) || !(prior_var > 0.0))
    throw std::invalid_argument("kalman_filter: variances must be positive");
  KalmanResult res;
  res.filtered_mean.reserve(ys.size());
  res.filtered_var.reserve(ys.size());
  double m = 0.0, p = prior_var;
  for (double y : ys) {
    const double m_pred = theta * m;
    const double p_pred = theta * theta * p + sigma_w2;
    const double s = p_pred + sigma_e2;
    res.loglik += log_normal_pdf(y, m_pred, s);
    const double gain = p_pred / s;
    m = m_pred + gain * (y - m_pred);
    p = (1.0 - gain) * p_pred;
    res.filtered_mean.push_back(m);
    res.filtered_var.push_back(p);
  }
  return res;
}

inline double kalman_loglik(double theta, const std::vector<double>& ys, double sigma_w2,
                            double sigma_e2, double prior_var = 1.0) {
  return kalman_filter(theta, ys, sigma_w2, sigma_e2, prior_var).loglik;
}

// Exact maximum likelihood estimate of theta over (-1, 1): golden-section
// search refined to an interval below 1e-10, run from several bracketing
// subintervals. Taking the best of the brackets guards against
// multimodality; a second bracket optimum that ties the best but sits at a
// different theta raises the multimodal flag instead of being assumed away.
struct KalmanMlResult {
  double theta_ml = 0.0;
  bool multimodal = false;
};

inline KalmanMlResult kalman_ml_scan(const std::vector<double>& ys, double sigma_w2,
                                     double sigma_e2, double prior_var = 1.0) {
  if (ys.empty()) throw std::invalid_argument("kalman_exact_ml: need T >= 1");
  const auto nll = [&](double th) { return -kalman_loglik(th, ys, sigma_w2, sigma_e2, prior_var); };
  constexpr double invphi = 0.6180339887498949;
  const int n_brackets = 8;
  std::vector<double> thetas, vals;
  for (int b = 0; b < n_brackets; ++b) {
    double lo = -1.0 + 2.0 * b / n_brackets;
    double hi = -1.0 + 2.0 * (b + 1) / n_brackets;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    double f1 = nll(x1), f2 = nll(x2);
    while (hi - lo > 1e-10) {
      if (f1 < f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - invphi * (hi - lo);
        f1 = nll(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + invphi * (hi - lo);
        f2 = nll(x2);
      }
    }
    thetas.push_back(0.5 * (lo + hi));
    vals.push_back(nll(thetas.back()));
  }
  KalmanMlResult res;
  std::size_t best = 0;
  for (std::size_t b = 1; b < vals.size(); ++b)
    if (vals[b] < vals[best]) best = b;
  res.theta_ml = thetas[best];
  for (std::size_t b = 0; b < vals.size(); ++b)
    if (b != best && vals[b] - vals[best] < 1e-6 && std::abs(thetas[b] - res.theta_ml) > 1e-3)
      res.multimodal = true;
  return res;
}

inline double kalman_exact_ml(const std::vector<double>& ys, double sigma_w2, double sigma_e2,
                              double prior_var = 1.0) {
  return kalman_ml_scan(ys, sigma_w2, sigma_e2, prior_var).theta_ml;
}

// Exact joint smoothing distribution of a small discrete HMM by exhaustive
// summation over all n^(T+1) trajectories. Trajectories map to flat indices
// with x_0 as the most significant digit.
struct EnumeratedPosterior {
  std::vector<double> probs;  // one entry per trajectory, sums to 1
  double loglik = 0.0;        // log p_theta(y_{1:T})
  int n_states = 0;
  int horizon = 0;            // T

  std::size_t index_of(const Trajectory<int>& xs) const {
    std::size_t idx = 0;
    for (int x : xs) idx = idx * n_states + static_cast<std::size_t>(x);
    return idx;
  }
  Trajectory<int> trajectory_of(std::size_t idx) const {
    Trajectory<int> xs(horizon + 1);
    for (int t = horizon; t >= 0; --t) {
      xs[t] = static_cast<int>(idx % n_states);
      idx /= n_states;
    }
    return xs;
  }
  Trajectory<int> sample(Rng& rng) const { return trajectory_of(categorical_draw(probs, rng)); }
};

inline EnumeratedPosterior enumerate_posterior(const DiscreteHmm& hmm,
                                               const DiscreteHmm::Params& theta,
                                               const std::vector<int>& ys) {
  const int n = hmm.n_states();
  const int T = static_cast<int>(ys.size());
  double count = std::pow(static_cast<double>(n), T + 1);
  if (count > 1e6) throw std::invalid_argument("enumerate_posterior: state space too large");
  const auto total = static_cast<std::size_t>(count);

  EnumeratedPosterior post;
  post.n_states = n;
  post.horizon = T;
  std::vector<double> logp(total);
  Trajectory<int> xs(T + 1);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (int t = T; t >= 0; --t) {
      xs[t] = static_cast<int>(rem % n);
      rem /= n;
    }
    double lp = std::log(hmm.initial()[xs[0]]);
    for (int t = 1; t <= T; ++t)
      lp += hmm.transition_logpdf(theta, xs[t - 1], xs[t], t) +
            hmm.observation_logpdf(theta, xs[t], ys[t - 1], t);
    logp[idx] = lp;
  }
  post.probs = logp;
  post.loglik = normalize_log_weights(post.probs) + std::log(static_cast<double>(total));
  return post;
}

// One exact EM update: expected sufficient statistics under the enumerated
// posterior, then the model M-step.
inline DiscreteHmm::Params exact_em_step(const DiscreteHmm& hmm, const DiscreteHmm::Params& theta,
                                         const std::vector<int>& ys) {
  const auto post = enumerate_posterior(hmm, theta, ys);
  Vector stats = Vector::Zero(hmm.suffstat_dim());
  for (std::size_t idx = 0; idx < post.probs.size(); ++idx) {
    if (post.probs[idx] == 0.0) continue;
    stats += post.probs[idx] * hmm.suffstats(post.trajectory_of(idx), ys);
  }
  return hmm.mstep(stats);
}

}  // namespace psaem
