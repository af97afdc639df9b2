#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/rng.hpp"

namespace psaem {

// Finite-state hidden Markov model. States and observation symbols are the
// integers 0..n-1 and 0..n_obs-1; the initial distribution is fixed at
// construction and does not depend on theta. Small instances of this model
// are enumerable, which makes it the reference instance for the exact oracles.
class DiscreteHmm {
 public:
  using State = int;
  using Obs = int;
  struct Params {
    Eigen::MatrixXd trans;  // n x n, rows sum to 1
    Eigen::MatrixXd emis;   // n x n_obs, rows sum to 1
  };

  DiscreteHmm(Vector initial, int n_obs) : initial_(std::move(initial)), n_obs_(n_obs) {
    if (initial_.size() < 1 || n_obs_ < 1)
      throw std::invalid_argument("DiscreteHmm: need at least one state and one symbol");
    if (std::abs(initial_.sum() - 1.0) > 1e-12 || initial_.minCoeff() < 0.0)
      throw std::invalid_argument("DiscreteHmm: initial distribution is not a probability vector");
  }

  int n_states() const { return static_cast<int>(initial_.size()); }
  int n_obs() const { return n_obs_; }
  const Vector& initial() const { return initial_; }

  bool in_domain(const Params& th) const {
    const int n = n_states();
    if (th.trans.rows() != n || th.trans.cols() != n) return false;
    if (th.emis.rows() != n || th.emis.cols() != n_obs_) return false;
    for (int i = 0; i < n; ++i) {
      if (std::abs(th.trans.row(i).sum() - 1.0) > 1e-12) return false;
      if (std::abs(th.emis.row(i).sum() - 1.0) > 1e-12) return false;
    }
    return th.trans.minCoeff() >= 0.0 && th.emis.minCoeff() >= 0.0 &&
           th.trans.maxCoeff() <= 1.0 && th.emis.maxCoeff() <= 1.0;
  }

  State sample_initial(const Params&, Rng& rng) const {
    return categorical_draw(std::span<const double>(initial_.data(), initial_.size()), rng);
  }

  State sample_transition(const Params& th, const State& x_prev, int, Rng& rng) const {
    const Eigen::RowVectorXd row = th.trans.row(x_prev);
    return categorical_draw(std::span<const double>(row.data(), row.size()), rng);
  }

  double transition_logpdf(const Params& th, const State& x_prev, const State& x, int) const {
    const double p = th.trans(x_prev, x);
    return p > 0.0 ? std::log(p) : kNegInf;
  }

  double observation_logpdf(const Params& th, const State& x, const Obs& y, int) const {
    const double p = th.emis(x, y);
    return p > 0.0 ? std::log(p) : kNegInf;
  }

  // Raw transition and emission counts, flattened [trans(n*n), emis(n*n_obs)].
  int suffstat_dim() const { return n_states() * n_states() + n_states() * n_obs_; }

  Vector suffstats(const Trajectory<State>& xs, const std::vector<Obs>& ys) const {
    const std::size_t T = ys.size();
    if (xs.size() != T + 1)
      throw std::invalid_argument("DiscreteHmm::suffstats: trajectory length must be T+1");
    const int n = n_states();
    Vector s = Vector::Zero(suffstat_dim());
    for (std::size_t t = 1; t <= T; ++t) {
      s[xs[t - 1] * n + xs[t]] += 1.0;
      s[n * n + xs[t] * n_obs_ + ys[t - 1]] += 1.0;
    }
    return s;
  }

  Params mstep(const Vector& s) const {
    if (s.size() != suffstat_dim())
      throw std::invalid_argument("DiscreteHmm::mstep: statistic dimension");
    const int n = n_states();
    Params th;
    th.trans.resize(n, n);
    th.emis.resize(n, n_obs_);
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) row_sum += s[i * n + j];
      if (!(row_sum > 0.0))
        throw std::runtime_error("DiscreteHmm::mstep: degenerate statistics (empty transition row)");
      for (int j = 0; j < n; ++j) th.trans(i, j) = s[i * n + j] / row_sum;
    }
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n_obs_; ++j) row_sum += s[n * n + i * n_obs_ + j];
      if (!(row_sum > 0.0))
        throw std::runtime_error("DiscreteHmm::mstep: degenerate statistics (empty emission row)");
      for (int j = 0; j < n_obs_; ++j) th.emis(i, j) = s[n * n + i * n_obs_ + j] / row_sum;
    }
    return th;
  }

  Vector phi(const Params& th, int) const {
    const int n = n_states();
    Vector p(suffstat_dim());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) p[i * n + j] = std::log(th.trans(i, j));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n_obs_; ++j) p[n * n + i * n_obs_ + j] = std::log(th.emis(i, j));
    return p;
  }
  double psi(const Params&, int) const { return 0.0; }
  double mstep_penalty(const Params&) const { return 0.0; }

  Vector params_to_vector(const Params& th) const {
    const int n = n_states();
    Vector v(suffstat_dim());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) v[i * n + j] = th.trans(i, j);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n_obs_; ++j) v[n * n + i * n_obs_ + j] = th.emis(i, j);
    return v;
  }
  Params params_from_vector(const Vector& v) const {
    const int n = n_states();
    Params th;
    th.trans.resize(n, n);
    th.emis.resize(n, n_obs_);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) th.trans(i, j) = v[i * n + j];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n_obs_; ++j) th.emis(i, j) = v[n * n + i * n_obs_ + j];
    return th;
  }

 private:
  Vector initial_;
  int n_obs_;
};

}  // namespace psaem
