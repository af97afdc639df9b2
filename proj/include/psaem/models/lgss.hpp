#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/rng.hpp"

namespace psaem {

// Scalar linear Gaussian state-space model with known noise variances:
//   x_t = theta * x_{t-1} + w_t,  w_t ~ N(0, sigma_w2)
//   y_t = x_t + e_t,              e_t ~ N(0, sigma_e2)
// with x_0 ~ N(0, 1) independent of theta. The declared parameter domain is
// the stationarity region (-1, 1); density evaluations accept any finite
// theta because the Bayesian chains place Gaussian full conditionals on theta
// whose tails cross that boundary.
//
// Sufficient statistics, 1/T scaled: [ S_cross, S_prev, S_curr ] =
// (1/T) [ sum x_{t-1} x_t, sum x_{t-1}^2, sum x_t^2 ]. The M-step only needs
// the first two; S_curr is carried so that the same statistic layout serves
// the unknown-variance variant below.
class LgssModel {
 public:
  using State = double;
  using Obs = double;
  struct Params {
    double theta = 0.0;
  };

  LgssModel(double sigma_w2, double sigma_e2)
      : sigma_w2_(sigma_w2),
        sigma_e2_(sigma_e2),
        sd_w_(std::sqrt(sigma_w2)),
        sd_e_(std::sqrt(sigma_e2)),
        norm_w_(-0.5 * (kLogTwoPi + std::log(sigma_w2))),
        norm_e_(-0.5 * (kLogTwoPi + std::log(sigma_e2))) {
    if (!(sigma_w2 > 0.0) || !(sigma_e2 > 0.0))
      throw std::invalid_argument("LgssModel: noise variances must be positive");
  }

  double sigma_w2() const { return sigma_w2_; }
  double sigma_e2() const { return sigma_e2_; }

  bool in_domain(const Params& th) const {
    return std::isfinite(th.theta) && std::abs(th.theta) < 1.0;
  }

  State sample_initial(const Params&, Rng& rng) const { return normal(rng, 0.0, 1.0); }

  State sample_transition(const Params& th, const State& x_prev, int, Rng& rng) const {
    check_domain(th);
    return normal(rng, th.theta * x_prev, sd_w_);
  }

  double transition_logpdf(const Params& th, const State& x_prev, const State& x, int) const {
    check_domain(th);
    const double d = x - th.theta * x_prev;
    return norm_w_ - 0.5 * d * d / sigma_w2_;
  }

  double observation_logpdf(const Params& th, const State& x, const Obs& y, int) const {
    check_domain(th);
    const double d = y - x;
    return norm_e_ - 0.5 * d * d / sigma_e2_;
  }

  int suffstat_dim() const { return 3; }

  Vector suffstats(const Trajectory<State>& xs, const std::vector<Obs>& ys) const {
    const std::size_t T = ys.size();
    if (xs.size() != T + 1)
      throw std::invalid_argument("LgssModel::suffstats: trajectory length must be T+1");
    Vector s = Vector::Zero(3);
    for (std::size_t t = 1; t <= T; ++t) {
      s[0] += xs[t - 1] * xs[t];
      s[1] += xs[t - 1] * xs[t - 1];
      s[2] += xs[t] * xs[t];
    }
    if (T > 0) s /= static_cast<double>(T);
    return s;
  }

  Params mstep(const Vector& s) const {
    if (s.size() != 3) throw std::invalid_argument("LgssModel::mstep: statistic dimension");
    if (s[0] == 0.0) return Params{0.0};
    if (!(s[1] > 0.0))
      throw std::runtime_error("LgssModel::mstep: degenerate statistics (sum x_{t-1}^2 <= 0)");
    return Params{s[0] / s[1]};
  }

  Vector phi(const Params& th, int T) const {
    Vector p(3);
    p[0] = T * th.theta / sigma_w2_;
    p[1] = -0.5 * T * th.theta * th.theta / sigma_w2_;
    p[2] = 0.0;
    return p;
  }
  double psi(const Params&, int) const { return 0.0; }
  double mstep_penalty(const Params&) const { return 0.0; }

  Vector params_to_vector(const Params& th) const {
    Vector v(1);
    v[0] = th.theta;
    return v;
  }
  Params params_from_vector(const Vector& v) const { return Params{v[0]}; }
  static std::vector<std::string> param_names() { return {"theta"}; }

 private:
  void check_domain(const Params& th) const {
    if (!std::isfinite(th.theta)) throw std::invalid_argument("LgssModel: theta is not finite");
  }

  double sigma_w2_;
  double sigma_e2_;
  double sd_w_;
  double sd_e_;
  double norm_w_;
  double norm_e_;
};

// Unknown-variance variant of the same model; estimates (theta, sigma_w2,
// sigma_e2). Statistics extend the layout above with the observation moments:
// [ S_cross, S_prev, S_curr, S_xy, S_yy ], all 1/T scaled.
class LgssFullModel {
 public:
  using State = double;
  using Obs = double;
  struct Params {
    double theta = 0.0;
    double sigma_w2 = 1.0;
    double sigma_e2 = 1.0;
  };

  bool in_domain(const Params& th) const {
    return std::isfinite(th.theta) && std::abs(th.theta) < 1.0 && th.sigma_w2 > 0.0 &&
           th.sigma_e2 > 0.0;
  }

  State sample_initial(const Params&, Rng& rng) const { return normal(rng, 0.0, 1.0); }

  State sample_transition(const Params& th, const State& x_prev, int, Rng& rng) const {
    check_domain(th);
    return normal(rng, th.theta * x_prev, std::sqrt(th.sigma_w2));
  }

  double transition_logpdf(const Params& th, const State& x_prev, const State& x, int) const {
    check_domain(th);
    return log_normal_pdf(x, th.theta * x_prev, th.sigma_w2);
  }

  double observation_logpdf(const Params& th, const State& x, const Obs& y, int) const {
    check_domain(th);
    return log_normal_pdf(y, x, th.sigma_e2);
  }

  int suffstat_dim() const { return 5; }

  Vector suffstats(const Trajectory<State>& xs, const std::vector<Obs>& ys) const {
    const std::size_t T = ys.size();
    if (xs.size() != T + 1)
      throw std::invalid_argument("LgssFullModel::suffstats: trajectory length must be T+1");
    Vector s = Vector::Zero(5);
    for (std::size_t t = 1; t <= T; ++t) {
      s[0] += xs[t - 1] * xs[t];
      s[1] += xs[t - 1] * xs[t - 1];
      s[2] += xs[t] * xs[t];
      s[3] += xs[t] * ys[t - 1];
      s[4] += ys[t - 1] * ys[t - 1];
    }
    if (T > 0) s /= static_cast<double>(T);
    return s;
  }

  Params mstep(const Vector& s) const {
    if (s.size() != 5) throw std::invalid_argument("LgssFullModel::mstep: statistic dimension");
    if (!(s[1] > 0.0))
      throw std::runtime_error("LgssFullModel::mstep: degenerate statistics");
    const double theta = s[0] / s[1];
    const double sw2 = s[2] - 2.0 * theta * s[0] + theta * theta * s[1];
    const double se2 = s[4] - 2.0 * s[3] + s[2];
    if (!(sw2 > 0.0) || !(se2 > 0.0))
      throw std::runtime_error("LgssFullModel::mstep: degenerate statistics (variance <= 0)");
    return Params{theta, sw2, se2};
  }

  Vector phi(const Params& th, int T) const {
    Vector p(5);
    p[0] = th.theta / th.sigma_w2;
    p[1] = -0.5 * th.theta * th.theta / th.sigma_w2;
    p[2] = -0.5 / th.sigma_w2 - 0.5 / th.sigma_e2;
    p[3] = 1.0 / th.sigma_e2;
    p[4] = -0.5 / th.sigma_e2;
    return T * p;
  }
  double psi(const Params& th, int T) const {
    return 0.5 * T * (std::log(th.sigma_w2) + std::log(th.sigma_e2));
  }
  double mstep_penalty(const Params&) const { return 0.0; }

  Vector params_to_vector(const Params& th) const {
    Vector v(3);
    v << th.theta, th.sigma_w2, th.sigma_e2;
    return v;
  }
  Params params_from_vector(const Vector& v) const { return Params{v[0], v[1], v[2]}; }
  static std::vector<std::string> param_names() { return {"theta", "sigma_w2", "sigma_e2"}; }

 private:
  void check_domain(const Params& th) const {
    if (!std::isfinite(th.theta) || !(th.sigma_w2 > 0.0) || !(th.sigma_e2 > 0.0))
      throw std::invalid_argument("LgssFullModel: parameters outside domain");
  }
};

}  // namespace psaem
