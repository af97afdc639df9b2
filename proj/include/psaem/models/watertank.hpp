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

// Cascaded water tanks. State x = (x_u, x_l): level plus inflow of the upper
// and lower tank; each tank has height 10 in sensor units. With c(v) = 10 ^ v
// (clamped level), s(v) = sqrt(max(0, c(v))) and pump input u_t:
//
//   x_u' = c(x_u) + Ts (-k1 s(x_u) - k2 c(x_u) + k5 u_t) + w_u
//   x_l' = c(x_l) + Ts ( k1 s(x_u) + k2 c(x_u) - k3 s(x_l) - k4 c(x_l)
//                        + k6 max(0, x_u - 10)) + w_l
//   y_t  = c(x_l) + e_t
//
// w ~ N(0, sigma_w2 I), e ~ N(0, sigma_e2). The initial upper level is
// x_u(0) ~ N(xi0, 0.1) with xi0 a learned parameter, so sample_initial uses
// theta; the lower level starts from the fixed N(5, 1). The dynamics are
// linear in k = (k1..k6) given the basis functions, so the M-step is a ridge
// regression: k4 carries the N(0, 1e3) penalty to stay identified when the
// trajectory contains no overflow events.
//
// The model owns its input sequence u_{1:T}; transitions into x_t use u_{t-1}
// (0-based u[t-1]) and trajectories must have length T+1.
class WaterTankModel {
 public:
  using State = Eigen::Vector2d;
  using Obs = double;
  struct Params {
    Eigen::Matrix<double, 6, 1> k = Eigen::Matrix<double, 6, 1>::Zero();
    double sigma_w2 = 0.1;
    double sigma_e2 = 0.1;
    double xi0 = 6.0;
  };

  static constexpr double kInitUpperVar = 0.1;
  static constexpr double kRidgeVar = 1.0e3;  // N(0, 1e3) prior on k4

  explicit WaterTankModel(std::vector<double> input, double ts = 4.0)
      : u_(std::move(input)), ts_(ts) {
    if (u_.empty()) throw std::invalid_argument("WaterTankModel: empty input sequence");
    if (!(ts_ > 0.0)) throw std::invalid_argument("WaterTankModel: sample period must be positive");
  }

  int horizon() const { return static_cast<int>(u_.size()); }
  double sample_period() const { return ts_; }
  const std::vector<double>& input() const { return u_; }

  bool in_domain(const Params& th) const {
    return th.k.allFinite() && th.sigma_w2 > 0.0 && th.sigma_e2 > 0.0 && std::isfinite(th.xi0);
  }

  State sample_initial(const Params& th, Rng& rng) const {
    check_domain(th);
    return State(normal(rng, th.xi0, std::sqrt(kInitUpperVar)), normal(rng, 5.0, 1.0));
  }

  double initial_logpdf(const Params& th, const State& x) const {
    return log_normal_pdf(x[0], th.xi0, kInitUpperVar) + log_normal_pdf(x[1], 5.0, 1.0);
  }

  State mean_next(const Params& th, const State& x, int t) const {
    return drift(x) + basis(x, t).transpose() * th.k;
  }

  State sample_transition(const Params& th, const State& x_prev, int t, Rng& rng) const {
    check_domain(th);
    const State mu = mean_next(th, x_prev, t);
    const double sd = std::sqrt(th.sigma_w2);
    return State(normal(rng, mu[0], sd), normal(rng, mu[1], sd));
  }

  double transition_logpdf(const Params& th, const State& x_prev, const State& x, int t) const {
    check_domain(th);
    const State mu = mean_next(th, x_prev, t);
    return log_normal_pdf(x[0], mu[0], th.sigma_w2) + log_normal_pdf(x[1], mu[1], th.sigma_w2);
  }

  double observation_logpdf(const Params& th, const State& x, const Obs& y, int) const {
    check_domain(th);
    return log_normal_pdf(y, clamp10(x[1]), th.sigma_e2);
  }

  // Statistic layout (1/T scaled except the last entry):
  //   [0..3]   Srr = sum r r^T, flattened, r_t = x_t - drift(x_{t-1})
  //   [4..9]   Sbr = sum B_t r_t          (B_t the 6x2 basis)
  //   [10..45] SBB = sum B_t B_t^T, flattened
  //   [46]     Syy = sum (y_t - c(x_l,t))^2
  //   [47]     x_u(0), raw
  int suffstat_dim() const { return 48; }

  Vector suffstats(const Trajectory<State>& xs, const std::vector<Obs>& ys) const {
    const std::size_t T = ys.size();
    if (T != u_.size())
      throw std::invalid_argument("WaterTankModel::suffstats: observation count != input length");
    if (xs.size() != T + 1)
      throw std::invalid_argument("WaterTankModel::suffstats: trajectory length must be T+1");
    Eigen::Matrix2d srr = Eigen::Matrix2d::Zero();
    Eigen::Matrix<double, 6, 1> sbr = Eigen::Matrix<double, 6, 1>::Zero();
    Eigen::Matrix<double, 6, 6> sbb = Eigen::Matrix<double, 6, 6>::Zero();
    double syy = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const State r = xs[t] - drift(xs[t - 1]);
      const auto B = basis(xs[t - 1], static_cast<int>(t));
      srr += r * r.transpose();
      sbr += B * r;
      sbb += B * B.transpose();
      const double dy = ys[t - 1] - clamp10(xs[t][1]);
      syy += dy * dy;
    }
    Vector s(48);
    const double invT = 1.0 / static_cast<double>(T);
    s.segment<4>(0) = Eigen::Map<const Vector>(srr.data(), 4) * invT;
    s.segment<6>(4) = sbr * invT;
    s.segment<36>(10) = Eigen::Map<const Vector>(sbb.data(), 36) * invT;
    s[46] = syy * invT;
    s[47] = xs[0][0];
    return s;
  }

  Params mstep(const Vector& s) const {
    if (s.size() != 48) throw std::invalid_argument("WaterTankModel::mstep: statistic dimension");
    const double T = static_cast<double>(u_.size());
    const Eigen::Map<const Eigen::Matrix2d> srr(s.data());
    const Eigen::Map<const Eigen::Matrix<double, 6, 1>> sbr(s.data() + 4);
    const Eigen::Map<const Eigen::Matrix<double, 6, 6>> sbb(s.data() + 10);

    // Joint stationary point of (k, sigma_w2) under the k4 ridge: alternate
    // the regularized normal equations and the variance update to a fixed
    // point. The coupling through sigma_w2 / (1e3 T) is weak, so this
    // converges in a handful of sweeps.
    double sw2 = 0.1;
    Eigen::Matrix<double, 6, 1> k = Eigen::Matrix<double, 6, 1>::Zero();
    for (int sweep = 0; sweep < 200; ++sweep) {
      Eigen::Matrix<double, 6, 6> lhs = sbb;
      lhs(3, 3) += sw2 / (kRidgeVar * T);
      const Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(lhs);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw std::runtime_error("WaterTankModel::mstep: degenerate statistics (singular basis moments)");
      k = ldlt.solve(sbr);
      const double rss = srr.trace() - 2.0 * k.dot(sbr) + k.dot(sbb * k);
      const double sw2_next = 0.5 * rss;  // two state components share sigma_w2
      if (!(sw2_next > 0.0) || !std::isfinite(sw2_next))
        throw std::runtime_error("WaterTankModel::mstep: degenerate statistics (sigma_w2 <= 0)");
      const bool done = std::abs(sw2_next - sw2) <= 1e-14 * std::max(1.0, sw2);
      sw2 = sw2_next;
      if (done) break;
    }
    const double se2 = s[46];
    if (!(se2 > 0.0) || !std::isfinite(se2))
      throw std::runtime_error("WaterTankModel::mstep: degenerate statistics (sigma_e2 <= 0)");
    Params th;
    th.k = k;
    th.sigma_w2 = sw2;
    th.sigma_e2 = se2;
    th.xi0 = s[47];
    return th;
  }

  Vector phi(const Params& th, int T) const {
    Vector p = Vector::Zero(48);
    const double a = -0.5 * T / th.sigma_w2;
    p[0] = a;  // Srr(0,0)
    p[3] = a;  // Srr(1,1)
    p.segment<6>(4) = (T / th.sigma_w2) * th.k;
    const Eigen::Matrix<double, 6, 6> kk = th.k * th.k.transpose();
    p.segment<36>(10) = Eigen::Map<const Vector>(kk.data(), 36) * a;
    p[46] = -0.5 * T / th.sigma_e2;
    p[47] = th.xi0 / kInitUpperVar;
    return p;
  }
  double psi(const Params& th, int T) const {
    return T * std::log(th.sigma_w2) + 0.5 * T * std::log(th.sigma_e2) +
           0.5 * th.xi0 * th.xi0 / kInitUpperVar;
  }
  double mstep_penalty(const Params& th) const {
    return -0.5 * th.k[3] * th.k[3] / kRidgeVar;
  }

  Vector params_to_vector(const Params& th) const {
    Vector v(9);
    v << th.k[0], th.k[1], th.k[2], th.k[3], th.k[4], th.k[5], th.sigma_w2, th.sigma_e2, th.xi0;
    return v;
  }
  Params params_from_vector(const Vector& v) const {
    Params th;
    for (int i = 0; i < 6; ++i) th.k[i] = v[i];
    th.sigma_w2 = v[6];
    th.sigma_e2 = v[7];
    th.xi0 = v[8];
    return th;
  }
  static std::vector<std::string> param_names() {
    return {"k1", "k2", "k3", "k4", "k5", "k6", "sigma_w2", "sigma_e2", "xi0"};
  }

  static double clamp10(double v) { return std::min(10.0, v); }

  // Deterministic one-step simulation from the mean dynamics; used for the
  // simulation RMSE figure of merit.
  std::vector<double> simulate_mean_outputs(const Params& th, const State& x0) const {
    std::vector<double> out(u_.size());
    State x = x0;
    for (std::size_t t = 1; t <= u_.size(); ++t) {
      x = mean_next(th, x, static_cast<int>(t));
      out[t - 1] = clamp10(x[1]);
    }
    return out;
  }

 private:
  static double level_sqrt(double v) { return std::sqrt(std::max(0.0, std::min(10.0, v))); }

  State drift(const State& x) const { return State(clamp10(x[0]), clamp10(x[1])); }

  Eigen::Matrix<double, 6, 2> basis(const State& x, int t) const {
    if (t < 1 || t > static_cast<int>(u_.size()))
      throw std::invalid_argument("WaterTankModel: time index outside input range");
    const double su = level_sqrt(x[0]);
    const double cu = clamp10(x[0]);
    const double sl = level_sqrt(x[1]);
    const double cl = clamp10(x[1]);
    const double over = std::max(0.0, x[0] - 10.0);
    Eigen::Matrix<double, 6, 2> B;
    B << -ts_ * su, ts_ * su,
         -ts_ * cu, ts_ * cu,
          0.0, -ts_ * sl,
          0.0, -ts_ * cl,
          ts_ * u_[static_cast<std::size_t>(t) - 1], 0.0,
          0.0, ts_ * over;
    return B;
  }

  void check_domain(const Params& th) const {
    if (!in_domain(th))
      throw std::invalid_argument("WaterTankModel: parameters outside domain (noise variances must be positive)");
  }

  std::vector<double> u_;
  double ts_;
};

}  // namespace psaem
