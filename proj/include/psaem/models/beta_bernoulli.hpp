#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/models/beta_prior.hpp"
#include "psaem/rng.hpp"

namespace psaem {

// Empirical-Bayes demo model: M independent binary chains packed into one bit
// mask. Chain m switches its state between steps with probability theta_m and
// each bit is observed through an independent flip channel with known error
// rate rho. The theta_m are a priori iid Beta(a, b), which keeps the full
// conditional of theta conjugate (Beta with switch/stay counts) and makes the
// prior statistics exactly the Beta triple (M, sum log theta, sum log(1-theta)).
class BetaBernoulliChains {
 public:
  using State = std::uint32_t;
  using Obs = std::uint32_t;
  struct Params {
    Vector switch_prob;  // theta_m in (0,1), m = 0..M-1
  };

  // fixed_initial pins x_0 to a known mask; by default every bit starts from
  // an independent fair coin.
  BetaBernoulliChains(int n_chains, double obs_flip_prob, std::optional<State> fixed_initial = {})
      : m_(n_chains), rho_(obs_flip_prob), fixed_initial_(fixed_initial) {
    if (n_chains < 1 || n_chains > 31)
      throw std::invalid_argument("BetaBernoulliChains: need 1..31 chains");
    if (!(rho_ >= 0.0) || !(rho_ < 0.5))
      throw std::invalid_argument("BetaBernoulliChains: flip probability must lie in [0, 0.5)");
  }

  int n_chains() const { return m_; }

  bool in_domain(const Params& th) const {
    if (th.switch_prob.size() != m_) return false;
    return (th.switch_prob.array() > 0.0).all() && (th.switch_prob.array() < 1.0).all();
  }

  State sample_initial(const Params&, Rng& rng) const {
    if (fixed_initial_) return *fixed_initial_;
    State x = 0;
    for (int m = 0; m < m_; ++m)
      if (uniform01(rng) < 0.5) x |= (1u << m);
    return x;
  }

  State sample_transition(const Params& th, const State& x_prev, int, Rng& rng) const {
    check_domain(th);
    State x = x_prev;
    for (int m = 0; m < m_; ++m)
      if (uniform01(rng) < th.switch_prob[m]) x ^= (1u << m);
    return x;
  }

  double transition_logpdf(const Params& th, const State& x_prev, const State& x, int) const {
    check_domain(th);
    double lp = 0.0;
    for (int m = 0; m < m_; ++m) {
      const bool switched = ((x_prev ^ x) >> m) & 1u;
      lp += switched ? std::log(th.switch_prob[m]) : std::log1p(-th.switch_prob[m]);
    }
    return lp;
  }

  double observation_logpdf(const Params& th, const State& x, const Obs& y, int) const {
    check_domain(th);
    if (rho_ == 0.0) return x == y ? 0.0 : kNegInf;
    double lp = 0.0;
    for (int m = 0; m < m_; ++m) {
      const bool flipped = ((x ^ y) >> m) & 1u;
      lp += flipped ? std::log(rho_) : std::log1p(-rho_);
    }
    return lp;
  }

  // Per-chain switch and stay counts: [n_switch_0.., n_stay_0..].
  int suffstat_dim() const { return 2 * m_; }

  Vector suffstats(const Trajectory<State>& xs, const std::vector<Obs>& ys) const {
    const std::size_t T = ys.size();
    if (xs.size() != T + 1)
      throw std::invalid_argument("BetaBernoulliChains::suffstats: trajectory length must be T+1");
    Vector s = Vector::Zero(2 * m_);
    for (std::size_t t = 1; t <= T; ++t) {
      const State d = xs[t - 1] ^ xs[t];
      for (int m = 0; m < m_; ++m) {
        if ((d >> m) & 1u)
          s[m] += 1.0;
        else
          s[m_ + m] += 1.0;
      }
    }
    return s;
  }

  Params mstep(const Vector& s) const {
    if (s.size() != 2 * m_)
      throw std::invalid_argument("BetaBernoulliChains::mstep: statistic dimension");
    Params th;
    th.switch_prob.resize(m_);
    for (int m = 0; m < m_; ++m) {
      const double total = s[m] + s[m_ + m];
      if (!(total > 0.0) || !(s[m] > 0.0) || !(s[m_ + m] > 0.0))
        throw std::runtime_error("BetaBernoulliChains::mstep: degenerate statistics");
      th.switch_prob[m] = s[m] / total;
    }
    return th;
  }

  Vector phi(const Params& th, int) const {
    Vector p(2 * m_);
    for (int m = 0; m < m_; ++m) {
      p[m] = std::log(th.switch_prob[m]);
      p[m_ + m] = std::log1p(-th.switch_prob[m]);
    }
    return p;
  }
  double psi(const Params&, int) const { return 0.0; }
  double mstep_penalty(const Params&) const { return 0.0; }

  Vector params_to_vector(const Params& th) const { return th.switch_prob; }
  Params params_from_vector(const Vector& v) const { return Params{v}; }

  // Gibbs draw from the full conditional p(theta | x_{0:T}) under iid
  // Beta(a, b) priors on the switch probabilities.
  Params gibbs_theta(const BetaHyper& prior, const Trajectory<State>& xs, Rng& rng) const {
    Params th;
    th.switch_prob.resize(m_);
    Vector n_switch = Vector::Zero(m_), n_stay = Vector::Zero(m_);
    for (std::size_t t = 1; t < xs.size(); ++t) {
      const State d = xs[t - 1] ^ xs[t];
      for (int m = 0; m < m_; ++m) {
        if ((d >> m) & 1u)
          n_switch[m] += 1.0;
        else
          n_stay[m] += 1.0;
      }
    }
    for (int m = 0; m < m_; ++m)
      th.switch_prob[m] = beta_draw(rng, prior.a + n_switch[m], prior.b + n_stay[m]);
    return th;
  }

 private:
  void check_domain(const Params& th) const {
    if (!in_domain(th))
      throw std::invalid_argument("BetaBernoulliChains: switch probabilities outside (0, 1)");
  }

  int m_;
  double rho_;
  std::optional<State> fixed_initial_;
};

// Beta prior family hooks for the Bayesian SAEM driver.
struct BetaPriorFamily {
  using Hyper = BetaHyper;

  int dim() const { return 3; }

  Vector suffstats(const BetaBernoulliChains::Params& th) const {
    return beta_prior_suffstats(
        std::span<const double>(th.switch_prob.data(), th.switch_prob.size()));
  }
  Hyper mstep(const Vector& s) const { return beta_prior_mstep(s); }

  Vector hyper_to_vector(const Hyper& h) const {
    Vector v(2);
    v << h.a, h.b;
    return v;
  }
  static std::vector<std::string> hyper_names() { return {"a", "b"}; }
};

}  // namespace psaem
