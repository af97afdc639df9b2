#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "psaem/core.hpp"
#include "psaem/math.hpp"
#include "psaem/rng.hpp"
#include "psaem/smc.hpp"

namespace psaem {

struct CoupledIndexDraw {
  int left = 0;
  int right = 0;
  bool identical = false;
};

template <class State>
struct CoupledDraw {
  State left;
  State right;
  bool identical = false;
};

namespace detail {

// Maximal coupling of two categorical distributions given unnormalized log
// weights: with probability sum_i min(p_i, q_i) both margins draw the same
// index from the overlap; otherwise the margins draw independently from the
// disjoint residuals, so identical <=> left == right.
inline CoupledIndexDraw maximal_coupling_categorical_log(std::span<const double> lp,
                                                         std::span<const double> lq, Rng& rng) {
  const std::size_t n = lp.size();
  if (n == 0 || lq.size() != n)
    throw std::invalid_argument("maximal coupling: weight vectors empty or of unequal length");
  const double zp = log_sum_exp(lp);
  const double zq = log_sum_exp(lq);
  if (!std::isfinite(zp) || !std::isfinite(zq))
    throw std::invalid_argument("maximal coupling: all weights are zero on one margin");
  std::vector<double> p(n), q(n), overlap(n);
  double alpha = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(lp[i] - zp);
    q[i] = std::exp(lq[i] - zq);
    overlap[i] = std::min(p[i], q[i]);
    alpha += overlap[i];
  }
  if (uniform01(rng) < alpha) {
    const int idx = categorical_draw(overlap, rng);
    return CoupledIndexDraw{idx, idx, true};
  }
  std::vector<double> rp(n), rq(n);
  for (std::size_t i = 0; i < n; ++i) {
    rp[i] = p[i] - overlap[i];
    rq[i] = q[i] - overlap[i];
  }
  return CoupledIndexDraw{categorical_draw(rp, rng), categorical_draw(rq, rng), false};
}

}  // namespace detail

// Maximal coupling of two discrete distributions given as probability
// vectors; the probability that the two coordinates coincide equals
// sum_i min(p_i, q_i), the total variation complement.
inline CoupledIndexDraw maximal_coupling_discrete(std::span<const double> p,
                                                  std::span<const double> q, Rng& rng) {
  if (p.size() != q.size() || p.empty())
    throw std::invalid_argument("maximal_coupling_discrete: probability vectors of unequal length");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || !std::isfinite(q[i]) || p[i] < 0.0 || q[i] < 0.0)
      throw std::invalid_argument("maximal_coupling_discrete: invalid probability vector");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw std::invalid_argument("maximal_coupling_discrete: probabilities must sum to 1");
  std::vector<double> overlap(p.size()), rp(p.size()), rq(p.size());
  double alpha = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    overlap[i] = std::min(p[i], q[i]);
    alpha += overlap[i];
  }
  if (uniform01(rng) < alpha) {
    const int idx = categorical_draw(overlap, rng);
    return CoupledIndexDraw{idx, idx, true};
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    rp[i] = p[i] - overlap[i];
    rq[i] = q[i] - overlap[i];
  }
  return CoupledIndexDraw{categorical_draw(rp, rng), categorical_draw(rq, rng), false};
}

// Maximal coupling of two continuous distributions via the rejection
// realization: X ~ P is kept on both margins when U p(X) <= q(X); otherwise Y
// is drawn from the residual of Q by rejection. Marginals are exact and the
// coupling probability is the integral of min(p, q). The densities must be
// proper log densities of the samplers; that consistency is the caller's
// contract.
template <class State, class LogPdfP, class SamplerP, class LogPdfQ, class SamplerQ>
CoupledDraw<State> maximal_coupling_continuous(const LogPdfP& logpdf_p, const SamplerP& sampler_p,
                                               const LogPdfQ& logpdf_q, const SamplerQ& sampler_q,
                                               Rng& rng) {
  const State x = sampler_p(rng);
  const double lpx = logpdf_p(x);
  const double lqx = logpdf_q(x);
  if (std::isnan(lpx) || std::isnan(lqx) || lpx == std::numeric_limits<double>::infinity() ||
      lqx == std::numeric_limits<double>::infinity())
    throw std::invalid_argument("maximal_coupling_continuous: non-finite density value");
  if (std::log(uniform01(rng)) + lpx <= lqx) return CoupledDraw<State>{x, x, true};
  constexpr long kMaxRejections = 1000000;
  for (long it = 0; it < kMaxRejections; ++it) {
    const State y = sampler_q(rng);
    const double lqy = logpdf_q(y);
    const double lpy = logpdf_p(y);
    if (std::isnan(lpy) || std::isnan(lqy) || lpy == std::numeric_limits<double>::infinity() ||
        lqy == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("maximal_coupling_continuous: non-finite density value");
    if (std::log(uniform01(rng)) + lqy > lpy) return CoupledDraw<State>{x, y, false};
  }
  throw std::runtime_error(
      "maximal_coupling_continuous: residual rejection sampler failed to accept (densities "
      "inconsistent with samplers?)");
}

// Per-stage coupling counters for one coupled CPF-AS sweep: how many of the
// resampling-index, ancestor-index, propagation and terminal-index couplings
// returned identical draws.
struct CouplingStageCounts {
  std::int64_t resampling_identical = 0;
  std::int64_t resampling_total = 0;
  std::int64_t ancestor_identical = 0;
  std::int64_t ancestor_total = 0;
  std::int64_t propagation_identical = 0;
  std::int64_t propagation_total = 0;
  std::int64_t terminal_identical = 0;
  std::int64_t terminal_total = 0;

  bool all_coupled() const {
    return resampling_identical == resampling_total && ancestor_identical == ancestor_total &&
           propagation_identical == propagation_total && terminal_identical == terminal_total;
  }
};

// Coupled conditional particle filters with ancestor sampling: runs the
// CPF-AS recursions under theta and theta_tilde simultaneously from the same
// conditional trajectory, with maximal couplings of the resampling indices,
// the propagation kernels, the ancestor-sampling indices and the terminal
// index. Each marginal output is one draw from the corresponding
// single-filter kernel.
template <StateSpaceModel M>
std::pair<Trajectory<typename M::State>, Trajectory<typename M::State>> coupled_cpfas(
    const M& model, const typename M::Params& theta, const typename M::Params& theta_tilde,
    const Trajectory<typename M::State>& x_cond, const std::vector<typename M::Obs>& ys, int n,
    Rng& rng, CouplingStageCounts* counts = nullptr) {
  if (n < 2) throw std::invalid_argument("coupled_cpfas: need N >= 2");
  const int T = static_cast<int>(ys.size());
  if (static_cast<int>(x_cond.size()) != T + 1)
    throw std::invalid_argument("coupled_cpfas: conditional trajectory length must be T+1");
  using State = typename M::State;

  CouplingStageCounts local;
  CouplingStageCounts& c = counts ? *counts : local;

  std::vector<std::vector<State>> xs(T + 1), txs(T + 1);
  std::vector<std::vector<int>> anc(T + 1), tanc(T + 1);
  std::vector<double> lw(n, 0.0), tlw(n, 0.0);

  xs[0].reserve(n);
  for (int i = 0; i < n - 1; ++i) xs[0].push_back(model.sample_initial(theta, rng));
  xs[0].push_back(x_cond[0]);
  txs[0] = xs[0];  // both filters share the free initial draws

  std::vector<double> as_l(n), as_r(n);
  for (int t = 1; t <= T; ++t) {
    anc[t].resize(n);
    tanc[t].resize(n);
    xs[t].resize(n);
    txs[t].resize(n);
    for (int i = 0; i < n - 1; ++i) {
      const auto a = detail::maximal_coupling_categorical_log(lw, tlw, rng);
      anc[t][i] = a.left;
      tanc[t][i] = a.right;
      c.resampling_total++;
      c.resampling_identical += a.identical;

      const State& src_l = xs[t - 1][a.left];
      const State& src_r = txs[t - 1][a.right];
      const auto draw = maximal_coupling_continuous<State>(
          [&](const State& v) { return model.transition_logpdf(theta, src_l, v, t); },
          [&](Rng& r) { return model.sample_transition(theta, src_l, t, r); },
          [&](const State& v) { return model.transition_logpdf(theta_tilde, src_r, v, t); },
          [&](Rng& r) { return model.sample_transition(theta_tilde, src_r, t, r); }, rng);
      xs[t][i] = draw.left;
      txs[t][i] = draw.right;
      c.propagation_total++;
      c.propagation_identical += draw.identical;
    }
    for (int j = 0; j < n; ++j) {
      as_l[j] = lw[j] + model.transition_logpdf(theta, xs[t - 1][j], x_cond[t], t);
      as_r[j] = tlw[j] + model.transition_logpdf(theta_tilde, txs[t - 1][j], x_cond[t], t);
    }
    CoupledIndexDraw a_cond;
    try {
      a_cond = detail::maximal_coupling_categorical_log(as_l, as_r, rng);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("coupled_cpfas: ancestor-sampling weights vanished at t=" +
                               std::to_string(t));
    }
    anc[t][n - 1] = a_cond.left;
    tanc[t][n - 1] = a_cond.right;
    c.ancestor_total++;
    c.ancestor_identical += a_cond.identical;
    xs[t][n - 1] = x_cond[t];
    txs[t][n - 1] = x_cond[t];

    for (int i = 0; i < n; ++i) {
      lw[i] = model.observation_logpdf(theta, xs[t][i], ys[t - 1], t);
      tlw[i] = model.observation_logpdf(theta_tilde, txs[t][i], ys[t - 1], t);
    }
    if (!std::isfinite(log_sum_exp(lw)) || !std::isfinite(log_sum_exp(tlw)))
      throw std::runtime_error("coupled_cpfas: all weights vanished at t=" + std::to_string(t));
  }

  const auto terminal = detail::maximal_coupling_categorical_log(lw, tlw, rng);
  c.terminal_total++;
  c.terminal_identical += terminal.identical;

  Trajectory<State> left(T + 1), right(T + 1);
  int j = terminal.left, tj = terminal.right;
  left[T] = xs[T][j];
  right[T] = txs[T][tj];
  for (int t = T - 1; t >= 0; --t) {
    j = anc[t + 1][j];
    tj = tanc[t + 1][tj];
    left[t] = xs[t][j];
    right[t] = txs[t][tj];
  }
  return {std::move(left), std::move(right)};
}

// Monte Carlo estimate of the kernel coupling probability at a parameter
// pair. identical_fraction counts exactly identical output trajectories (the
// quantity bounded below by 1 - (C/2) ||theta - theta_tilde||);
// allstage_fraction counts the cruder event that every stage coupled, which
// is the event the proof bounds.
struct CouplingReport {
  Vector theta;
  Vector theta_tilde;
  int reps = 0;
  double identical_fraction = 0.0;
  double allstage_fraction = 0.0;
  double resampling_rate = 1.0;
  double ancestor_rate = 1.0;
  double propagation_rate = 1.0;
  double terminal_rate = 1.0;
};

template <StateSpaceModel M>
CouplingReport coupling_probability(const M& model, const typename M::Params& theta,
                                    const typename M::Params& theta_tilde,
                                    const Trajectory<typename M::State>& x_cond,
                                    const std::vector<typename M::Obs>& ys, int n, int reps,
                                    Rng& rng) {
  if (reps < 1) throw std::invalid_argument("coupling_probability: need reps >= 1");
  StreamFork fork(rng);
  CouplingStageCounts totals;
  int identical = 0, allstage = 0;
  for (int r = 0; r < reps; ++r) {
    Rng child = fork.at(r, 0);
    CouplingStageCounts counts;
    const auto [left, right] = coupled_cpfas(model, theta, theta_tilde, x_cond, ys, n, child, &counts);
    bool same = left.size() == right.size();
    for (std::size_t t = 0; same && t < left.size(); ++t) same = states_equal(left[t], right[t]);
    identical += same;
    allstage += counts.all_coupled();
    totals.resampling_identical += counts.resampling_identical;
    totals.resampling_total += counts.resampling_total;
    totals.ancestor_identical += counts.ancestor_identical;
    totals.ancestor_total += counts.ancestor_total;
    totals.propagation_identical += counts.propagation_identical;
    totals.propagation_total += counts.propagation_total;
    totals.terminal_identical += counts.terminal_identical;
    totals.terminal_total += counts.terminal_total;
  }
  const auto rate = [](std::int64_t num, std::int64_t den) {
    return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 1.0;
  };
  CouplingReport rep;
  if constexpr (requires { model.params_to_vector(theta); }) {
    rep.theta = model.params_to_vector(theta);
    rep.theta_tilde = model.params_to_vector(theta_tilde);
  }
  rep.reps = reps;
  rep.identical_fraction = static_cast<double>(identical) / reps;
  rep.allstage_fraction = static_cast<double>(allstage) / reps;
  rep.resampling_rate = rate(totals.resampling_identical, totals.resampling_total);
  rep.ancestor_rate = rate(totals.ancestor_identical, totals.ancestor_total);
  rep.propagation_rate = rate(totals.propagation_identical, totals.propagation_total);
  rep.terminal_rate = rate(totals.terminal_identical, totals.terminal_total);
  return rep;
}

}  // namespace psaem
