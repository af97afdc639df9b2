#pragma once

#include <Eigen/Dense>
#include <concepts>
#include <type_traits>
#include <vector>

#include "psaem/rng.hpp"

namespace psaem {

using Vector = Eigen::VectorXd;

// A state path x_{0:T}, indexed t = 0..T.
template <class State>
using Trajectory = std::vector<State>;

namespace detail {
template <class T>
inline constexpr bool is_eigen_v = std::is_base_of_v<Eigen::MatrixBase<T>, T>;
}

template <class State>
bool states_equal(const State& a, const State& b) {
  if constexpr (detail::is_eigen_v<State>) {
    return (a.array() == b.array()).all();
  } else {
    return a == b;
  }
}

template <class State>
bool states_close(const State& a, const State& b, double tol) {
  if (tol <= 0.0) return states_equal(a, b);
  if constexpr (detail::is_eigen_v<State>) {
    return (a - b).template lpNorm<Eigen::Infinity>() <= tol;
  } else {
    return std::abs(static_cast<double>(a) - static_cast<double>(b)) <= tol;
  }
}

// State-space model contract (Eq. 1 shape): Markov transition and pointwise
// observation densities, both evaluable in log space and samplable. The time
// index t is 1-based for transitions into x_t and observations y_t; models
// without exogenous inputs ignore it. The initial sampler receives the
// parameters because some models (water tank) have a learned initial mean;
// models with a parameter-free p(x_0) ignore the argument.
template <class M>
concept StateSpaceModel = requires(const M& m, const typename M::Params& th,
                                   const typename M::State& x, const typename M::Obs& y,
                                   Rng& rng) {
  typename M::State;
  typename M::Obs;
  typename M::Params;
  { m.in_domain(th) } -> std::convertible_to<bool>;
  { m.sample_initial(th, rng) } -> std::same_as<typename M::State>;
  { m.sample_transition(th, x, int{}, rng) } -> std::same_as<typename M::State>;
  { m.transition_logpdf(th, x, x, int{}) } -> std::convertible_to<double>;
  { m.observation_logpdf(th, x, y, int{}) } -> std::convertible_to<double>;
};

// Exponential-family extension: the complete-data log likelihood decomposes as
//   log p_theta(x_{0:T}, y_{1:T}) = -psi(theta, T) + <S(x, y), phi(theta, T)> + c
// with c independent of theta and S additive over time. phi/psi take the
// horizon T because the stacked statistic may mix per-step averages with raw
// components. mstep returns the unique maximizer of that expression plus the
// model-declared penalty mstep_penalty (zero for most models).
template <class M>
concept ExpFamilyModel = StateSpaceModel<M> &&
    requires(const M& m, const typename M::Params& th,
             const Trajectory<typename M::State>& xs, const std::vector<typename M::Obs>& ys,
             const Vector& s) {
      { m.suffstat_dim() } -> std::convertible_to<int>;
      { m.suffstats(xs, ys) } -> std::same_as<Vector>;
      { m.mstep(s) } -> std::same_as<typename M::Params>;
      { m.phi(th, int{}) } -> std::same_as<Vector>;
      { m.psi(th, int{}) } -> std::convertible_to<double>;
      { m.mstep_penalty(th) } -> std::convertible_to<double>;
      { m.params_to_vector(th) } -> std::same_as<Vector>;
      { m.params_from_vector(s) } -> std::same_as<typename M::Params>;
    };

}  // namespace psaem
