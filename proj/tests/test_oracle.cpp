#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "psaem/oracle.hpp"

using namespace psaem;

namespace {

// Dense multivariate-Gaussian evaluation of log p(y_{1:T}): the joint
// covariance of the states is assembled explicitly from the AR(1) recursions
// and the observation noise added on the diagonal.
double dense_gaussian_loglik(double theta, const std::vector<double>& ys, double sigma_w2,
                             double sigma_e2, double prior_var) {
  const int T = static_cast<int>(ys.size());
  std::vector<double> var(T + 1);
  var[0] = prior_var;
  for (int t = 1; t <= T; ++t) var[t] = theta * theta * var[t - 1] + sigma_w2;
  Eigen::MatrixXd cov(T, T);
  for (int s = 1; s <= T; ++s)
    for (int t = s; t <= T; ++t) {
      const double c = std::pow(theta, t - s) * var[s];
      cov(s - 1, t - 1) = c;
      cov(t - 1, s - 1) = c;
    }
  cov.diagonal().array() += sigma_e2;
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), T);
  const Eigen::VectorXd alpha = llt.solve(y);
  double logdet = 0.0;
  for (int i = 0; i < T; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (T * kLogTwoPi + logdet + y.dot(alpha));
}

DiscreteHmm::Params hmm_params(double stay, double emit) {
  DiscreteHmm::Params th;
  th.trans.resize(2, 2);
  th.trans << stay, 1 - stay, 1 - stay, stay;
  th.emis.resize(2, 2);
  th.emis << emit, 1 - emit, 1 - emit, emit;
  return th;
}

// Independent forward-backward smoother for the marginal check.
std::vector<Vector> forward_backward_marginals(const DiscreteHmm& hmm,
                                               const DiscreteHmm::Params& th,
                                               const std::vector<int>& ys) {
  const int n = hmm.n_states();
  const int T = static_cast<int>(ys.size());
  std::vector<Vector> fwd(T + 1), bwd(T + 1, Vector::Ones(n));
  fwd[0] = hmm.initial();
  for (int t = 1; t <= T; ++t) {
    fwd[t] = Vector::Zero(n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        fwd[t][j] += fwd[t - 1][i] * th.trans(i, j) * th.emis(j, ys[t - 1]);
    fwd[t] /= fwd[t].sum();
  }
  for (int t = T - 1; t >= 0; --t) {
    bwd[t] = Vector::Zero(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        bwd[t][i] += th.trans(i, j) * th.emis(j, ys[t]) * bwd[t + 1][j];
    bwd[t] /= bwd[t].sum();
  }
  std::vector<Vector> out(T + 1);
  for (int t = 0; t <= T; ++t) {
    out[t] = fwd[t].cwiseProduct(bwd[t]);
    out[t] /= out[t].sum();
  }
  return out;
}

std::vector<double> simulate_lgss_obs(double theta, int T, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  double x = normal(rng);
  std::vector<double> ys(T);
  for (int t = 0; t < T; ++t) {
    x = normal(rng, theta * x, 1.0);
    ys[t] = normal(rng, x, std::sqrt(0.3));
  }
  return ys;
}

}  // namespace

TEST_CASE("kalman single-observation value") {
  CHECK(kalman_loglik(0.0, {0.0}, 1.0, 0.3, 1.0) ==
        Catch::Approx(-0.5 * (kLogTwoPi + std::log(1.3))));
  CHECK(kalman_loglik(0.5, {}, 1.0, 0.3, 1.0) == 0.0);
  CHECK_THROWS_AS(kalman_loglik(0.5, {1.0}, -1.0, 0.3, 1.0), std::invalid_argument);
}

TEST_CASE("kalman matches the dense-Gaussian evaluation") {
  Rng rng = make_rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const int T = 1 + static_cast<int>(uniform01(rng) * 8);
    const double theta = 1.8 * uniform01(rng) - 0.9;
    std::vector<double> ys(T);
    for (auto& y : ys) y = normal(rng, 0.0, 2.0);
    const double a = kalman_loglik(theta, ys, 1.0, 0.3, 1.0);
    const double b = dense_gaussian_loglik(theta, ys, 1.0, 0.3, 1.0);
    CHECK(a == Catch::Approx(b).margin(1e-10));
  }
}

TEST_CASE("exact ml near zero for theta_true = 0") {
  int failures = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto ys = simulate_lgss_obs(0.0, 10000, 100 + seed);
    if (std::abs(kalman_exact_ml(ys, 1.0, 0.3)) >= 0.05) ++failures;
  }
  CHECK(failures <= 1);
}

TEST_CASE("ml scan reports unimodality on regular data") {
  const auto ys = simulate_lgss_obs(0.8, 400, 25);
  const auto scan = kalman_ml_scan(ys, 1.0, 0.3);
  CHECK_FALSE(scan.multimodal);
  CHECK(scan.theta_ml == kalman_exact_ml(ys, 1.0, 0.3));
}

TEST_CASE("exact ml is symmetric under sign flip of the data") {
  auto ys = simulate_lgss_obs(0.6, 200, 22);
  auto neg = ys;
  for (auto& y : neg) y = -y;
  CHECK(kalman_exact_ml(ys, 1.0, 0.3) == Catch::Approx(kalman_exact_ml(neg, 1.0, 0.3)).margin(1e-9));
}

TEST_CASE("grid search never beats the returned ml point") {
  const auto ys = simulate_lgss_obs(0.8, 300, 23);
  const double th_ml = kalman_exact_ml(ys, 1.0, 0.3);
  const double best = kalman_loglik(th_ml, ys, 1.0, 0.3);
  double grid_best = -1e300;
  const int n = 100000;
  for (int i = 1; i < n; ++i) {
    const double th = -1.0 + 2.0 * i / n;
    grid_best = std::max(grid_best, kalman_loglik(th, ys, 1.0, 0.3));
  }
  CHECK(grid_best <= best + 1e-8);
}

TEST_CASE("kalman loglik is smooth in theta") {
  const auto ys = simulate_lgss_obs(0.5, 100, 24);
  const auto f = [&](double th) { return kalman_loglik(th, ys, 1.0, 0.3); };
  for (double th : {-0.7, -0.2, 0.3, 0.8}) {
    const double h = 1e-5;
    const double central = (f(th + h) - f(th - h)) / (2 * h);
    const double h2 = 1e-3;
    const double five_point =
        (f(th - 2 * h2) - 8 * f(th - h2) + 8 * f(th + h2) - f(th + 2 * h2)) / (12 * h2);
    CHECK(central == Catch::Approx(five_point).margin(1e-6));
  }
}

TEST_CASE("enumeration with uninformative emissions gives the prior path law") {
  const DiscreteHmm hmm((Vector(2) << 0.3, 0.7).finished(), 2);
  auto th = hmm_params(0.8, 0.5);  // emission rows equal -> uninformative
  th.emis << 0.5, 0.5, 0.5, 0.5;
  const std::vector<int> ys = {0, 1, 0};
  const auto post = enumerate_posterior(hmm, th, ys);
  for (std::size_t idx = 0; idx < post.probs.size(); ++idx) {
    const auto xs = post.trajectory_of(idx);
    double prior = hmm.initial()[xs[0]];
    for (int t = 1; t <= 3; ++t) prior *= th.trans(xs[t - 1], xs[t]);
    CHECK(post.probs[idx] == Catch::Approx(prior).margin(1e-12));
  }
}

TEST_CASE("enumeration at T=0 returns the initial distribution") {
  const DiscreteHmm hmm((Vector(3) << 0.2, 0.3, 0.5).finished(), 2);
  const auto post = enumerate_posterior(hmm, hmm_params(0.8, 0.7), {});
  REQUIRE(post.probs.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(post.probs[i] == Catch::Approx(hmm.initial()[i]).margin(1e-15));
}

TEST_CASE("enumeration normalization and forward-backward marginals") {
  const DiscreteHmm hmm((Vector(2) << 0.4, 0.6).finished(), 2);
  const auto th = hmm_params(0.85, 0.75);
  const std::vector<int> ys = {0, 0, 1, 0, 1};
  const auto post = enumerate_posterior(hmm, th, ys);
  double total = 0.0;
  for (double p : post.probs) total += p;
  CHECK(total == Catch::Approx(1.0).margin(1e-12));

  const auto fb = forward_backward_marginals(hmm, th, ys);
  for (int t = 0; t <= 5; ++t) {
    Vector marg = Vector::Zero(2);
    for (std::size_t idx = 0; idx < post.probs.size(); ++idx)
      marg[post.trajectory_of(idx)[t]] += post.probs[idx];
    for (int i = 0; i < 2; ++i) CHECK(marg[i] == Catch::Approx(fb[t][i]).margin(1e-12));
  }
  CHECK_THROWS_AS(enumerate_posterior(hmm, th, std::vector<int>(25, 0)), std::invalid_argument);
}

TEST_CASE("exact EM increases the likelihood and has stable fixed points") {
  const DiscreteHmm hmm((Vector(2) << 0.5, 0.5).finished(), 2);
  Rng rng = make_rng(26);
  auto gen = hmm_params(0.8, 0.75);
  std::vector<int> ys;
  int x = hmm.sample_initial(gen, rng);
  for (int t = 1; t <= 8; ++t) {
    x = hmm.sample_transition(gen, x, t, rng);
    ys.push_back(uniform01(rng) < gen.emis(x, 0) ? 0 : 1);
  }

  auto th = hmm_params(0.6, 0.6);
  double prev = enumerate_posterior(hmm, th, ys).loglik;
  for (int it = 0; it < 200; ++it) {
    th = exact_em_step(hmm, th, ys);
    const double ll = enumerate_posterior(hmm, th, ys).loglik;
    CHECK(ll >= prev - 1e-12);
    prev = ll;
  }
  // After convergence one more step must not move the parameters.
  const auto next = exact_em_step(hmm, th, ys);
  CHECK((next.trans - th.trans).norm() < 1e-10);
  CHECK((next.emis - th.emis).norm() < 1e-10);
}
