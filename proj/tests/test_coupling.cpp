#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "psaem/coupling.hpp"
#include "psaem/models/lgss.hpp"
#include "psaem/oracle.hpp"
#include "test_helpers.hpp"

using namespace psaem;
using namespace psaem::testing;

namespace {

std::size_t flat_index(const Trajectory<int>& xs, int n_states) {
  std::size_t idx = 0;
  for (int s : xs) idx = idx * n_states + s;
  return idx;
}

// One-sample Kolmogorov-Smirnov distance against a cdf.
template <class Cdf>
double ks_distance(std::vector<double> xs, const Cdf& cdf) {
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max(d, std::abs((i + 1) / n - f));
    d = std::max(d, std::abs(i / n - f));
  }
  return d;
}

}  // namespace

TEST_CASE("discrete maximal coupling basics") {
  Rng rng = make_rng(110);
  SECTION("equal distributions always couple") {
    const std::vector<double> p = {0.2, 0.5, 0.3};
    for (int i = 0; i < 200; ++i) {
      const auto d = maximal_coupling_discrete(p, p, rng);
      CHECK(d.identical);
      CHECK(d.left == d.right);
    }
  }
  SECTION("disjoint supports never couple") {
    const std::vector<double> p = {1.0, 0.0}, q = {0.0, 1.0};
    for (int i = 0; i < 200; ++i) {
      const auto d = maximal_coupling_discrete(p, q, rng);
      CHECK_FALSE(d.identical);
      CHECK(d.left == 0);
      CHECK(d.right == 1);
    }
  }
  SECTION("coupling probability equals the overlap mass") {
    const std::vector<double> p = {0.5, 0.5}, q = {0.25, 0.75};
    const int n = 100000;
    long identical = 0;
    for (int i = 0; i < n; ++i) identical += maximal_coupling_discrete(p, q, rng).identical;
    const double se = std::sqrt(0.75 * 0.25 / n);
    CHECK(std::abs(static_cast<double>(identical) / n - 0.75) < 3.0 * se);
  }
  SECTION("invalid vectors rejected") {
    CHECK_THROWS_AS(maximal_coupling_discrete(std::vector<double>{0.5, 0.4},
                                              std::vector<double>{0.5, 0.5}, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(maximal_coupling_discrete(std::vector<double>{-0.1, 1.1},
                                              std::vector<double>{0.5, 0.5}, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("discrete coupling probability on random pairs with marginal checks") {
  Rng rng = make_rng(111);
  const int n_pairs = 50, reps = 20000;
  int failures = 0;
  for (int pair = 0; pair < n_pairs; ++pair) {
    const int k = 2 + static_cast<int>(uniform01(rng) * 4);
    std::vector<double> p(k), q(k);
    double sp = 0.0, sq = 0.0;
    for (int i = 0; i < k; ++i) {
      p[i] = 0.05 + uniform01(rng);
      q[i] = 0.05 + uniform01(rng);
      sp += p[i];
      sq += q[i];
    }
    for (int i = 0; i < k; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    double overlap = 0.0;
    for (int i = 0; i < k; ++i) overlap += std::min(p[i], q[i]);

    long identical = 0;
    std::vector<long> left_counts(k, 0), right_counts(k, 0);
    for (int r = 0; r < reps; ++r) {
      const auto d = maximal_coupling_discrete(p, q, rng);
      identical += d.identical;
      ++left_counts[d.left];
      ++right_counts[d.right];
    }
    const double se = std::sqrt(std::max(overlap * (1 - overlap), 1e-6) / reps);
    if (std::abs(static_cast<double>(identical) / reps - overlap) >= 3.0 * se) ++failures;
    CHECK(chi2_matches(left_counts, p));
    CHECK(chi2_matches(right_counts, q));
  }
  // 3-sigma criterion over 50 pairs: allow a single excursion.
  CHECK(failures <= 1);
}

TEST_CASE("continuous maximal coupling") {
  Rng rng = make_rng(112);
  const auto gauss_logpdf = [](double mu) {
    return [mu](double x) { return log_normal_pdf(x, mu, 1.0); };
  };
  const auto gauss_sampler = [](double mu) {
    return [mu](Rng& r) { return normal(r, mu, 1.0); };
  };

  SECTION("identical distributions always couple") {
    for (int i = 0; i < 200; ++i) {
      const auto d = maximal_coupling_continuous<double>(gauss_logpdf(0.0), gauss_sampler(0.0),
                                                         gauss_logpdf(0.0), gauss_sampler(0.0),
                                                         rng);
      CHECK(d.identical);
      CHECK(d.left == d.right);
    }
  }
  SECTION("shifted gaussians couple with probability 2 Phi(-delta/2)") {
    const int n = 100000;
    long identical = 0;
    std::vector<double> lefts, rights;
    lefts.reserve(n);
    rights.reserve(n);
    for (int i = 0; i < n; ++i) {
      const auto d = maximal_coupling_continuous<double>(gauss_logpdf(0.0), gauss_sampler(0.0),
                                                         gauss_logpdf(0.1), gauss_sampler(0.1),
                                                         rng);
      identical += d.identical;
      lefts.push_back(d.left);
      rights.push_back(d.right);
      if (d.identical) CHECK(d.left == d.right);
    }
    const double expected = 2.0 * norm_cdf(-0.05);
    const double se = std::sqrt(expected * (1 - expected) / n);
    CHECK(std::abs(static_cast<double>(identical) / n - expected) < 3.0 * se);

    // Marginal faithfulness at the 0.001 level (KS critical value 1.95/sqrt(n)).
    const double crit = 1.95 / std::sqrt(static_cast<double>(n));
    CHECK(ks_distance(lefts, [](double x) { return norm_cdf(x); }) < crit);
    CHECK(ks_distance(rights, [](double x) { return norm_cdf(x - 0.1); }) < crit);
  }
  SECTION("disjoint supports never couple") {
    // Uniform on [0,1] against uniform on [2,3].
    const auto lp = [](double x) { return (x >= 0.0 && x <= 1.0) ? 0.0 : kNegInf; };
    const auto sp = [](Rng& r) { return uniform01(r); };
    const auto lq = [](double x) { return (x >= 2.0 && x <= 3.0) ? 0.0 : kNegInf; };
    const auto sq = [](Rng& r) { return 2.0 + uniform01(r); };
    for (int i = 0; i < 200; ++i) {
      const auto d = maximal_coupling_continuous<double>(lp, sp, lq, sq, rng);
      CHECK_FALSE(d.identical);
    }
  }
}

TEST_CASE("coupled cpfas with equal parameters is an exact copy") {
  const LgssModel model(1.0, 0.3);
  const auto ys = lgss_data(0.6, 0.3, 15, 113);
  Rng rng = make_rng(114);
  Trajectory<double> x_cond(16, 0.5);
  for (int rep = 0; rep < 50; ++rep) {
    CouplingStageCounts counts;
    const auto [left, right] =
        coupled_cpfas(model, {0.6}, {0.6}, x_cond, ys, 5, rng, &counts);
    CHECK(left == right);
    CHECK(counts.all_coupled());
  }
}

TEST_CASE("coupled cpfas marginals match the exact kernel law") {
  const DiscreteHmm hmm((Vector(2) << 0.4, 0.6).finished(), 2);
  const auto theta = hmm_params(0.75, 0.7);
  const auto theta_tilde = hmm_params(0.6, 0.8);
  const std::vector<int> ys = {0, 1};
  const Trajectory<int> x_cond = {1, 0, 1};
  const int n = 2;

  const auto law_left = CpfasEnumerator(hmm, theta, x_cond, ys, n).kernel_law();
  const auto law_right = CpfasEnumerator(hmm, theta_tilde, x_cond, ys, n).kernel_law();

  Rng rng = make_rng(115);
  const int reps = 100000;
  std::vector<double> freq_left(law_left.size(), 0.0), freq_right(law_right.size(), 0.0);
  for (int r = 0; r < reps; ++r) {
    const auto [left, right] = coupled_cpfas(hmm, theta, theta_tilde, x_cond, ys, n, rng);
    freq_left[flat_index(left, 2)] += 1.0 / reps;
    freq_right[flat_index(right, 2)] += 1.0 / reps;
  }
  CHECK(total_variation(freq_left, law_left) < 0.01);
  CHECK(total_variation(freq_right, law_right) < 0.01);

  // Degeneracy cross-check: independent single filters have the same
  // marginals, so the coupling layer changes the joint law only.
  std::vector<double> freq_indep(law_left.size(), 0.0);
  for (int r = 0; r < reps / 2; ++r)
    freq_indep[flat_index(cpfas_kernel(hmm, theta, x_cond, ys, n, rng), 2)] += 2.0 / reps;
  CHECK(total_variation(freq_indep, freq_left) < 0.015);
}

TEST_CASE("coupled cpfas at T=0 couples whenever the terminal draw couples") {
  const LgssModel model(1.0, 0.3);
  Rng rng = make_rng(116);
  const Trajectory<double> x_cond = {1.0};
  for (int rep = 0; rep < 100; ++rep) {
    const auto [left, right] = coupled_cpfas(model, {0.2}, {0.9}, x_cond, {}, 4, rng);
    // Weight vectors are uniform on both sides at T=0, so the terminal index
    // coupling succeeds with probability one.
    CHECK(left == right);
  }
}

TEST_CASE("coupling probability report") {
  const LgssModel model(1.0, 0.3);
  const auto ys = lgss_data(0.5, 0.3, 10, 117);
  Rng cond_rng = make_rng(118);
  Trajectory<double> x_cond(11);
  x_cond[0] = normal(cond_rng);
  for (int t = 1; t <= 10; ++t) x_cond[t] = normal(cond_rng, 0.5 * x_cond[t - 1], 1.0);

  SECTION("equal parameters couple with probability one") {
    Rng rng = make_rng(119);
    const auto rep = coupling_probability(model, {0.5}, {0.5}, x_cond, ys, 5, 500, rng);
    CHECK(rep.identical_fraction == 1.0);
    CHECK(rep.allstage_fraction == 1.0);
  }
  SECTION("identical fraction decays with the parameter gap and is near-linear") {
    const std::vector<double> gaps = {0.001, 0.005, 0.01, 0.05, 0.1};
    const int reps = 4000;
    std::vector<double> fracs;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      Rng rng = make_rng(120 + i);
      const auto rep =
          coupling_probability(model, {0.5}, {0.5 + gaps[i]}, x_cond, ys, 5, reps, rng);
      fracs.push_back(rep.identical_fraction);
      CHECK(rep.allstage_fraction <= rep.identical_fraction + 1e-12);
    }
    INFO("fractions: " << fracs[0] << " " << fracs[1] << " " << fracs[2] << " " << fracs[3] << " "
                       << fracs[4]);
    for (std::size_t i = 1; i < fracs.size(); ++i) {
      const double se = std::sqrt(std::max(fracs[i] * (1 - fracs[i]), fracs[i - 1] * (1 - fracs[i - 1])) /
                                  reps);
      CHECK(fracs[i] <= fracs[i - 1] + 2.0 * se);
    }
    // Near-origin least-squares line through (gap, 1 - fraction) on the three
    // smallest gaps: intercept within noise of zero, consistent with a
    // 1 - (C/2) gap lower bound.
    double sx = 0, sy = 0, sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      sx += gaps[i];
      sy += 1 - fracs[i];
      sxy += gaps[i] * (1 - fracs[i]);
      sxx += gaps[i] * gaps[i];
    }
    const double slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / 3;
    const double se0 = std::sqrt(fracs[2] * (1 - fracs[2]) / reps) + 1e-4;
    CHECK(slope > 0.0);
    CHECK(std::abs(intercept) < 2.0 * se0);
  }
}
