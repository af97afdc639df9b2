#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "psaem/coupling.hpp"
#include "psaem/io/config.hpp"
#include "psaem/io/csv.hpp"
#include "psaem/kernels.hpp"
#include "psaem/models/beta_bernoulli.hpp"
#include "psaem/models/lgss.hpp"
#include "psaem/models/watertank.hpp"
#include "psaem/oracle.hpp"
#include "psaem/saem.hpp"
#include "psaem/smc.hpp"
#include "psaem/version.hpp"

// Experiment runner behind the command-line tool: dataset simulation and
// ingestion, the learn/compare/couple-test drivers, and their CSV outputs.
// Every run writes a manifest (the fully resolved configuration plus version
// and seed bookkeeping) next to its outputs; re-running a manifest reproduces
// the outputs byte for byte.

namespace psaem::cli {

namespace fs = std::filesystem;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LearnColumns {
  std::vector<std::string> names;  // full column list of the learn-v1 schema
};

inline std::vector<std::string> learn_columns(const std::vector<std::string>& param_names) {
  std::vector<std::string> cols = {"seed", "iteration", "gamma"};
  cols.insert(cols.end(), param_names.begin(), param_names.end());
  for (const char* c : {"overlap", "accepted", "error_vs_oracle", "elapsed_s", "propagations",
                        "mixing_warning"})
    cols.emplace_back(c);
  return cols;
}

inline void write_manifest(const Config& cfg, const std::string& subcommand,
                           std::int64_t seed_offset, const fs::path& dir) {
  Config echo = cfg;
  echo.set("meta.version", kVersion);
  echo.set("meta.subcommand", subcommand);
  echo.set("meta.seed_offset", std::to_string(seed_offset));
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << echo.to_string();
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::vector<double> y;        // scalar observations (lgss, watertank)
  std::vector<std::uint32_t> y_mask;  // beta-bernoulli observations
  std::vector<double> u;        // watertank input
};

inline std::vector<double> synth_tank_input(int T, std::uint64_t seed) {
  // Piecewise-constant pump voltage, new level every 64 samples.
  Rng rng = make_rng(seed ^ 0x7a6b5c4dULL);
  std::vector<double> u(T);
  double level = 0.0;
  for (int t = 0; t < T; ++t) {
    if (t % 64 == 0) level = 1.0 + 5.0 * uniform01(rng);
    u[t] = level;
  }
  return u;
}

inline WaterTankModel::Params tank_params_from_config(const Config& cfg, const std::string& prefix) {
  WaterTankModel::Params th;
  const auto ks = cfg.get_doubles(prefix + ".k");
  if (ks.size() != 6) throw std::runtime_error("config: '" + prefix + ".k' needs 6 values");
  for (int i = 0; i < 6; ++i) th.k[i] = ks[i];
  th.sigma_w2 = cfg.get_double(prefix + ".sigma_w2");
  th.sigma_e2 = cfg.get_double(prefix + ".sigma_e2");
  th.xi0 = cfg.get_double(prefix + ".xi0");
  return th;
}

inline void simulate(const Config& cfg, std::int64_t seed_offset, const std::string& out_dir) {
  const std::string model_name = cfg.get_str("model.name");
  const int T = static_cast<int>(cfg.get_int("data.T"));
  if (T < 0) throw std::runtime_error("config: data.T must be nonnegative");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 1) + seed_offset);
  Rng rng = make_rng(seed);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  if (model_name == "lgss" || model_name == "lgss-full") {
    const LgssModel model(cfg.get_double("model.sigma_w2"), cfg.get_double("model.sigma_e2"));
    const LgssModel::Params th{cfg.get_double("model.theta_true")};
    if (!model.in_domain(th)) throw std::runtime_error("config: model.theta_true outside (-1, 1)");
    CsvTable xs{"sim-x-v1", {"t", "x"}, {}};
    CsvTable ys{"sim-y-v1", {"t", "y"}, {}};
    double x = model.sample_initial(th, rng);
    xs.rows.push_back({0.0, x});
    for (int t = 1; t <= T; ++t) {
      x = model.sample_transition(th, x, t, rng);
      const double y = normal(rng, x, std::sqrt(model.sigma_e2()));
      xs.rows.push_back({static_cast<double>(t), x});
      ys.rows.push_back({static_cast<double>(t), y});
    }
    write_csv((dir / "x.csv").string(), xs);
    write_csv((dir / "y.csv").string(), ys);
  } else if (model_name == "watertank") {
    auto u = synth_tank_input(T, seed);
    const WaterTankModel model(u, cfg.get_double("model.ts", 4.0));
    const auto th = tank_params_from_config(cfg, "model");
    CsvTable xs{"sim-x-v1", {"t", "x_u", "x_l"}, {}};
    CsvTable data{"tank-data-v1", {"u", "y"}, {}};
    auto x = model.sample_initial(th, rng);
    xs.rows.push_back({0.0, x[0], x[1]});
    for (int t = 1; t <= T; ++t) {
      x = model.sample_transition(th, x, t, rng);
      const double y = normal(rng, WaterTankModel::clamp10(x[1]), std::sqrt(th.sigma_e2));
      xs.rows.push_back({static_cast<double>(t), x[0], x[1]});
      data.rows.push_back({u[t - 1], y});
    }
    write_csv((dir / "x.csv").string(), xs);
    write_csv((dir / "data.csv").string(), data);
  } else if (model_name == "beta-bernoulli") {
    const int m = static_cast<int>(cfg.get_int("model.chains", 8));
    const BetaBernoulliChains model(m, cfg.get_double("model.obs_flip_prob", 0.1));
    const double a = cfg.get_double("model.a_true", 2.0);
    const double b = cfg.get_double("model.b_true", 5.0);
    BetaBernoulliChains::Params th;
    th.switch_prob.resize(m);
    for (int i = 0; i < m; ++i) th.switch_prob[i] = beta_draw(rng, a, b);
    CsvTable thetas{"sim-theta-v1", {"chain", "switch_prob"}, {}};
    for (int i = 0; i < m; ++i) thetas.rows.push_back({static_cast<double>(i), th.switch_prob[i]});
    CsvTable xs{"sim-x-v1", {"t", "state_mask"}, {}};
    CsvTable ys{"sim-y-v1", {"t", "obs_mask"}, {}};
    auto x = model.sample_initial(th, rng);
    xs.rows.push_back({0.0, static_cast<double>(x)});
    for (int t = 1; t <= T; ++t) {
      x = model.sample_transition(th, x, t, rng);
      std::uint32_t y = x;
      for (int i = 0; i < m; ++i)
        if (uniform01(rng) < cfg.get_double("model.obs_flip_prob", 0.1)) y ^= (1u << i);
      xs.rows.push_back({static_cast<double>(t), static_cast<double>(x)});
      ys.rows.push_back({static_cast<double>(t), static_cast<double>(y)});
    }
    write_csv((dir / "theta_true.csv").string(), thetas);
    write_csv((dir / "x.csv").string(), xs);
    write_csv((dir / "y.csv").string(), ys);
  } else {
    throw std::runtime_error("config: unknown model '" + model_name + "'");
  }
  write_manifest(cfg, "simulate", seed_offset, dir);
}

inline Dataset load_dataset(const Config& cfg) {
  Dataset ds;
  const std::string model_name = cfg.get_str("model.name");
  const std::string dir = cfg.get_str("data.dir");
  if (model_name == "watertank") {
    const std::string file =
        cfg.get_str("data.file", (fs::path(dir) / "data.csv").string());
    for (const auto& row : read_numeric_csv(file)) {
      if (row.size() < 2)
        throw std::runtime_error("watertank data must have two columns (u, y): " + file);
      ds.u.push_back(row[0]);
      ds.y.push_back(row[1]);
    }
    if (ds.y.empty()) throw std::runtime_error("watertank dataset is empty: " + file);
  } else if (model_name == "beta-bernoulli") {
    const auto table = read_csv((fs::path(dir) / "y.csv").string());
    for (const auto& row : table.rows) ds.y_mask.push_back(static_cast<std::uint32_t>(row[1]));
  } else {
    const auto table = read_csv((fs::path(dir) / "y.csv").string());
    for (const auto& row : table.rows) ds.y.push_back(row[1]);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// learn

struct SeedResult {
  std::int64_t seed = 0;
  LearnTrace trace;
};

namespace detail {

inline void validate_driver(const std::string& driver, int n_particles) {
  const bool known = driver == "psaem" || driver == "pimh-saem" || driver == "mcem" ||
                     driver == "pgas" || driver == "gibbs";
  if (!known) throw std::runtime_error("config: unknown driver '" + driver + "'");
  const int min_n = driver == "pimh-saem" ? 1 : 2;
  if (n_particles < min_n)
    throw std::runtime_error("config: driver '" + driver + "' needs N >= " +
                             std::to_string(min_n) + " (a conditional plus at least one free particle)");
}

inline StepSchedule schedule_from_config(const Config& cfg) {
  return StepSchedule(cfg.get_double("schedule.alpha", 0.7),
                      static_cast<int>(cfg.get_int("schedule.warmup", 0)));
}

template <class F>
std::vector<SeedResult> run_seeds(int n_seeds, std::int64_t base_seed, std::int64_t seed_offset,
                                  int threads, F&& run_one) {
  std::vector<SeedResult> results(n_seeds);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_seeds) return;
      const std::int64_t seed = base_seed + seed_offset + i;
      results[i] = SeedResult{seed, run_one(static_cast<std::uint64_t>(seed))};
    }
  };
  threads = std::max(1, threads);
  std::vector<std::future<void>> futs;
  for (int w = 0; w < threads - 1; ++w) futs.push_back(std::async(std::launch::async, worker));
  worker();
  for (auto& f : futs) f.get();
  return results;
}

}  // namespace detail

struct LearnOutput {
  CsvTable table;
  std::vector<SeedResult> seed_results;
};

namespace detail {

// Assembles the learn-v1 table; error_of maps an estimate vector to the
// oracle error column (NaN when no oracle applies).
inline CsvTable build_learn_table(const std::vector<std::string>& param_names,
                                  const std::vector<SeedResult>& results,
                                  const std::function<double(const Vector&)>& error_of) {
  CsvTable table{"learn-v1", learn_columns(param_names), {}};
  for (const auto& sr : results)
    for (const auto& rec : sr.trace.records) {
      std::vector<double> row = {static_cast<double>(sr.seed), static_cast<double>(rec.k),
                                 rec.gamma};
      for (int i = 0; i < rec.estimate.size(); ++i) row.push_back(rec.estimate[i]);
      row.insert(row.end(),
                 {rec.overlap, static_cast<double>(rec.accepted), error_of(rec.estimate),
                  rec.seconds, static_cast<double>(rec.propagations),
                  rec.mixing_warning ? 1.0 : 0.0});
      table.rows.push_back(std::move(row));
    }
  return table;
}

}  // namespace detail

inline LearnOutput learn(const Config& cfg, std::int64_t seed_offset, int threads) {
  const std::string model_name = cfg.get_str("model.name");
  const std::string driver = cfg.get_str("driver.name");
  const int n_particles = static_cast<int>(cfg.get_int("driver.N"));
  detail::validate_driver(driver, n_particles);
  const int n_iters = static_cast<int>(cfg.get_int("driver.n_iters"));
  const int n_seeds = static_cast<int>(cfg.get_int("driver.seeds", 1));
  const std::int64_t base_seed = cfg.get_int("driver.base_seed", 100);
  const Dataset ds = load_dataset(cfg);

  std::vector<std::string> param_names;
  std::vector<SeedResult> results;

  if (model_name == "lgss") {
    const LgssModel model(cfg.get_double("model.sigma_w2"), cfg.get_double("model.sigma_e2"));
    const LgssModel::Params theta0{cfg.get_double("driver.theta0", 0.1)};
    if (!model.in_domain(theta0)) throw std::runtime_error("config: driver.theta0 outside (-1, 1)");
    param_names = LgssModel::param_names();
    const std::optional<double> theta_ml =
        ds.y.empty() ? std::nullopt
                     : std::optional<double>(kalman_exact_ml(ds.y, model.sigma_w2(),
                                                             model.sigma_e2()));

    results = detail::run_seeds(n_seeds, base_seed, seed_offset, threads, [&](std::uint64_t seed) {
      Rng rng = make_rng(seed);
      LearnTrace trace;
      if (driver == "psaem") {
        PsaemOptions opt;
        opt.n_particles = n_particles;
        opt.schedule = detail::schedule_from_config(cfg);
        opt.n_iters = n_iters;
        opt.j_samples = static_cast<int>(cfg.get_int("driver.J", 1));
        const auto pf = bootstrap_pf(model, theta0, ds.y, n_particles, rng);
        const auto x0 = extract_trajectory(pf, rng);
        trace = psaem_fisherian(model, theta0, x0, ds.y, opt, rng);
      } else if (driver == "pimh-saem") {
        PsaemOptions opt;
        opt.n_particles = n_particles;
        opt.schedule = detail::schedule_from_config(cfg);
        opt.n_iters = n_iters;
        trace = pimh_saem(model, theta0, ds.y, opt, rng);
      } else if (driver == "mcem") {
        McemOptions opt;
        opt.n_particles = n_particles;
        opt.j_samples = static_cast<int>(cfg.get_int("driver.J", 10));
        opt.burnin = static_cast<int>(cfg.get_int("driver.burnin", 20));
        opt.n_iters = n_iters;
        const std::string sampler = cfg.get_str("driver.sampler", "pgas");
        if (sampler == "ffbsi")
          opt.sampler = McemSampler::kFfbsi;
        else if (sampler != "pgas")
          throw std::runtime_error("config: driver.sampler must be pgas or ffbsi");
        trace = mcem(model, theta0, ds.y, opt, rng);
      } else if (driver == "pgas") {
        const auto pf = bootstrap_pf(model, theta0, ds.y, n_particles, rng);
        auto x0 = extract_trajectory(pf, rng);
        const auto chain = pgas_chain(model, theta0, x0, ds.y, n_particles, n_iters, rng);
        psaem::detail::Stopwatch clock;
        for (int k = 1; k <= static_cast<int>(chain.size()); ++k) {
          const auto& prev = k == 1 ? x0 : chain[k - 2];
          trace.records.push_back(LearnRecord{k, kNaN, model.params_to_vector(theta0),
                                              overlap_diagnostic(prev, chain[k - 1]), -1,
                                              clock.seconds(),
                                              static_cast<std::int64_t>(k) * (n_particles - 1) *
                                                  static_cast<std::int64_t>(ds.y.size()),
                                              false});
        }
        trace.final_estimate = model.params_to_vector(theta0);
      } else if (driver == "gibbs") {
        const ConjugateLgssThetaKernel kernel(cfg.get_double("prior.mu0", 0.0),
                                              cfg.get_double("prior.tau02", 1.0),
                                              model.sigma_w2());
        const auto pf = bootstrap_pf(model, theta0, ds.y, n_particles, rng);
        auto x0 = extract_trajectory(pf, rng);
        const auto chain = gibbs_chain(model, kernel, theta0, x0, ds.y, n_particles, n_iters, rng);
        psaem::detail::Stopwatch clock;
        for (const auto& st : chain) {
          const auto& prev = st.iteration == 1 ? x0 : chain[st.iteration - 2].trajectory;
          trace.records.push_back(LearnRecord{st.iteration, kNaN, model.params_to_vector(st.theta),
                                              overlap_diagnostic(prev, st.trajectory), -1,
                                              clock.seconds(),
                                              static_cast<std::int64_t>(st.iteration) *
                                                  (n_particles - 1) *
                                                  static_cast<std::int64_t>(ds.y.size()),
                                              false});
        }
        if (!chain.empty()) trace.final_estimate = model.params_to_vector(chain.back().theta);
      }
      return trace;
    });

    auto table = detail::build_learn_table(param_names, results, [&](const Vector& est) {
      return theta_ml ? std::abs(est[0] - *theta_ml) : kNaN;
    });
    return LearnOutput{std::move(table), std::move(results)};
  }

  if (model_name == "lgss-full") {
    if (driver != "psaem" && driver != "mcem" && driver != "pimh-saem")
      throw std::runtime_error("config: lgss-full supports psaem, mcem and pimh-saem");
    const LgssFullModel model;
    const LgssFullModel::Params theta0{cfg.get_double("driver.theta0", 0.1),
                                       cfg.get_double("driver.sw0", 1.0),
                                       cfg.get_double("driver.se0", 1.0)};
    if (!model.in_domain(theta0)) throw std::runtime_error("config: initial parameters invalid");
    param_names = LgssFullModel::param_names();
    results = detail::run_seeds(n_seeds, base_seed, seed_offset, threads, [&](std::uint64_t seed) {
      Rng rng = make_rng(seed);
      if (driver == "mcem") {
        McemOptions opt;
        opt.n_particles = n_particles;
        opt.j_samples = static_cast<int>(cfg.get_int("driver.J", 10));
        opt.burnin = static_cast<int>(cfg.get_int("driver.burnin", 20));
        opt.n_iters = n_iters;
        return mcem(model, theta0, ds.y, opt, rng);
      }
      PsaemOptions opt;
      opt.n_particles = n_particles;
      opt.schedule = detail::schedule_from_config(cfg);
      opt.n_iters = n_iters;
      if (driver == "pimh-saem") return pimh_saem(model, theta0, ds.y, opt, rng);
      const auto pf = bootstrap_pf(model, theta0, ds.y, n_particles, rng);
      const auto x0 = extract_trajectory(pf, rng);
      return psaem_fisherian(model, theta0, x0, ds.y, opt, rng);
    });
    auto table =
        detail::build_learn_table(param_names, results, [](const Vector&) { return kNaN; });
    return LearnOutput{std::move(table), std::move(results)};
  }

  if (model_name == "watertank") {
    if (driver != "psaem" && driver != "mcem")
      throw std::runtime_error("config: watertank supports the psaem and mcem drivers");
    const WaterTankModel model(ds.u, cfg.get_double("model.ts", 4.0));
    const auto theta0 = tank_params_from_config(cfg, "init");
    param_names = WaterTankModel::param_names();
    results = detail::run_seeds(n_seeds, base_seed, seed_offset, threads, [&](std::uint64_t seed) {
      Rng rng = make_rng(seed);
      if (driver == "mcem") {
        McemOptions opt;
        opt.n_particles = n_particles;
        opt.j_samples = static_cast<int>(cfg.get_int("driver.J", 10));
        opt.burnin = static_cast<int>(cfg.get_int("driver.burnin", 20));
        opt.n_iters = n_iters;
        return mcem(model, theta0, ds.y, opt, rng);
      }
      PsaemOptions opt;
      opt.n_particles = n_particles;
      opt.schedule = detail::schedule_from_config(cfg);
      opt.n_iters = n_iters;
      const auto pf = bootstrap_pf(model, theta0, ds.y, n_particles, rng);
      const auto x0 = extract_trajectory(pf, rng);
      return psaem_fisherian(model, theta0, x0, ds.y, opt, rng);
    });

    auto table =
        detail::build_learn_table(param_names, results, [](const Vector&) { return kNaN; });
    return LearnOutput{std::move(table), std::move(results)};
  }

  if (model_name == "beta-bernoulli") {
    if (driver != "psaem")
      throw std::runtime_error("config: beta-bernoulli supports the psaem driver (Bayesian)");
    const int m = static_cast<int>(cfg.get_int("model.chains", 8));
    const BetaBernoulliChains model(m, cfg.get_double("model.obs_flip_prob", 0.1));
    const BetaPriorFamily prior;
    const BetaHyper eta0{cfg.get_double("driver.a0", 1.0), cfg.get_double("driver.b0", 1.0)};
    param_names = BetaPriorFamily::hyper_names();
    std::vector<std::uint32_t> ys = ds.y_mask;
    results = detail::run_seeds(n_seeds, base_seed, seed_offset, threads, [&](std::uint64_t seed) {
      Rng rng = make_rng(seed);
      PsaemOptions opt;
      opt.n_particles = n_particles;
      opt.schedule = detail::schedule_from_config(cfg);
      opt.n_iters = n_iters;
      BetaBernoulliChains::Params theta0;
      theta0.switch_prob = Vector::Constant(m, 0.5);
      const auto pf = bootstrap_pf(model, theta0, ys, n_particles, rng);
      const auto x0 = extract_trajectory(pf, rng);
      const auto kernel = [&model](const BetaHyper& eta, const BetaBernoulliChains::Params&,
                                   const Trajectory<std::uint32_t>& xs, Rng& r) {
        return model.gibbs_theta(eta, xs, r);
      };
      return psaem_bayesian(model, prior, kernel, eta0, theta0, x0, ys, opt, rng);
    });

    auto table =
        detail::build_learn_table(param_names, results, [](const Vector&) { return kNaN; });
    return LearnOutput{std::move(table), std::move(results)};
  }

  throw std::runtime_error("config: unknown model '" + model_name + "'");
}

inline void learn_to_dir(const Config& cfg, std::int64_t seed_offset, int threads,
                         const std::string& out_dir) {
  auto out = learn(cfg, seed_offset, threads);
  fs::create_directories(out_dir);
  write_csv((fs::path(out_dir) / "results.csv").string(), out.table);
  write_manifest(cfg, "learn", seed_offset, out_dir);
}

// ---------------------------------------------------------------------------
// compare

// Aggregates several learn configurations over the same dataset into
// per-method quantile series, keyed by iteration and by cumulative
// propagation count. Methods are listed in [compare] methods = a,b,...; each
// [method.X] section overrides [driver] keys.
inline CsvTable compare(const Config& cfg, std::int64_t seed_offset, int threads) {
  std::vector<std::string> methods;
  {
    std::stringstream ss(cfg.get_str("compare.methods"));
    std::string name;
    while (std::getline(ss, name, ',')) {
      name.erase(0, name.find_first_not_of(" \t"));
      name.erase(name.find_last_not_of(" \t") + 1);
      if (!name.empty()) methods.push_back(name);
    }
  }
  if (methods.size() < 1) throw std::runtime_error("config: compare.methods is empty");

  CsvTable table{"compare-v1",
                 {"method_id", "iteration", "err_median", "err_q25", "err_q75", "elapsed_s_median",
                  "propagations_median"},
                 {}};
  const auto quantile = [](std::vector<double> v, double q) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - lo) * (v[hi] - v[lo]);
  };

  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    Config sub = cfg;
    const std::string prefix = "method." + methods[mi] + ".";
    for (const auto& [key, value] : cfg.values())
      if (key.rfind(prefix, 0) == 0) sub.set("driver." + key.substr(prefix.size()), value);
    auto out = learn(sub, seed_offset, threads);

    // Column offsets in the learn-v1 schema.
    const auto& cols = out.table.columns;
    const auto col = [&](const std::string& name) {
      const auto it = std::find(cols.begin(), cols.end(), name);
      if (it == cols.end()) throw std::runtime_error("compare: missing column " + name);
      return static_cast<std::size_t>(it - cols.begin());
    };
    const std::size_t c_iter = col("iteration"), c_err = col("error_vs_oracle"),
                      c_el = col("elapsed_s"), c_props = col("propagations");
    std::map<int, std::vector<std::array<double, 3>>> by_iter;
    for (const auto& row : out.table.rows)
      by_iter[static_cast<int>(row[c_iter])].push_back({row[c_err], row[c_el], row[c_props]});
    for (const auto& [iter, rows] : by_iter) {
      std::vector<double> errs, els, props;
      for (const auto& r : rows) {
        errs.push_back(r[0]);
        els.push_back(r[1]);
        props.push_back(r[2]);
      }
      table.rows.push_back({static_cast<double>(mi), static_cast<double>(iter),
                            quantile(errs, 0.5), quantile(errs, 0.25), quantile(errs, 0.75),
                            quantile(els, 0.5), quantile(props, 0.5)});
    }
  }
  return table;
}

inline void compare_to_dir(const Config& cfg, std::int64_t seed_offset, int threads,
                           const std::string& out_dir) {
  const auto table = compare(cfg, seed_offset, threads);
  fs::create_directories(out_dir);
  write_csv((fs::path(out_dir) / "summary.csv").string(), table);
  write_manifest(cfg, "compare", seed_offset, out_dir);
}

// ---------------------------------------------------------------------------
// couple-test

// One CouplingReport row per parameter pair: the first theta paired with each
// listed theta, then with theta + gap for every configured gap.
inline CsvTable couple_test(const Config& cfg, std::int64_t seed_offset, int threads) {
  (void)threads;
  const std::string model_name = cfg.get_str("model.name");
  if (model_name != "lgss") throw std::runtime_error("couple-test: only the lgss model is wired");
  const auto thetas = cfg.has("couple.theta") ? cfg.get_doubles("couple.theta")
                                              : std::vector<double>{};
  if (thetas.empty()) throw std::runtime_error("config: couple.theta must list at least one value");
  // With a gap list, one row per gap (theta_0 vs theta_0 + gap); otherwise
  // theta_0 paired with every listed value, so a single theta pairs with
  // itself.
  std::vector<std::pair<double, double>> pairs;
  if (cfg.has("couple.gaps"))
    for (double g : cfg.get_doubles("couple.gaps")) pairs.emplace_back(thetas[0], thetas[0] + g);
  else
    for (double th : thetas) pairs.emplace_back(thetas[0], th);

  const int T = static_cast<int>(cfg.get_int("couple.T", 10));
  const int n = static_cast<int>(cfg.get_int("couple.N", 5));
  const int reps = static_cast<int>(cfg.get_int("couple.reps", 2000));
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("couple.seed", 7) + seed_offset);

  const LgssModel model(cfg.get_double("model.sigma_w2"), cfg.get_double("model.sigma_e2"));
  Rng rng = make_rng(seed);
  // Shared synthetic dataset and conditional trajectory for every pair.
  const LgssModel::Params gen{thetas[0]};
  std::vector<double> ys(T);
  Trajectory<double> x_cond(T + 1);
  x_cond[0] = model.sample_initial(gen, rng);
  for (int t = 1; t <= T; ++t) {
    x_cond[t] = model.sample_transition(gen, x_cond[t - 1], t, rng);
    ys[t - 1] = normal(rng, x_cond[t], std::sqrt(model.sigma_e2()));
  }

  CsvTable table{"couple-v1",
                 {"theta", "theta_tilde", "gap", "N", "reps", "identical_fraction",
                  "allstage_fraction", "resampling_rate", "ancestor_rate", "propagation_rate",
                  "terminal_rate"},
                 {}};
  for (const auto& [a, b] : pairs) {
    Rng pair_rng = make_rng(seed ^ splitmix64(static_cast<std::uint64_t>(table.rows.size()) + 17));
    const auto rep = coupling_probability(model, LgssModel::Params{a}, LgssModel::Params{b},
                                          x_cond, ys, n, reps, pair_rng);
    table.rows.push_back({a, b, std::abs(b - a), static_cast<double>(n),
                          static_cast<double>(reps), rep.identical_fraction,
                          rep.allstage_fraction, rep.resampling_rate, rep.ancestor_rate,
                          rep.propagation_rate, rep.terminal_rate});
  }
  return table;
}

inline void couple_test_to_dir(const Config& cfg, std::int64_t seed_offset, int threads,
                               const std::string& out_dir) {
  const auto table = couple_test(cfg, seed_offset, threads);
  fs::create_directories(out_dir);
  write_csv((fs::path(out_dir) / "coupling.csv").string(), table);
  write_manifest(cfg, "couple-test", seed_offset, out_dir);
}

// ---------------------------------------------------------------------------
// Water-tank figure of merit

// Free simulation RMSE of the mean dynamics against observed outputs; used by
// the synthetic benchmark and for reporting against an externally supplied
// test set.
inline double tank_simulation_rmse(const WaterTankModel& model, const WaterTankModel::Params& th,
                                   const std::vector<double>& ys) {
  if (ys.size() != model.input().size())
    throw std::invalid_argument("tank_simulation_rmse: length mismatch");
  const auto sim = model.simulate_mean_outputs(th, {th.xi0, 5.0});
  double sse = 0.0;
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const double d = sim[t] - ys[t];
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(ys.size()));
}

}  // namespace psaem::cli
