#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "psaem/experiment.hpp"

using namespace psaem;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The result tables are reproducible bit for bit except for the wall-clock
// column, which is measurement rather than result.
std::string strip_elapsed(const std::string& csv_path) {
  const auto table = read_csv(csv_path);
  std::size_t skip = table.columns.size();
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    if (table.columns[c] == "elapsed_s" || table.columns[c] == "elapsed_s_median") skip = c;
  std::string out;
  for (const auto& row : table.rows)
    for (std::size_t c = 0; c < row.size(); ++c)
      if (c != skip) out += format_double(row[c]) + (c + 1 == row.size() ? "\n" : ",");
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "psaem_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kLgssConfig = R"(
# LGSS experiment
[model]
name = lgss
sigma_w2 = 1.0
sigma_e2 = 0.3
theta_true = 0.9

[data]
T = 300
seed = 1
dir = {DIR}

[driver]
name = psaem
N = 10
n_iters = 40
seeds = 2
base_seed = 100
theta0 = 0.1

[schedule]
alpha = 0.7
warmup = 0
)";

Config lgss_config(const fs::path& dir) {
  std::string text = kLgssConfig;
  const auto pos = text.find("{DIR}");
  text.replace(pos, 5, dir.string());
  return Config::from_string(text);
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = Config::from_string("[a]\nx = 1.5 # comment\ny=2\n[b]\nname = hello\n");
  CHECK(cfg.get_double("a.x") == 1.5);
  CHECK(cfg.get_int("a.y") == 2);
  CHECK(cfg.get_str("b.name") == "hello");
  CHECK(cfg.get_double("a.missing", 7.0) == 7.0);
  CHECK_THROWS_AS(cfg.get_double("a.missing"), std::runtime_error);
  CHECK_THROWS_AS(cfg.get_double("b.name"), std::runtime_error);
  CHECK_THROWS_AS(Config::from_string("novalue\n"), std::runtime_error);

  // Round trip through the serialized form.
  const auto echo = Config::from_string(cfg.to_string());
  CHECK(echo.values() == cfg.values());
}

TEST_CASE("simulate writes the documented row counts") {
  SECTION("lgss T=300") {
    const auto dir = fresh_dir("sim_lgss");
    auto cfg = lgss_config(dir);
    cli::simulate(cfg, 0, dir.string());
    const auto xs = read_csv((dir / "x.csv").string());
    const auto ys = read_csv((dir / "y.csv").string());
    CHECK(xs.rows.size() == 301);
    CHECK(ys.rows.size() == 300);
    CHECK(xs.schema == "sim-x-v1");
  }
  SECTION("T=0 gives a single state row and an empty observation table") {
    const auto dir = fresh_dir("sim_t0");
    auto cfg = lgss_config(dir);
    cfg.set("data.T", "0");
    cli::simulate(cfg, 0, dir.string());
    CHECK(read_csv((dir / "x.csv").string()).rows.size() == 1);
    CHECK(read_csv((dir / "y.csv").string()).rows.empty());
  }
  SECTION("water tank with the published initial values stays finite") {
    const auto dir = fresh_dir("sim_tank");
    auto cfg = Config::from_string(R"(
[model]
name = watertank
k = 0.05,0.05,0.05,0.05,0.0,0.0
sigma_w2 = 0.1
sigma_e2 = 0.1
xi0 = 6.0

[data]
T = 1024
seed = 3
)");
    cli::simulate(cfg, 0, dir.string());
    const auto data = read_csv((dir / "data.csv").string());
    REQUIRE(data.rows.size() == 1024);
    for (const auto& row : data.rows)
      for (double v : row) CHECK(std::isfinite(v));
  }
  SECTION("regeneration with the same seed is bit-identical") {
    const auto dir1 = fresh_dir("sim_rep1");
    const auto dir2 = fresh_dir("sim_rep2");
    auto cfg = lgss_config(dir1);
    cli::simulate(cfg, 0, dir1.string());
    cli::simulate(cfg, 0, dir2.string());
    CHECK(read_file(dir1 / "y.csv") == read_file(dir2 / "y.csv"));
  }
}

TEST_CASE("learn validation") {
  const auto dir = fresh_dir("learn_validate");
  auto cfg = lgss_config(dir);
  cli::simulate(cfg, 0, dir.string());
  SECTION("psaem with N=1 is rejected") {
    cfg.set("driver.N", "1");
    CHECK_THROWS_WITH(cli::learn(cfg, 0, 1), Catch::Matchers::ContainsSubstring("N >= 2"));
  }
  SECTION("unknown driver is rejected") {
    cfg.set("driver.name", "unknown-driver");
    CHECK_THROWS_WITH(cli::learn(cfg, 0, 1), Catch::Matchers::ContainsSubstring("unknown driver"));
  }
  SECTION("invalid schedule is rejected") {
    cfg.set("schedule.alpha", "0.4");
    CHECK_THROWS_AS(cli::learn(cfg, 0, 1), std::invalid_argument);
  }
}

TEST_CASE("learn is deterministic and thread-count independent") {
  const auto dir = fresh_dir("learn_det");
  auto cfg = lgss_config(dir);
  cli::simulate(cfg, 0, dir.string());

  const auto out1 = fresh_dir("learn_det_out1");
  const auto out2 = fresh_dir("learn_det_out2");
  cli::learn_to_dir(cfg, 0, 1, out1.string());
  cli::learn_to_dir(cfg, 0, 2, out2.string());
  const auto r1 = strip_elapsed((out1 / "results.csv").string());
  CHECK(r1 == strip_elapsed((out2 / "results.csv").string()));
  CHECK(!r1.empty());

  SECTION("the manifest reruns to identical outputs") {
    const auto out3 = fresh_dir("learn_det_out3");
    const auto manifest = Config::from_file((out1 / "manifest.txt").string());
    cli::learn_to_dir(manifest, 0, 2, out3.string());
    CHECK(r1 == strip_elapsed((out3 / "results.csv").string()));
  }

  SECTION("results parse back with the stable schema") {
    const auto table = read_csv((out1 / "results.csv").string());
    CHECK(table.schema == "learn-v1");
    REQUIRE(table.columns.size() == 10);
    CHECK(table.columns[3] == "theta");
    CHECK(table.rows.size() == 2 * 40);  // seeds x iterations
    // Error column tracks |theta - theta_ml| and ends lower than it starts
    // for each seed at this scale.
    const auto err_col = 6;
    CHECK(table.rows[0][err_col] > table.rows[39][err_col]);
  }
}

TEST_CASE("learn drives the gibbs and pgas chains") {
  const auto dir = fresh_dir("learn_chains");
  auto cfg = lgss_config(dir);
  cfg.set("data.T", "40");
  cli::simulate(cfg, 0, dir.string());
  cfg.set("driver.n_iters", "30");
  for (const char* name : {"pgas", "gibbs", "pimh-saem", "mcem"}) {
    cfg.set("driver.name", name);
    const auto out = cli::learn(cfg, 0, 1);
    CHECK(out.table.rows.size() == 2 * 30);
  }
}

TEST_CASE("learn supports the unknown-variance lgss variant") {
  const auto dir = fresh_dir("learn_full");
  auto cfg = lgss_config(dir);
  cfg.set("data.T", "80");
  cli::simulate(cfg, 0, dir.string());
  cfg.set("model.name", "lgss-full");
  cfg.set("driver.n_iters", "60");
  cfg.set("driver.seeds", "1");
  const auto out = cli::learn(cfg, 0, 1);
  REQUIRE(out.table.columns.size() == 12);  // 3 parameter columns
  CHECK(out.table.columns[4] == "sigma_w2");
  const auto& last = out.table.rows.back();
  CHECK(last[4] > 0.0);
  CHECK(last[5] > 0.0);
}

TEST_CASE("learn runs the bayesian beta-bernoulli demo") {
  const auto dir = fresh_dir("learn_bb");
  auto cfg = Config::from_string(R"(
[model]
name = beta-bernoulli
chains = 6
obs_flip_prob = 0.1
a_true = 2.0
b_true = 5.0

[data]
T = 60
seed = 5
dir = {DIR}

[driver]
name = psaem
N = 8
n_iters = 25
seeds = 1
base_seed = 7

[schedule]
alpha = 0.7
)");
  // patch dir placeholder
  Config patched;
  {
    std::string text = cfg.to_string();
    const auto pos = text.find("{DIR}");
    text.replace(pos, 5, dir.string());
    patched = Config::from_string(text);
  }
  cli::simulate(patched, 0, dir.string());
  const auto out = cli::learn(patched, 0, 1);
  CHECK(out.table.rows.size() == 25);
  CHECK(out.table.columns[3] == "a");
  CHECK(out.table.columns[4] == "b");
}

TEST_CASE("water tank ingests two-column csv with an optional header") {
  const auto dir = fresh_dir("tank_ingest");
  {
    std::ofstream out(dir / "real.csv");
    out << "u,y\n";
    Rng rng = make_rng(77);
    for (int t = 0; t < 48; ++t) out << 3.0 + uniform01(rng) << "," << 4.0 + uniform01(rng) << "\n";
  }
  auto cfg = Config::from_string(R"(
[model]
name = watertank

[data]
dir = unused

[init]
k = 0.05,0.05,0.05,0.05,0.0,0.0
sigma_w2 = 0.1
sigma_e2 = 0.1
xi0 = 6.0

[driver]
name = psaem
N = 10
n_iters = 5
seeds = 1
base_seed = 3

[schedule]
alpha = 0.7
warmup = 2
)");
  cfg.set("data.file", (dir / "real.csv").string());
  const auto out = cli::learn(cfg, 0, 1);
  CHECK(out.table.rows.size() == 5);
  CHECK(out.table.columns[3] == "k1");
}

TEST_CASE("compare aggregates methods over one dataset") {
  const auto dir = fresh_dir("compare");
  auto cfg = lgss_config(dir);
  cfg.set("data.T", "60");
  cli::simulate(cfg, 0, dir.string());

  cfg.set("compare.methods", "fast,slow");
  cfg.set("method.fast.name", "psaem");
  cfg.set("method.fast.n_iters", "20");
  cfg.set("method.slow.name", "psaem");
  cfg.set("method.slow.n_iters", "20");
  cfg.set("method.slow.N", "4");
  const auto table = cli::compare(cfg, 0, 2);
  CHECK(table.schema == "compare-v1");
  CHECK(table.rows.size() == 40);  // two methods x 20 iterations

  SECTION("single method degenerates to its own quantiles") {
    cfg.set("compare.methods", "fast");
    const auto single = cli::compare(cfg, 0, 1);
    CHECK(single.rows.size() == 20);
    for (const auto& row : single.rows) CHECK(row[0] == 0.0);
  }
}

TEST_CASE("couple-test config surface") {
  auto cfg = Config::from_string(R"(
[model]
name = lgss
sigma_w2 = 1.0
sigma_e2 = 0.3

[couple]
theta = 0.5
T = 6
N = 4
reps = 400
seed = 11
)");
  SECTION("single theta pairs with itself") {
    const auto table = cli::couple_test(cfg, 0, 1);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0][5] == 1.0);  // identical_fraction
  }
  SECTION("gap sweep emits one row per gap with nonincreasing fractions") {
    cfg.set("couple.gaps", "0.001,0.01,0.05,0.1,0.2");
    cfg.set("couple.reps", "2000");
    const auto table = cli::couple_test(cfg, 0, 1);
    REQUIRE(table.rows.size() == 5);
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
      const double prev = table.rows[i - 1][5], cur = table.rows[i][5];
      const double se = std::sqrt(std::max(prev * (1 - prev), cur * (1 - cur)) / 2000.0);
      CHECK(cur <= prev + 2 * se + 1e-9);
    }
  }
  SECTION("empty theta list is a validation error") {
    cfg.set("couple.theta", "");
    CHECK_THROWS_AS(cli::couple_test(cfg, 0, 1), std::runtime_error);
  }
}

TEST_CASE("cli binary exit codes and error lines") {
  const fs::path bin = fs::path(PSAEM_CLI_PATH);
  REQUIRE(fs::exists(bin));
  const auto dir = fresh_dir("cli_binary");
  {
    std::ofstream out(dir / "cfg.ini");
    std::string text = kLgssConfig;
    const auto pos = text.find("{DIR}");
    text.replace(pos, 5, (dir / "data").string());
    out << text;
  }
  const std::string base = bin.string();
  CHECK(std::system((base + " simulate --config " + (dir / "cfg.ini").string() + " --out " +
                     (dir / "data").string() + " > /dev/null 2>&1")
                        .c_str()) == 0);
  // Invalid config: nonzero exit and an error line on stderr.
  {
    std::ofstream out(dir / "bad.ini");
    out << "[model]\nname = nosuchmodel\n[data]\nT = 5\n";
  }
  const std::string err_file = (dir / "stderr.txt").string();
  const int rc = std::system((base + " simulate --config " + (dir / "bad.ini").string() +
                              " --out " + (dir / "out").string() + " 2> " + err_file)
                                 .c_str());
  CHECK(rc != 0);
  const auto err = read_file(err_file);
  CHECK(err.rfind("error:", 0) == 0);
}
