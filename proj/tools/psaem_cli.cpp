#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "psaem/experiment.hpp"
#include "psaem/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed_offset = 0;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Path to the experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "Output directory");
  cmd->add_option("--seed-offset", args.seed_offset, "Offset added to every configured seed");
  cmd->add_option("--threads", args.threads, "Worker threads for seed-level parallelism")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle stochastic approximation EM experiment runner"};
  app.set_version_flag("--version", psaem::kVersion);
  app.require_subcommand(1);

  CommonArgs sim_args, learn_args, compare_args, couple_args;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim, sim_args);
  auto* learn = app.add_subcommand("learn", "Run a learning driver over the configured seeds");
  add_common(learn, learn_args);
  auto* compare = app.add_subcommand("compare", "Aggregate several methods over one dataset");
  add_common(compare, compare_args);
  auto* couple = app.add_subcommand("couple-test", "Coupled CPF-AS diagnostic sweep");
  add_common(couple, couple_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const auto cfg = psaem::Config::from_file(sim_args.config_path);
      psaem::cli::simulate(cfg, sim_args.seed_offset, sim_args.out_dir);
    } else if (learn->parsed()) {
      const auto cfg = psaem::Config::from_file(learn_args.config_path);
      psaem::cli::learn_to_dir(cfg, learn_args.seed_offset, learn_args.threads,
                               learn_args.out_dir);
    } else if (compare->parsed()) {
      const auto cfg = psaem::Config::from_file(compare_args.config_path);
      psaem::cli::compare_to_dir(cfg, compare_args.seed_offset, compare_args.threads,
                                 compare_args.out_dir);
    } else if (couple->parsed()) {
      const auto cfg = psaem::Config::from_file(couple_args.config_path);
      psaem::cli::couple_test_to_dir(cfg, couple_args.seed_offset, couple_args.threads,
                                     couple_args.out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
