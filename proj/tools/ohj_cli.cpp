// Command-line driver: ohj <subcommand> [--config FILE | --from-report FILE]
// [--out DIR] [--jobs N] [--seed S] [--problem KEY]. Prints a JSON summary on
// stdout.

#include <iostream>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "ohj/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Obstacle problems for viscous Hamilton-Jacobi equations: experiment driver"};
  app.require_subcommand(1, 1);
  ohj::cli::Options opt;
  int jobs = 0;
  std::uint64_t seed = 0;
  std::string problem;
  app.add_option("--config", opt.config_path, "Key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--from-report", opt.report_path, "Re-run from the config echo of a report.json")
      ->check(CLI::ExistingFile);
  app.add_option("--out", opt.out_dir, std::string("Output root (default: $") + ohj::cli::kOutDirEnv + ", then " +
                                           ohj::cli::kDefaultOutDir + ")");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads for sweep cells")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Base seed for Monte Carlo and property sampling");
  auto* problem_opt = app.add_option("--problem", problem, "Catalog problem key");
  app.fallthrough();
  const std::pair<const char*, const char*> help[] = {
      {"solve", "Evolve one problem and export snapshots"},
      {"ergodic", "Ergodic constants by three estimators"},
      {"dichotomy", "Classify the large-time behaviour"},
      {"rate-study", "Stability gap over an epsilon sweep"},
      {"adjoint-audit", "Adjoint mass, energy and key-estimate audit"},
      {"key-stability", "eps ||w_t(.,1)|| over an epsilon sweep"},
      {"mc-verify", "Monte Carlo check of the control representation"},
      {"suite", "Full acceptance suite"},
  };
  for (const auto& s : ohj::cli::subcommands()) {
    std::string desc;
    for (const auto& [name, text] : help) {
      if (s == name) desc = text;
    }
    app.add_subcommand(s, desc);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cout << ohj::cli::error_json("usage", e.what(), ohj::cli::kExitConfig).dump(2) << "\n";
    return ohj::cli::kExitConfig;
  }
  if (*jobs_opt) opt.jobs = jobs;
  if (*seed_opt) opt.seed = seed;
  if (*problem_opt) opt.problem = problem;
  return ohj::cli::run(app.get_subcommands().front()->get_name(), opt, std::cout);
}
