#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "fastfem/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"fastfem: implicit FEM scenario runner"};
  app.require_subcommand(1);
  app.fallthrough();
  int workers = 0;
  bool quiet = false;
  app.add_option("--workers", workers, "Worker threads (overrides config and FASTFEM_WORKERS)")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "Only print errors");

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run a scenario and write metrics and snapshots");
  run->fallthrough();
  run->add_option("config", run_config, "Scenario JSON")->required();

  std::string bench_config;
  std::vector<std::string> variants{"fast", "full", "cg", "pcg"};
  auto* bench = app.add_subcommand("bench", "Compare solver and assembly variants");
  bench->fallthrough();
  bench->add_option("config", bench_config, "Scenario JSON")->required();
  bench->add_option("--variants", variants, "fast,full,cg,pcg,tri-seq,tri-par")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::optional<int> w = workers > 0 ? std::optional<int>(workers) : std::nullopt;
  if (*run) return fastfem::run_command(run_config, w, quiet, std::cout, std::cerr);
  return fastfem::bench_command(bench_config, variants, w, quiet, std::cout, std::cerr);
}
