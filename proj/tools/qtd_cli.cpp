#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "qtd/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Quantile temporal-difference learning experiments"};
  qtd::cli::Invocation inv;
  std::string config;
  std::string out = ".";
  std::uint64_t seed = 0;
  std::string grid;

  app.add_option("command", inv.command, "qdp | qtd | field | bound | backup | trajectory")
      ->required()
      ->check(CLI::IsMember({"qdp", "qtd", "field", "bound", "backup", "trajectory"}));
  app.add_option("--config", config, "experiment config (JSON)")->required();
  app.add_option("--out", out, "output directory");
  auto* seed_opt = app.add_option("--seed-override", seed, "run a single seed instead of the configured list");
  auto* grid_opt = app.add_option("--grid", grid, "field grid x0:x1:n,y0:y1:n");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return qtd::cli::kConfigError;
  }
  inv.config = config;
  inv.out = out;
  if (*seed_opt) inv.seed_override = seed;
  if (*grid_opt) inv.grid = grid;
  return qtd::cli::run(inv);
}
