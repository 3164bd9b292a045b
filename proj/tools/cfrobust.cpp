// Command-line front end: run a sweep, rebuild tables, or check a config.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cfrobust/harness.hpp"

namespace {

constexpr int kExitExcluded = 3;

void print_descriptive(const std::filesystem::path& dir) {
  for (const auto& row : cfrobust::csv::read_file((dir / "descriptive.csv").string())) {
    for (std::size_t k = 0; k < row.size(); ++k) std::cout << (k ? "\t" : "") << row[k];
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robustness benchmark for counterfactual explanations under noise"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  auto* run = app.add_subcommand("run", "Run the sweep described by a config file");
  run->add_option("config", config_path, "Config file (TOML)")->required()->check(CLI::ExistingFile);
  run->add_option("--run-dir", run_dir, "Output directory (default: <output_dir>/<name>-<timestamp>)");

  std::string tables_dir;
  auto* tables = app.add_subcommand("tables", "Rebuild summary and comparison tables of a finished run");
  tables->add_option("run-dir", tables_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Parse and validate a config file");
  validate->add_option("config", validate_path, "Config file (TOML)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*validate) {
      const auto cfg = cfrobust::load_config(validate_path);
      std::cout << "ok " << cfrobust::config_hash(cfg) << '\n';
      return 0;
    }
    if (*tables) {
      cfrobust::regenerate_tables(tables_dir);
      print_descriptive(tables_dir);
      return 0;
    }
    const auto cfg = cfrobust::load_config(config_path);
    const std::filesystem::path dir = run_dir.empty() ? cfrobust::timestamped_run_dir(cfg) : std::filesystem::path(run_dir);
    const auto manifest = cfrobust::run_experiment(cfg, dir);
    std::cout << "run directory: " << dir.string() << '\n';
    for (const auto& w : manifest["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    if (!manifest["exclusions"].empty()) {
      for (const auto& e : manifest["exclusions"])
        std::cerr << "excluded: " << e["model"].get<std::string>() << ":" << e["method"].get<std::string>()
                  << " (completeness " << e["completeness"].get<double>() << ")\n";
      return kExitExcluded;
    }
    return 0;
  } catch (const cfrobust::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
