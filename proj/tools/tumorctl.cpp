// Command-line driver: tumorctl <subcommand> --config <file> --out <dir> [--seed <n>]

#include "tumorctl/cli/run.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Optimal control toolkit for the relaxed Cahn-Hilliard tumor growth model"};
  app.require_subcommand(1, 1);
  std::string config, out = "out";
  std::optional<std::uint64_t> seed;
  for (const auto& name : tumorctl::cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "override the configured seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tumorctl::cli::kInvalid;
  }
  return tumorctl::cli::run(app.get_subcommands().front()->get_name(), config, out, seed);
}
