#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nonrev/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Variance-ordering experiments for non-reversible Markov chains"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config, "path to the config file")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out, "output directory (default: config 'output' or results/<experiment>)");
  app.add_subcommand("list", "print the experiment catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : nonrev::exp::exit_config;
  }
  if (app.got_subcommand("list")) {
    std::cout << nonrev::exp::list_experiments();
    return 0;
  }
  return nonrev::exp::run_command(config, seed, out, std::cout, std::cerr);
}
