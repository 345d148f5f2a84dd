#include <CLI11.hpp>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>

#include "sep/experiments.hpp"

namespace {

enum Exit { ok = 0, config_error = 1, runtime_error = 2, assertion_failure = 3 };

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  bool edge_lists = false;
  bool quiet = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetric exclusion on covering towers: simulation and exact checks"};
  app.require_subcommand(1);
  Options opt;

  using Runner = std::function<std::vector<sep::Report>(const sep::ExperimentConfig&)>;
  const std::vector<std::tuple<std::string, std::string, Runner>> commands{
      {"build-tower", "build the quotient tower and check the covering maps",
       [&](const sep::ExperimentConfig& c) { return sep::run_build_tower(c, opt.edge_lists); }},
      {"superexp", "exceedance probabilities of the time-integrated one-block error", sep::run_superexp},
      {"one-block", "variance and one-block decay of local averages", sep::run_one_block},
      {"two-blocks", "differences of local averages at separated windows", sep::run_two_blocks},
      {"folner-report", "Følner ratios and the window-average deviation", sep::run_folner_report},
      {"spectral-check", "perturbed top eigenvalue, Feynman-Kac bound and variational gap", sep::run_spectral_check},
      {"path-lemma", "path lemma on random functions over every group element", sep::run_path_lemma},
  };

  std::map<CLI::App*, Runner> runners;
  for (const auto& [name, help, run] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opt.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opt.overrides, "override a key, e.g. experiment.replicas=200");
    sub->add_option("-o,--output", opt.output, "output directory (overrides output.directory)");
    sub->add_flag("-q,--quiet", opt.quiet, "do not print the summary");
    if (name == "build-tower") sub->add_flag("--edge-lists", opt.edge_lists, "store edge lists in the JSON summary");
    runners[sub] = run;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  try {
    if (!opt.output.empty()) opt.overrides.push_back("output.directory=" + opt.output);
    const auto config = sep::load_config(opt.config, opt.overrides);
    CLI::App* chosen = app.get_subcommands().front();
    const auto reports = runners.at(chosen)(config);
    const auto files = sep::emit_outputs(reports, sep::output_directory(config), config.svg);
    if (!opt.quiet) {
      for (const auto& r : reports) std::cout << r.name << ": " << r.summary.dump() << '\n';
      for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
    }
    return ok;
  } catch (const sep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const sep::AssertionFailure& e) {
    std::cerr << "assertion failed: " << e.what() << '\n';
    return assertion_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return runtime_error;
  }
}
