#include "drvc/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using drvc::experiment::json;

/// Applies `key=value` overrides; the value is parsed as JSON and falls back
/// to a plain string. Dotted keys address nested objects (solver.rho=2).
void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw drvc::Error(drvc::ErrorKind::InvalidConfig, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* slot = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*slot)[part] = value;
      break;
    }
    slot = &(*slot)[part];
    start = dot + 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributionally robust variable clustering: simulation, fitting, clustering and backtests"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool show_defaults = false;
    bool trace = false;
  };
  std::map<std::string, Args> args;
  std::map<std::string, CLI::Option*> seed_opts;
  const std::map<std::string, std::string> help = {
      {"simulate", "Draw a block-model panel (or a synthetic price panel with kind=returns)"},
      {"fit-dro", "Fit the DRO nodewise regression by ADMM"},
      {"select-delta", "Choose the robustness radius by Monte Carlo"},
      {"cluster", "Cluster a panel or a saved similarity matrix"},
      {"evaluate", "Adjusted mutual information between two partition files"},
      {"sim-study", "AMI of all methods over a noise or hidden-factor grid"},
      {"backtest", "Hierarchical clustering minimum-variance backtest"}};
  for (const auto& name : drvc::experiment::commands()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    auto& a = args[name];
    sub->add_option("--config", a.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--set", a.overrides, "Override a config key, e.g. --set K=4 --set solver.rho=2");
    seed_opts[name] = sub->add_option("--seed", a.seed, "Master seed (required for stochastic commands)");
    sub->add_flag("--print-config", a.show_defaults, "Print the resolved config and exit");
    if (name == "fit-dro") sub->add_flag("--trace", a.trace, "Write per-iteration residuals to trace.csv");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const Args& a = args.at(command);
  try {
    drvc::experiment::Invocation inv;
    if (!a.config.empty()) inv.config = drvc::io::read_json(a.config);
    for (const auto& o : a.overrides) apply_override(inv.config, o);
    if (a.trace) inv.config["trace"] = true;
    if (seed_opts.at(command)->count() > 0) inv.seed = a.seed;
    if (a.show_defaults) {
      std::cout << drvc::experiment::resolve_config(command, inv.config).dump(2) << '\n';
      return 0;
    }
    std::cout << drvc::experiment::run(command, inv).dump(2) << '\n';
    return 0;
  } catch (const drvc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return drvc::is_numerical(e.kind()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
