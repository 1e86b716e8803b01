#include "qldp/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

std::vector<double> parse_eps_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--eps", "'" + item + "' is not a number");
    }
    if (used != item.size()) throw CLI::ValidationError("--eps", "'" + item + "' is not a number");
    out.push_back(v);
  }
  return out;
}

void add_run_flags(CLI::App* cmd, std::string& config, std::string& eps, qldp::Overrides& o) {
  cmd->add_option("--config", config, "experiment config (JSON) or run manifest")->required();
  cmd->add_option("--eps", eps, "comma-separated epsilon list");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--replicas", o.replicas, "Monte Carlo replicas");
  cmd->add_option("--out", o.output_dir, "output directory");
  cmd->add_option("--corrector-method", o.corrector_method, "grid or mc")
      ->check(CLI::IsMember({"grid", "mc"}));
  cmd->add_option("--mode", o.mode, "plain or is")->check(CLI::IsMember({"plain", "is"}));
  cmd->add_option("--rho", o.rho, "use D chi at this rho instead of the extrapolated corrector");
  cmd->add_flag("--no-extrapolation", o.no_extrapolation, "use D chi at the smallest scheduled rho");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quench-ldp: multiscale diffusions in random environments"};
  app.require_subcommand(1);

  std::string config;
  std::string eps;
  qldp::Overrides overrides;

  auto* run = app.add_subcommand("run", "run the experiment named in the config");
  add_run_flags(run, config, eps, overrides);
  run->add_option("--experiment", overrides.experiment, "override the experiment type")
      ->check(CLI::IsMember({"homogenize", "rate", "estimate", "ergodic", "occupation", "full-pipeline"}));

  std::vector<CLI::App*> shortcuts;
  for (const char* name : {"homogenize", "rate", "estimate", "ergodic", "occupation", "full-pipeline"}) {
    auto* cmd = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    add_run_flags(cmd, config, eps, overrides);
    shortcuts.push_back(cmd);
  }

  auto* validate = app.add_subcommand("validate", "check a config and report problems");
  validate->add_option("--config", config, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
    if (!eps.empty()) overrides.eps = parse_eps_list(eps);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qldp::kExitConfig;
  }

  if (*validate) {
    const auto report = qldp::validate_config_file(config);
    std::cout << report.to_json().dump(2) << '\n';
    return report.errors.empty() ? 0 : qldp::kExitConfig;
  }
  for (auto* cmd : shortcuts)
    if (*cmd) overrides.experiment = cmd->get_name();
  return qldp::run_experiment(config, overrides, std::cerr);
}
