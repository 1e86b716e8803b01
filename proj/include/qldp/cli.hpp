#pragma once

#include "qldp/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qldp {

struct Overrides {
  std::optional<std::string> experiment;
  std::optional<std::vector<double>> eps;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicas;
  std::optional<std::string> output_dir;
  std::optional<std::string> corrector_method;
  std::optional<std::string> mode;
  std::optional<double> rho;
  bool no_extrapolation = false;
};

/// Writes overrides into the raw document so the manifest records the run
/// that actually happened.
nlohmann::json apply_overrides(nlohmann::json doc, const Overrides& overrides);

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumerical = 3 };

/// Runs the configured experiment, writing the manifest first and then every
/// artifact into the output directory. On a numerical failure the artifacts
/// written so far are kept and a FAILED marker is added.
int run_experiment(const std::string& config_path, const Overrides& overrides, std::ostream& log);

/// Same, from an in-memory document.
int run_document(const nlohmann::json& doc, std::ostream& log);

}  // namespace qldp
