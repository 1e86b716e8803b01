#pragma once

#include "qldp/action.hpp"
#include "qldp/diagnostics.hpp"
#include "qldp/medium.hpp"
#include "qldp/rareevent.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace qldp {

enum class ExperimentType { Homogenize, Rate, Estimate, Ergodic, Occupation, FullPipeline };

std::string to_string(ExperimentType type);
ExperimentType experiment_from_string(const std::string& name);

enum class CorrectorMethod { Grid, MonteCarlo };

struct CorrectorSettings {
  CorrectorMethod method = CorrectorMethod::Grid;
  int n_grid = 0;  ///< 0: 4096 in 1-d, 256 per axis in 2-d
  std::vector<double> rho_schedule;
  bool extrapolate = true;
  std::optional<double> fixed_rho;
  double model_tolerance = 1e-4;
  double tolerance = 1e-10;
  double mc_rho = 1.0;
  std::size_t mc_paths = 400;
  std::size_t mc_points = 8;
  double mc_dt = 1e-3;
};

struct XGrid {
  Vec lower;
  Vec upper;
  int points = 21;
};

struct ErgodicSettings {
  ErgodicMode mode = ErgodicMode::Uncontrolled;
  double beta = 0.5;
  int shifts = 8;
  int media = 5;
  std::vector<FourierTerm> observable;  ///< scalar function of y
  bool drift_check = true;
};

struct OccupationSettings {
  std::size_t runs = 4;
  OccupationBins bins;
};

struct ExperimentConfig {
  ExperimentType experiment = ExperimentType::Homogenize;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  std::size_t replicas = 1000;

  MediumParams medium;
  std::uint64_t medium_seed = 0;
  double lambda_min = 0.0;

  std::vector<double> eps;
  double delta_exponent = 1.5;
  double step_factor = 0.1;
  double T = 1.0;
  Vec x0;
  Vec y0;

  CorrectorSettings corrector;
  XGrid x_grid;
  EventSpec event;
  int n_seg = 32;
  SamplingMode mode = SamplingMode::ImportanceSampling;
  double control_cost_cap = std::numeric_limits<double>::infinity();
  ErgodicSettings ergodic;
  OccupationSettings occupation;

  nlohmann::json source;  ///< the validated document, overrides applied
};

/// Strict schema check and conversion; unknown or missing keys raise
/// ConfigError naming the offending path.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Reads a config file or a run manifest (whose "config" member is used).
nlohmann::json load_config_document(const std::string& path);

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool empty() const { return errors.empty() && warnings.empty(); }
  nlohmann::json to_json() const;
};

/// Schema errors plus physics warnings. Never throws.
ValidationReport validate_config(const nlohmann::json& doc);
ValidationReport validate_config_file(const std::string& path);

/// Scalar function of y built from Fourier terms (no x dependence, no medium offsets).
Observable make_observable(const std::vector<FourierTerm>& terms);

}  // namespace qldp
