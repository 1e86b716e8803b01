#pragma once

#include "qldp/dynamics.hpp"
#include "qldp/medium.hpp"

#include <functional>
#include <map>
#include <span>
#include <vector>

namespace qldp {

using Observable = std::function<double(const double*)>;

enum class ErgodicMode { Uncontrolled, Perturbed, Controlled };

/// Averaging window h(eps) = (delta^2 / eps)^(1 - beta).
double ergodic_window(const ScaleParams& scale, double beta = 0.5);

struct ErgodicMedium {
  const CoefficientSet* coeffs = nullptr;
  const InvariantDensity* density = nullptr;
};

struct ErgodicOptions {
  ErgodicMode mode = ErgodicMode::Uncontrolled;
  double beta = 0.5;
  std::vector<double> t_shifts;
  Vec x0;
  Vec y0;
  std::uint64_t seed = 0;
  const ControlPolicy* policy = nullptr;
};

struct ErgodicReport {
  double window = 0.0;
  std::size_t window_steps = 0;
  std::vector<double> targets;  ///< pi-average of the observable per medium
  Mat averages;                 ///< media x shifts
  Mat deviations;               ///< averages - target
  double max_abs_deviation = 0.0;
  double mean_abs_deviation = 0.0;
  double mean_abs_deviation_se = 0.0;
  double first_shift_max_deviation = 0.0;  ///< max over media at the first shift
};

/// Window averages (1/h) int_t^{t+h} psi(Y_s) ds for every shift and medium.
/// Uncontrolled drops the (1/delta) g drift; Perturbed keeps it; Controlled
/// additionally applies options.policy.
ErgodicReport ergodic_average(std::span<const ErgodicMedium> media, const ScaleParams& scale,
                              const Observable& observable, const ErgodicOptions& options);

/// Delta(eps) = 10 (delta^2/eps) (eps/delta)^(1/4).
double occupation_window(const ScaleParams& scale);

struct OccupationBins {
  int u_bins = 21;
  double u_max = 10.0;
  int y_bins = 20;
  int t_bins = 10;
};

/// Occupation measure of (u1, u2, Y mod 1, t) over sliding windows of width
/// Delta. Keys: u1 bins (k1), u2 bins (k2), y bins (fast_dim), t bin.
struct OccupationHistogram {
  double window = 0.0;
  double T = 0.0;
  OccupationBins bins;
  int k1 = 0;
  int k2 = 0;
  int fast_dim = 1;
  std::vector<double> t_edges;
  std::map<std::vector<int>, double> mass;
  std::size_t overflow_steps = 0;

  double total_mass() const;
  /// Mass per time bin; equals the bin length.
  std::vector<double> time_marginal() const;
  /// Normalized y-marginal, y_bins^fast_dim cells.
  std::vector<double> y_marginal() const;
  /// Normalized marginal of one control component (component < k1 is u1, else u2).
  std::vector<double> u_marginal(int component) const;
  int zero_u_bin() const { return bins.u_bins / 2; }
  void merge(const OccupationHistogram& other);
};

/// Controlled run over [0, T + Delta] with the control switched off after T,
/// recording every step and every control value.
PathSample simulate_occupation_run(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                   const Vec& y0, double T, double window, const ControlPolicy& policy,
                                   std::uint64_t seed, std::uint64_t replica = 0);

OccupationHistogram build_occupation(const PathSample& run, const ScaleParams& scale, double T, double window,
                                     const OccupationBins& bins);

double total_variation(std::span<const double> p, std::span<const double> q);

/// Replicas of the controlled (or, with a Zero policy, uncontrolled) system.
std::vector<PathSample> simulate_ensemble(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                          const Vec& y0, double T, const ControlPolicy& policy,
                                          std::size_t replicas, std::uint64_t seed, std::size_t record_stride);

struct DriftCheck {
  double sup_gap = 0.0;
  double se_at_sup = 0.0;
  double max_se = 0.0;
  double t_at_sup = 0.0;
  std::vector<double> times;
  Mat mean_path;
};

/// Sup over recorded times of |mean_replicas X_t - reference(t)|_inf.
DriftCheck viability_drift_check(std::span<const PathSample> runs, const std::function<Vec(double)>& reference);

}  // namespace qldp
