#pragma once

#include "qldp/medium.hpp"
#include "qldp/torus_grid.hpp"

#include <cstdint>
#include <vector>

namespace qldp {

/// A matrix-valued field on the torus grid: at each node an m x n matrix
/// (m slow components, n fast directions), stored row p, column l * n + j.
class GradientField {
 public:
  GradientField() = default;
  GradientField(TorusGrid grid, int slow_dim, Mat data);

  const TorusGrid& grid() const { return grid_; }
  int slow_dim() const { return slow_dim_; }
  int fast_dim() const { return grid_.dim(); }
  const Mat& data() const { return data_; }

  /// Value at node p.
  Mat node(std::size_t p) const;
  /// Periodic (bi)linear interpolation; out must be slow_dim x fast_dim.
  void at(const double* y, Mat& out) const;
  Mat at(const Vec& y) const;

  static GradientField zeros(const TorusGrid& grid, int slow_dim);

 private:
  TorusGrid grid_;
  int slow_dim_ = 0;
  Mat data_;
};

struct CellSolution {
  double rho = 0.0;
  TorusGrid grid;
  Mat chi;             ///< size x m, column l = chi_l
  GradientField dchi;  ///< D chi_rho
  double residual = 0.0;
};

struct CellSolveOptions {
  /// Sup-norm defect allowed relative to the scale |rho chi| + |L_h chi| + |b|.
  double relative_tolerance = 1e-10;
  int max_iterations = 20000;
};

/// Solves (rho - L_h) chi_l = b_l on the periodic grid for every slow component.
/// b should already be centered (see CoefficientSet::set_drift_offset).
CellSolution solve_cell_problem_grid(const CoefficientSet& coeffs, double rho, int n_grid,
                                     const CellSolveOptions& options = {});

struct ResolventEstimate {
  Mat value;     ///< points x m
  Mat std_err;   ///< points x m
  double truncation_bias_bound = 0.0;
  bool truncation_flag = false;
};

/// chi_rho(y) = E int_0^T e^{-rho t} b(Y_t) dt along the rescaled fast process.
ResolventEstimate solve_cell_problem_mc(const CoefficientSet& coeffs, double rho, const Mat& y_points,
                                        std::size_t n_paths, double T_trunc, std::uint64_t seed,
                                        double dt_fast = 1e-3);

struct Extrapolation {
  GradientField xi;
  Vec residual;  ///< per node, max deviation of the sequence from the linear model
  double max_residual = 0.0;
  bool converged = true;
};

/// Richardson extrapolation rho -> 0 under D chi_rho ~ xi + c rho, using the
/// two smallest rho; the remaining entries measure the model residual.
Extrapolation extrapolate_xi(const std::vector<CellSolution>& solutions, double model_tolerance = 1e-4);

struct CorrectorField {
  TorusGrid grid;
  std::vector<double> rho_schedule;
  std::vector<CellSolution> solutions;
  std::vector<double> residual_norms;
  Extrapolation extrapolation;
  Vec drift_offset;

  const GradientField& xi() const { return extrapolation.xi; }
  /// D chi at the smallest scheduled rho.
  const GradientField& smallest_rho_gradient() const;
};

std::vector<double> default_rho_schedule();

/// Grid solves over the schedule followed by extrapolation. `coeffs` must be
/// centered; the applied offset is copied into the result.
CorrectorField build_corrector(const CoefficientSet& coeffs, const std::vector<double>& rho_schedule, int n_grid,
                               const CellSolveOptions& options = {}, double model_tolerance = 1e-4);

}  // namespace qldp
