#pragma once

#include "qldp/types.hpp"

#include <Eigen/Sparse>

#include <array>
#include <cstddef>

namespace qldp {

class CoefficientSet;

/// Uniform periodic grid on the unit torus of dimension 1 or 2.
/// Node (i, j) sits at (i / n, j / n); flat index i + n * j.
class TorusGrid {
 public:
  TorusGrid() = default;
  TorusGrid(int dim, int n);

  int dim() const { return dim_; }
  int n() const { return n_; }
  double h() const { return 1.0 / n_; }
  std::size_t size() const;

  void point(std::size_t index, double* y) const;
  std::size_t wrap(long i, long j = 0) const;

  /// Periodic (bi)linear interpolation weights at an arbitrary y.
  struct Stencil {
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
    int count = 0;
  };
  Stencil stencil(const double* y) const;

 private:
  int dim_ = 1;
  int n_ = 0;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Central-difference discretization of the fast generator
///   L = f . grad + 1/2 (tau1 tau1^T + tau2 tau2^T) : Hessian
/// with periodic boundary conditions.
SparseMatrix assemble_generator(const CoefficientSet& coeffs, const TorusGrid& grid);

/// Central-difference gradient; column j holds the derivative along y_j.
Mat central_gradient(const TorusGrid& grid, const Eigen::Ref<const Vec>& values);

}  // namespace qldp
