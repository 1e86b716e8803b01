#include "qldp/corrector.hpp"

#include "qldp/dynamics.hpp"
#include "qldp/parallel.hpp"
#include "qldp/rng.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>

namespace qldp {

GradientField::GradientField(TorusGrid grid, int slow_dim, Mat data)
    : grid_(grid), slow_dim_(slow_dim), data_(std::move(data)) {
  require(data_.rows() == static_cast<Eigen::Index>(grid_.size()) && data_.cols() == slow_dim_ * grid_.dim(),
          "gradient field data has the wrong shape");
}

GradientField GradientField::zeros(const TorusGrid& grid, int slow_dim) {
  return GradientField(grid, slow_dim, Mat::Zero(static_cast<Eigen::Index>(grid.size()), slow_dim * grid.dim()));
}

Mat GradientField::node(std::size_t p) const {
  Mat out(slow_dim_, fast_dim());
  for (int l = 0; l < slow_dim_; ++l)
    for (int j = 0; j < fast_dim(); ++j) out(l, j) = data_(static_cast<Eigen::Index>(p), l * fast_dim() + j);
  return out;
}

void GradientField::at(const double* y, Mat& out) const {
  const auto s = grid_.stencil(y);
  out.setZero();
  const int n = fast_dim();
  for (int k = 0; k < s.count; ++k) {
    const auto p = static_cast<Eigen::Index>(s.index[static_cast<std::size_t>(k)]);
    const double w = s.weight[static_cast<std::size_t>(k)];
    for (int l = 0; l < slow_dim_; ++l)
      for (int j = 0; j < n; ++j) out(l, j) += w * data_(p, l * n + j);
  }
}

Mat GradientField::at(const Vec& y) const {
  Mat out(slow_dim_, fast_dim());
  at(y.data(), out);
  return out;
}

namespace {

// Sup-norm defect of rho chi - L chi - b, accumulated in long double.
double defect_norm(const SparseMatrix& op, double rho, const Eigen::Ref<const Vec>& chi,
                   const Eigen::Ref<const Vec>& rhs, double* scale) {
  double worst = 0.0;
  double size = 0.0;
  for (Eigen::Index r = 0; r < op.rows(); ++r) {
    long double lchi = 0.0L;
    long double mag = 0.0L;
    for (SparseMatrix::InnerIterator it(op, r); it; ++it) {
      lchi += static_cast<long double>(it.value()) * chi(it.col());
      mag += std::fabs(static_cast<long double>(it.value()) * chi(it.col()));
    }
    const long double d = static_cast<long double>(rho) * chi(r) - lchi - rhs(r);
    worst = std::max(worst, static_cast<double>(std::fabs(d)));
    size = std::max(size, static_cast<double>(mag + std::fabs(rho * chi(r)) + std::fabs(rhs(r))));
  }
  if (scale != nullptr) *scale = size;
  return worst;
}

}  // namespace

CellSolution solve_cell_problem_grid(const CoefficientSet& coeffs, double rho, int n_grid,
                                     const CellSolveOptions& options) {
  require(rho > 0.0, "cell problem requires rho > 0");
  TorusGrid grid(coeffs.fast_dim(), n_grid);
  const SparseMatrix gen = assemble_generator(coeffs, grid);
  const auto size = static_cast<Eigen::Index>(grid.size());
  const int m = coeffs.slow_dim();

  Mat rhs(size, m);
  {
    auto values = coeffs.make_values();
    double y[2] = {0.0, 0.0};
    for (Eigen::Index p = 0; p < size; ++p) {
      grid.point(static_cast<std::size_t>(p), y);
      coeffs.eval_fast(y, values);
      rhs.row(p) = values.b.transpose();
    }
  }

  SparseMatrix identity(size, size);
  identity.setIdentity();
  const SparseMatrix op_rowmajor = rho * identity - gen;
  Eigen::SparseMatrix<double> op(op_rowmajor);
  op.makeCompressed();

  CellSolution sol;
  sol.rho = rho;
  sol.grid = grid;
  sol.chi = Mat::Zero(size, m);

  auto refine = [&](auto& solver) {
    for (int l = 0; l < m; ++l) {
      if (rhs.col(l).lpNorm<Eigen::Infinity>() == 0.0) continue;
      Vec x = solver.solve(rhs.col(l));
      for (int pass = 0; pass < 2; ++pass) {
        Vec r(size);
        for (Eigen::Index row = 0; row < size; ++row) {
          long double acc = static_cast<long double>(rhs(row, l));
          for (SparseMatrix::InnerIterator it(op_rowmajor, row); it; ++it)
            acc -= static_cast<long double>(it.value()) * x(it.col());
          r(row) = static_cast<double>(acc);
        }
        x += solver.solve(r);
      }
      sol.chi.col(l) = x;
    }
  };

  if (grid.dim() == 1) {
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(op);
    if (lu.info() != Eigen::Success) throw NumericalError("cell problem: singular system");
    refine(lu);
  } else {
    Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>> it;
    it.setTolerance(1e-12);
    it.setMaxIterations(options.max_iterations);
    it.compute(op);
    bool ok = it.info() == Eigen::Success;
    if (ok) {
      for (int l = 0; l < m && ok; ++l) {
        if (rhs.col(l).lpNorm<Eigen::Infinity>() == 0.0) continue;
        sol.chi.col(l) = it.solve(rhs.col(l));
        ok = it.info() == Eigen::Success;
      }
    }
    if (!ok) {
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(op);
      if (lu.info() != Eigen::Success) throw NumericalError("cell problem: singular system");
      refine(lu);
    }
  }

  Mat grad(size, m * grid.dim());
  for (int l = 0; l < m; ++l) {
    double scale = 0.0;
    const double d = defect_norm(gen, rho, sol.chi.col(l), rhs.col(l), &scale);
    sol.residual = std::max(sol.residual, d);
    if (d > options.relative_tolerance * std::max(1.0, scale))
      throw NumericalError("cell problem residual " + std::to_string(d) + " above tolerance");
    grad.middleCols(l * grid.dim(), grid.dim()) = central_gradient(grid, sol.chi.col(l));
  }
  sol.dchi = GradientField(grid, m, std::move(grad));
  return sol;
}

ResolventEstimate solve_cell_problem_mc(const CoefficientSet& coeffs, double rho, const Mat& y_points,
                                        std::size_t n_paths, double T_trunc, std::uint64_t seed, double dt_fast) {
  require(rho > 0.0, "resolvent requires rho > 0");
  require(T_trunc >= 10.0 / rho * (1.0 - 1e-12), "T_trunc must be at least 10 / rho");
  require(n_paths >= 2, "need at least two paths");
  const int m = coeffs.slow_dim();
  const int n = coeffs.fast_dim();
  require(y_points.cols() == n, "y_points must have fast_dim columns");
  const Eigen::Index points = y_points.rows();
  const std::size_t steps = static_cast<std::size_t>(std::ceil(T_trunc / dt_fast - 1e-9));
  const double dt = T_trunc / static_cast<double>(steps);
  const double sqrt_dt = std::sqrt(dt);
  const double decay = std::exp(-rho * dt);

  ResolventEstimate est;
  est.value = Mat::Zero(points, m);
  est.std_err = Mat::Zero(points, m);

  double b_sup = 0.0;
  {
    TorusGrid probe(n, n == 1 ? 1024 : 64);
    auto v = coeffs.make_values();
    double y[2] = {0.0, 0.0};
    for (std::size_t p = 0; p < probe.size(); ++p) {
      probe.point(p, y);
      coeffs.eval_fast(y, v);
      b_sup = std::max(b_sup, v.b.lpNorm<Eigen::Infinity>());
    }
  }
  est.truncation_bias_bound = std::exp(-rho * T_trunc) * b_sup / rho;
  if (b_sup == 0.0) return est;

  for (Eigen::Index pt = 0; pt < points; ++pt) {
    std::vector<Vec> samples(n_paths);
    parallel_for(n_paths, [&](std::size_t i) {
      GaussianSource normal(make_stream(seed, StreamTag::Resolvent,
                                        static_cast<std::uint64_t>(pt) * 0x100000000ULL + i));
      auto values = coeffs.make_values();
      Vec y = y_points.row(pt).transpose();
      Vec dw(coeffs.k1()), db(coeffs.k2());
      Vec acc = Vec::Zero(m);
      double weight = 1.0;
      coeffs.eval_fast(y.data(), values);
      Vec prev = values.b;
      for (std::size_t s = 0; s < steps; ++s) {
        for (Eigen::Index k = 0; k < dw.size(); ++k) dw(k) = sqrt_dt * normal();
        for (Eigen::Index k = 0; k < db.size(); ++k) db(k) = sqrt_dt * normal();
        y += values.f * dt;
        y.noalias() += values.tau1 * dw;
        y.noalias() += values.tau2 * db;
        coeffs.eval_fast(y.data(), values);
        const double next_weight = weight * decay;
        acc += 0.5 * dt * (weight * prev + next_weight * values.b);
        weight = next_weight;
        prev = values.b;
      }
      samples[i] = acc;
    });
    Vec mean = Vec::Zero(m);
    for (const auto& s : samples) mean += s;
    mean /= static_cast<double>(n_paths);
    Vec var = Vec::Zero(m);
    for (const auto& s : samples) var += (s - mean).cwiseAbs2();
    var /= static_cast<double>(n_paths - 1);
    est.value.row(pt) = mean.transpose();
    est.std_err.row(pt) = (var / static_cast<double>(n_paths)).cwiseSqrt().transpose();
  }
  const double min_se = est.std_err.minCoeff();
  est.truncation_flag = est.truncation_bias_bound > 0.5 * min_se;
  return est;
}

Extrapolation extrapolate_xi(const std::vector<CellSolution>& solutions, double model_tolerance) {
  require(solutions.size() >= 3, "extrapolation needs at least three rho values");
  std::vector<const CellSolution*> sorted;
  for (const auto& s : solutions) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->rho < b->rho; });
  require(sorted.back()->rho / sorted.front()->rho >= 100.0 * (1.0 - 1e-9),
          "rho schedule must span at least two decades");
  for (std::size_t i = 1; i < sorted.size(); ++i)
    require(sorted[i]->rho > sorted[i - 1]->rho, "rho schedule entries must be distinct");

  const CellSolution& s1 = *sorted[0];
  const CellSolution& s2 = *sorted[1];
  const double r1 = s1.rho;
  const double r2 = s2.rho;
  const Mat& d1 = s1.dchi.data();
  const Mat& d2 = s2.dchi.data();
  Mat xi = (r2 * d1 - r1 * d2) / (r2 - r1);
  Mat slope = (d2 - d1) / (r2 - r1);

  Extrapolation out;
  out.residual = Vec::Zero(xi.rows());
  for (std::size_t k = 2; k < sorted.size(); ++k) {
    const Mat model = xi + sorted[k]->rho * slope;
    const Vec dev = (sorted[k]->dchi.data() - model).cwiseAbs().rowwise().maxCoeff();
    out.residual = out.residual.cwiseMax(dev);
  }
  out.max_residual = out.residual.size() ? out.residual.maxCoeff() : 0.0;
  const double scale = std::max(1.0, d1.lpNorm<Eigen::Infinity>());
  out.converged = out.max_residual <= model_tolerance * scale;
  out.xi = GradientField(s1.grid, s1.dchi.slow_dim(), std::move(xi));
  return out;
}

const GradientField& CorrectorField::smallest_rho_gradient() const {
  const auto it = std::min_element(solutions.begin(), solutions.end(),
                                   [](const auto& a, const auto& b) { return a.rho < b.rho; });
  return it->dchi;
}

std::vector<double> default_rho_schedule() { return {1e-2, 3.16e-3, 1e-3, 3.16e-4, 1e-4}; }

CorrectorField build_corrector(const CoefficientSet& coeffs, const std::vector<double>& rho_schedule, int n_grid,
                               const CellSolveOptions& options, double model_tolerance) {
  CorrectorField field;
  field.grid = TorusGrid(coeffs.fast_dim(), n_grid);
  field.rho_schedule = rho_schedule;
  field.drift_offset = coeffs.drift_offset();
  field.solutions.resize(rho_schedule.size());
  parallel_for(rho_schedule.size(), [&](std::size_t k) {
    field.solutions[k] = solve_cell_problem_grid(coeffs, rho_schedule[k], n_grid, options);
  });
  for (const auto& s : field.solutions) field.residual_norms.push_back(s.residual);
  field.extrapolation = extrapolate_xi(field.solutions, model_tolerance);
  return field;
}

}  // namespace qldp
