#include "qldp/torus_grid.hpp"

#include "qldp/medium.hpp"

#include <cmath>
#include <vector>

namespace qldp {

TorusGrid::TorusGrid(int dim, int n) : dim_(dim), n_(n) {
  require(dim == 1 || dim == 2, "torus grid dimension must be 1 or 2");
  require(n >= 4, "torus grid needs at least 4 points per dimension");
}

std::size_t TorusGrid::size() const {
  const auto n = static_cast<std::size_t>(n_);
  return dim_ == 1 ? n : n * n;
}

void TorusGrid::point(std::size_t index, double* y) const {
  const auto n = static_cast<std::size_t>(n_);
  y[0] = static_cast<double>(index % n) / n_;
  if (dim_ == 2) y[1] = static_cast<double>(index / n) / n_;
}

std::size_t TorusGrid::wrap(long i, long j) const {
  const long n = n_;
  i %= n;
  if (i < 0) i += n;
  if (dim_ == 1) return static_cast<std::size_t>(i);
  j %= n;
  if (j < 0) j += n;
  return static_cast<std::size_t>(i + n * j);
}

TorusGrid::Stencil TorusGrid::stencil(const double* y) const {
  Stencil s;
  double frac[2] = {0.0, 0.0};
  long base[2] = {0, 0};
  for (int d = 0; d < dim_; ++d) {
    const double u = (y[d] - std::floor(y[d])) * n_;
    base[d] = static_cast<long>(std::floor(u));
    frac[d] = u - static_cast<double>(base[d]);
  }
  if (dim_ == 1) {
    s.count = 2;
    s.index = {wrap(base[0]), wrap(base[0] + 1), 0, 0};
    s.weight = {1.0 - frac[0], frac[0], 0.0, 0.0};
    return s;
  }
  s.count = 4;
  s.index = {wrap(base[0], base[1]), wrap(base[0] + 1, base[1]), wrap(base[0], base[1] + 1),
             wrap(base[0] + 1, base[1] + 1)};
  s.weight = {(1 - frac[0]) * (1 - frac[1]), frac[0] * (1 - frac[1]), (1 - frac[0]) * frac[1],
              frac[0] * frac[1]};
  return s;
}

SparseMatrix assemble_generator(const CoefficientSet& coeffs, const TorusGrid& grid) {
  require(coeffs.fast_dim() == grid.dim(), "grid dimension does not match fast dimension");
  const std::size_t size = grid.size();
  const double h = grid.h();
  const double inv_h = 1.0 / h;
  const double inv_h2 = inv_h * inv_h;
  const int n = grid.n();

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(size * (grid.dim() == 1 ? 3 : 9));
  auto values = coeffs.make_values();
  double y[2] = {0.0, 0.0};

  for (std::size_t p = 0; p < size; ++p) {
    grid.point(p, y);
    coeffs.eval_fast(y, values);
    const Mat a = values.tau1 * values.tau1.transpose() + values.tau2 * values.tau2.transpose();
    const auto row = static_cast<int>(p);
    if (grid.dim() == 1) {
      const long i = static_cast<long>(p);
      const double drift = values.f(0) * 0.5 * inv_h;
      const double diff = 0.5 * a(0, 0) * inv_h2;
      triplets.emplace_back(row, static_cast<int>(grid.wrap(i + 1)), diff + drift);
      triplets.emplace_back(row, static_cast<int>(grid.wrap(i - 1)), diff - drift);
      triplets.emplace_back(row, row, -2.0 * diff);
      continue;
    }
    const long i = static_cast<long>(p % static_cast<std::size_t>(n));
    const long j = static_cast<long>(p / static_cast<std::size_t>(n));
    const double d0 = values.f(0) * 0.5 * inv_h;
    const double d1 = values.f(1) * 0.5 * inv_h;
    const double a00 = 0.5 * a(0, 0) * inv_h2;
    const double a11 = 0.5 * a(1, 1) * inv_h2;
    // 1/2 * 2 a01 d^2/dy0 dy1 with the four-corner stencil
    const double a01 = 0.25 * a(0, 1) * inv_h2;
    triplets.emplace_back(row, static_cast<int>(grid.wrap(i + 1, j)), a00 + d0);
    triplets.emplace_back(row, static_cast<int>(grid.wrap(i - 1, j)), a00 - d0);
    triplets.emplace_back(row, static_cast<int>(grid.wrap(i, j + 1)), a11 + d1);
    triplets.emplace_back(row, static_cast<int>(grid.wrap(i, j - 1)), a11 - d1);
    triplets.emplace_back(row, row, -2.0 * (a00 + a11));
    if (a01 != 0.0) {
      triplets.emplace_back(row, static_cast<int>(grid.wrap(i + 1, j + 1)), a01);
      triplets.emplace_back(row, static_cast<int>(grid.wrap(i - 1, j - 1)), a01);
      triplets.emplace_back(row, static_cast<int>(grid.wrap(i + 1, j - 1)), -a01);
      triplets.emplace_back(row, static_cast<int>(grid.wrap(i - 1, j + 1)), -a01);
    }
  }
  SparseMatrix op(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  op.setFromTriplets(triplets.begin(), triplets.end());
  return op;
}

Mat central_gradient(const TorusGrid& grid, const Eigen::Ref<const Vec>& values) {
  const std::size_t size = grid.size();
  Mat grad(static_cast<Eigen::Index>(size), grid.dim());
  const double scale = 0.5 * grid.n();
  const auto n = static_cast<std::size_t>(grid.n());
  for (std::size_t p = 0; p < size; ++p) {
    const long i = static_cast<long>(p % n);
    const long j = static_cast<long>(p / n);
    const auto r = static_cast<Eigen::Index>(p);
    grad(r, 0) = scale * (values(static_cast<Eigen::Index>(grid.wrap(i + 1, j))) -
                          values(static_cast<Eigen::Index>(grid.wrap(i - 1, j))));
    if (grid.dim() == 2) {
      grad(r, 1) = scale * (values(static_cast<Eigen::Index>(grid.wrap(i, j + 1))) -
                            values(static_cast<Eigen::Index>(grid.wrap(i, j - 1))));
    }
  }
  return grad;
}

}  // namespace qldp
