#include "qldp/effective.hpp"

#include <Eigen/Eigenvalues>

namespace qldp {

EffectiveCoefficients::EffectiveCoefficients(Vec r0, Mat r1, Mat q0, std::vector<Mat> q1,
                                             std::vector<std::vector<Mat>> q2)
    : r0_(std::move(r0)), r1_(std::move(r1)), q0_(std::move(q0)), q1_(std::move(q1)), q2_(std::move(q2)) {
  const auto m = r0_.size();
  require(r1_.rows() == m && r1_.cols() == m && q0_.rows() == m && q0_.cols() == m,
          "effective coefficient shapes are inconsistent");
}

EffectiveCoefficients EffectiveCoefficients::constant(const Vec& r, const Mat& q) {
  return EffectiveCoefficients(r, Mat::Zero(r.size(), r.size()), q, {}, {});
}

Vec EffectiveCoefficients::r(const Vec& x) const { return r0_ + r1_ * x; }

Mat EffectiveCoefficients::q(const Vec& x) const {
  Mat out = q0_;
  for (std::size_t i = 0; i < q1_.size(); ++i) out += x(static_cast<Eigen::Index>(i)) * q1_[i];
  for (std::size_t i = 0; i < q2_.size(); ++i)
    for (std::size_t j = 0; j < q2_[i].size(); ++j)
      out += x(static_cast<Eigen::Index>(i)) * x(static_cast<Eigen::Index>(j)) * q2_[i][j];
  return out;
}

Mat EffectiveCoefficients::dq(const Vec& x, int i) const {
  const auto m = r0_.size();
  Mat out = Mat::Zero(m, m);
  const auto ui = static_cast<std::size_t>(i);
  if (ui < q1_.size()) out += q1_[ui];
  if (ui < q2_.size()) {
    for (std::size_t j = 0; j < q2_.size(); ++j) {
      out += x(static_cast<Eigen::Index>(j)) * (q2_[ui][j] + q2_[j][ui]);
    }
  }
  return out;
}

Eigen::LLT<Mat> EffectiveCoefficients::q_factor(const Vec& x) const {
  const Mat qx = q(x);
  Eigen::LLT<Mat> llt(qx);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0)
    throw NumericalError("effective diffusion q(x) is not positive definite");
  const double min_pivot = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
  if (min_pivot * min_pivot < q_floor) throw NumericalError("effective diffusion q(x) is below the floor");
  return llt;
}

namespace {

void require_matching(const CoefficientSet& coeffs, const InvariantDensity& density, const GradientField& xi) {
  require(density.fast_dim == coeffs.fast_dim() && xi.fast_dim() == coeffs.fast_dim(),
          "fast dimension mismatch between coefficients, density and corrector");
  require(xi.grid().n() == density.n_grid, "corrector and density grids differ");
  require(xi.slow_dim() == coeffs.slow_dim(), "corrector slow dimension mismatch");
}

}  // namespace

Vec compute_r(const CoefficientSet& coeffs, const InvariantDensity& density, const GradientField& xi, const Vec& x) {
  require_matching(coeffs, density, xi);
  const TorusGrid& grid = xi.grid();
  auto values = coeffs.make_values();
  Mat g_xi(coeffs.slow_dim(), coeffs.fast_dim());
  Vec acc = Vec::Zero(coeffs.slow_dim());
  double weight = 0.0;
  double y[2] = {0.0, 0.0};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, y);
    coeffs.eval(x.data(), y, values);
    g_xi = xi.node(p);
    acc += density.density[p] * (values.c + g_xi * values.g);
    weight += density.density[p];
  }
  return acc / weight;
}

Mat compute_q(const CoefficientSet& coeffs, const InvariantDensity& density, const GradientField& xi, const Vec& x) {
  require_matching(coeffs, density, xi);
  const TorusGrid& grid = xi.grid();
  auto values = coeffs.make_values();
  const int m = coeffs.slow_dim();
  Mat acc = Mat::Zero(m, m);
  double weight = 0.0;
  double y[2] = {0.0, 0.0};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, y);
    coeffs.eval(x.data(), y, values);
    const Mat G = xi.node(p);
    const Mat a = values.sigma + G * values.tau1;
    const Mat b = G * values.tau2;
    acc += density.density[p] * (a * a.transpose() + b * b.transpose());
    weight += density.density[p];
  }
  acc /= weight;
  return 0.5 * (acc + acc.transpose());
}

EffectiveCoefficients compute_effective(const CoefficientSet& coeffs, const InvariantDensity& density,
                                        const GradientField& xi) {
  require_matching(coeffs, density, xi);
  const TorusGrid& grid = xi.grid();
  const int m = coeffs.slow_dim();
  const Vec origin = Vec::Zero(m);

  auto base = coeffs.make_values();
  auto unit = coeffs.make_values();
  Vec r0 = Vec::Zero(m);
  Mat r1 = Mat::Zero(m, m);
  Mat q0 = Mat::Zero(m, m);
  std::vector<Mat> q1(static_cast<std::size_t>(m), Mat::Zero(m, m));
  std::vector<std::vector<Mat>> q2(static_cast<std::size_t>(m), std::vector<Mat>(static_cast<std::size_t>(m), Mat::Zero(m, m)));
  std::vector<Mat> slopes(static_cast<std::size_t>(m));
  bool sigma_depends_on_x = false;

  double weight = 0.0;
  double y[2] = {0.0, 0.0};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, y);
    const double w = density.density[p];
    weight += w;
    coeffs.eval(origin.data(), y, base);
    const Mat G = xi.node(p);
    const Vec drift0 = base.c + G * base.g;
    const Mat a0 = base.sigma + G * base.tau1;
    const Mat b0 = G * base.tau2;
    r0 += w * drift0;
    q0 += w * (a0 * a0.transpose() + b0 * b0.transpose());
    for (int i = 0; i < m; ++i) {
      Vec e = Vec::Zero(m);
      e(i) = 1.0;
      coeffs.eval(e.data(), y, unit);
      const Vec drift_slope = unit.c + G * unit.g - drift0;
      r1.col(i) += w * drift_slope;
      slopes[static_cast<std::size_t>(i)] = unit.sigma - base.sigma;
      if (slopes[static_cast<std::size_t>(i)].lpNorm<Eigen::Infinity>() > 0.0) sigma_depends_on_x = true;
    }
    for (int i = 0; i < m; ++i) {
      const Mat& s = slopes[static_cast<std::size_t>(i)];
      q1[static_cast<std::size_t>(i)] += w * (a0 * s.transpose() + s * a0.transpose());
      for (int j = 0; j < m; ++j)
        q2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            w * s * slopes[static_cast<std::size_t>(j)].transpose();
    }
  }
  r0 /= weight;
  r1 /= weight;
  q0 /= weight;
  q0 = 0.5 * (q0 + q0.transpose());
  for (auto& q : q1) {
    q /= weight;
    q = 0.5 * (q + q.transpose());
  }
  for (auto& row : q2)
    for (auto& q : row) q /= weight;
  if (!sigma_depends_on_x) {
    q1.clear();
    q2.clear();
  }
  EffectiveCoefficients eff(r0, r1, q0, std::move(q1), std::move(q2));
  eff.q_factor(origin);
  eff.provenance.n_grid = grid.n();
  return eff;
}

Vec assemble_lambda(const CoefficientSet& coeffs, const Mat& dchi_at_y, const Vec& x, const Vec& y, const Vec& z1,
                    const Vec& z2) {
  const auto v = coeffs.eval(x, y);
  return v.c + dchi_at_y * v.g + v.sigma * z1 + dchi_at_y * (v.tau1 * z1 + v.tau2 * z2);
}

}  // namespace qldp
