#pragma once

#include "qldp/corrector.hpp"
#include "qldp/medium.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace qldp {

/// Homogenized drift r(x) and diffusion q(x).
///
/// The slow-dependent fields c, g and sigma are affine in x, so the
/// pi-averages are exact polynomials: r is affine and q is quadratic,
///   r(x) = r0 + R1 x,
///   q(x) = Q0 + sum_i x_i Q1_i + sum_ij x_i x_j Q2_ij.
/// The coefficient matrices are computed once by quadrature.
class EffectiveCoefficients {
 public:
  struct Provenance {
    std::vector<double> rho_schedule;
    int n_grid = 0;
    bool extrapolated = true;
  };

  EffectiveCoefficients() = default;
  EffectiveCoefficients(Vec r0, Mat r1, Mat q0, std::vector<Mat> q1, std::vector<std::vector<Mat>> q2);

  static EffectiveCoefficients constant(const Vec& r, const Mat& q);

  int dim() const { return static_cast<int>(r0_.size()); }
  Vec r(const Vec& x) const;
  const Mat& drift_jacobian() const { return r1_; }
  Mat q(const Vec& x) const;
  /// Partial derivative of q with respect to x_i.
  Mat dq(const Vec& x, int i) const;
  bool q_depends_on_x() const { return !q1_.empty() || !q2_.empty(); }

  /// Cholesky factor of q(x); throws NumericalError if q(x) is not SPD above q_floor.
  Eigen::LLT<Mat> q_factor(const Vec& x) const;

  double q_floor = 1e-10;
  Provenance provenance;

 private:
  Vec r0_;
  Mat r1_;
  Mat q0_;
  std::vector<Mat> q1_;
  std::vector<std::vector<Mat>> q2_;
};

/// r(x) = E^pi[c(x, .) + xi g(x, .)] by grid quadrature.
Vec compute_r(const CoefficientSet& coeffs, const InvariantDensity& density, const GradientField& xi, const Vec& x);

/// q(x) = E^pi[(sigma + xi tau1)(sigma + xi tau1)^T + (xi tau2)(xi tau2)^T], symmetrized.
Mat compute_q(const CoefficientSet& coeffs, const InvariantDensity& density, const GradientField& xi, const Vec& x);

/// Polynomial representation built from compute_r / compute_q-style quadrature.
EffectiveCoefficients compute_effective(const CoefficientSet& coeffs, const InvariantDensity& density,
                                        const GradientField& xi);

/// c + G g + sigma z1 + G (tau1 z1 + tau2 z2) with G = D chi_rho (or xi) at y.
Vec assemble_lambda(const CoefficientSet& coeffs, const Mat& dchi_at_y, const Vec& x, const Vec& y, const Vec& z1,
                    const Vec& z2);

}  // namespace qldp
