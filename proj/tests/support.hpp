#pragma once

// Shared fixtures and reference computations for the tests. The reference
// functions here are written independently of the library so that they can
// serve as oracles.

#include "qldp/medium.hpp"
#include "qldp/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace qldp::test {

constexpr double kPi = std::numbers::pi;

inline FourierTerm constant_term(double value) { return FourierTerm{value, {}, {}, 0.0}; }
inline FourierTerm cos_term(double amp, int k, double phase = 0.0) { return FourierTerm{amp, {}, {k}, phase}; }
inline FourierTerm sin_term(double amp, int k) { return FourierTerm{amp, {}, {k}, -0.5 * kPi}; }

/// 1-d slow, 1-d fast, k1 = k2 = 1; everything zero.
inline CoefficientSpec scalar_spec() { return CoefficientSpec::zeros(1, 1, 1, 1); }

/// f = 0, tau1 = sqrt 2, tau2 = 0, sigma = 1, b = sin(2 pi y).
inline CoefficientSpec sine_spec() {
  auto s = scalar_spec();
  s.b.add(0, 0, sin_term(1.0, 1));
  s.sigma.add(0, 0, constant_term(1.0));
  s.tau1.add(0, 0, constant_term(std::sqrt(2.0)));
  return s;
}

/// Constant c0 and sigma0 with a nondegenerate but irrelevant fast motion.
inline CoefficientSpec constant_spec(double c0, double sigma0) {
  auto s = scalar_spec();
  s.c.add(0, 0, constant_term(c0));
  s.sigma.add(0, 0, constant_term(sigma0));
  s.tau2.add(0, 0, constant_term(1.0));
  return s;
}

inline MediumParams params(const CoefficientSpec& spec, Family family = Family::RandomShiftPeriodic) {
  MediumParams p;
  p.family = family;
  p.coefficients = spec;
  return p;
}

/// Gradient family with Q = amp cos(2 pi y) and the given D.
inline MediumParams gradient_params(const CoefficientSpec& spec, double amp = 1.0, double D = 1.0) {
  MediumParams p = params(spec, Family::GradientType);
  p.potential.D_const = D;
  p.potential.modes.push_back(cos_term(amp, 1));
  return p;
}

inline CoefficientSet make_coeffs(const MediumParams& p, std::uint64_t seed = 0) {
  return CoefficientSet(sample_medium(p, seed), p.coefficients);
}

// ---- analytic oracles -------------------------------------------------------

/// Solution of rho chi - chi'' = sin(2 pi y).
inline double sine_chi(double y, double rho) { return std::sin(2 * kPi * y) / (rho + 4 * kPi * kPi); }
inline double sine_dchi(double y, double rho) { return 2 * kPi * std::cos(2 * kPi * y) / (rho + 4 * kPi * kPi); }
inline double sine_xi(double y) { return std::cos(2 * kPi * y) / (2 * kPi); }

/// P(N(0, variance) >= a).
inline double gaussian_upper_tail(double a, double variance) { return 0.5 * std::erfc(a / std::sqrt(2.0 * variance)); }

/// Periodic mean of h over [0, 1) by the composite midpoint rule in long double.
inline double periodic_mean(const std::function<double(double)>& h, std::size_t n) {
  long double acc = 0.0L;
  for (std::size_t i = 0; i < n; ++i) acc += h((static_cast<double>(i) + 0.5) / static_cast<double>(n));
  return static_cast<double>(acc / static_cast<long double>(n));
}

/// pi-average under the density exp(-Q/D) with Q = amp cos(2 pi y).
inline double gibbs_average(const std::function<double(double)>& h, double amp, double D, std::size_t n) {
  long double num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double w = std::exp(-amp * std::cos(2 * kPi * y) / D);
    num += w * h(y);
    den += w;
  }
  return static_cast<double>(num / den);
}

/// Independent solver for rho u - (f u' + a u'') = rhs on a periodic grid
/// with central differences: cyclic tridiagonal system by Sherman-Morrison.
inline std::vector<double> periodic_resolvent_1d(double rho, const std::vector<double>& f,
                                                 const std::vector<double>& a, const std::vector<double>& rhs) {
  const std::size_t n = rhs.size();
  const long double h = 1.0L / static_cast<long double>(n);
  std::vector<long double> lo(n), di(n), up(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long double diff = a[i] / (h * h);
    const long double adv = f[i] / (2 * h);
    lo[i] = -(diff - adv);
    up[i] = -(diff + adv);
    di[i] = rho + 2 * diff;
  }
  // A = T + u v^T with T tridiagonal; corner entries carried by u, v.
  const long double gamma = -di[0];
  std::vector<long double> b(di.begin(), di.end());
  b[0] -= gamma;
  b[n - 1] -= lo[0] * up[n - 1] / gamma;
  auto solve_tri = [&](std::vector<long double> d) {
    std::vector<long double> c(n), bb(b);
    c[0] = up[0] / bb[0];
    d[0] /= bb[0];
    for (std::size_t i = 1; i < n; ++i) {
      const long double m = bb[i] - lo[i] * c[i - 1];
      c[i] = i + 1 < n ? up[i] / m : 0.0L;
      d[i] = (d[i] - lo[i] * d[i - 1]) / m;
    }
    for (std::size_t i = n - 1; i-- > 0;) d[i] -= c[i] * d[i + 1];
    return d;
  };
  std::vector<long double> r(rhs.begin(), rhs.end());
  std::vector<long double> u(n, 0.0L);
  u[0] = gamma;
  u[n - 1] = up[n - 1];
  std::vector<long double> v(n, 0.0L);
  v[0] = 1.0L;
  v[n - 1] = lo[0] / gamma;
  const auto y = solve_tri(r);
  const auto z = solve_tri(u);
  const long double factor = (v[0] * y[0] + v[n - 1] * y[n - 1]) / (1.0L + v[0] * z[0] + v[n - 1] * z[n - 1]);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(y[i] - factor * z[i]);
  return out;
}

/// Kolmogorov-Smirnov distance of a sample to the uniform law on [0, 1).
inline double ks_uniform(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - sample[i]);
    d = std::max(d, sample[i] - static_cast<double>(i) / n);
  }
  return d;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double variance = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  const double n = static_cast<double>(v.size());
  for (double x : v) out.mean += x;
  out.mean /= n;
  for (double x : v) out.variance += (x - out.mean) * (x - out.mean);
  out.variance /= (n - 1.0);
  out.se = std::sqrt(out.variance / n);
  return out;
}

}  // namespace qldp::test
