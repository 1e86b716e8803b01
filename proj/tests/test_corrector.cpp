#include "support.hpp"

#include "qldp/corrector.hpp"
#include "qldp/torus_grid.hpp"

#include <doctest.h>

#include <random>

using namespace qldp;
using namespace qldp::test;

namespace {

CoefficientSet unshifted(const CoefficientSpec& spec) {
  auto sample = sample_medium(params(spec), 0);
  sample.shift.assign(static_cast<std::size_t>(spec.fast_dim), 0.0);
  return CoefficientSet(sample, spec);
}

double sup_error_chi(const CellSolution& s, const std::function<double(double)>& ref) {
  double err = 0.0;
  double y = 0.0;
  for (std::size_t p = 0; p < s.grid.size(); ++p) {
    s.grid.point(p, &y);
    err = std::max(err, std::fabs(s.chi(static_cast<Eigen::Index>(p), 0) - ref(y)));
  }
  return err;
}

double sup_error_field(const GradientField& g, const std::function<double(double)>& ref) {
  double err = 0.0;
  double y = 0.0;
  for (std::size_t p = 0; p < g.grid().size(); ++p) {
    g.grid().point(p, &y);
    err = std::max(err, std::fabs(g.data()(static_cast<Eigen::Index>(p), 0) - ref(y)));
  }
  return err;
}

}  // namespace

TEST_CASE("zero right-hand side gives a zero corrector") {
  auto spec = sine_spec();
  spec.b = FieldSpec::zeros(1, 1);
  const auto coeffs = unshifted(spec);
  const auto s = solve_cell_problem_grid(coeffs, 1e-3, 256);
  CHECK(s.chi.cwiseAbs().maxCoeff() == 0.0);
  const auto field = build_corrector(coeffs, {1e-2, 1e-3, 1e-4}, 256);
  CHECK(field.xi().data().cwiseAbs().maxCoeff() == 0.0);
  CHECK(field.extrapolation.converged);
}

TEST_CASE("analytic resolvent of the sine drift") {
  const auto coeffs = unshifted(sine_spec());
  const double rho = 1e-3;
  const auto s = solve_cell_problem_grid(coeffs, rho, 4096);
  CHECK(sup_error_chi(s, [&](double y) { return sine_chi(y, rho); }) <= 1e-5);
  CHECK(sup_error_field(s.dchi, [&](double y) { return sine_dchi(y, rho); }) <= 1e-5);
}

TEST_CASE("gradient medium against an independent fine-grid solve") {
  auto spec = scalar_spec();
  spec.b.add(0, 0, sin_term(1.0, 1));
  const auto coeffs = make_coeffs(gradient_params(spec, 1.0, 1.0));
  const double rho = 1e-2;
  const auto s = solve_cell_problem_grid(coeffs, rho, 4096);

  const std::size_t fine = 1u << 18;
  std::vector<double> f(fine), a(fine, 1.0), rhs(fine);
  for (std::size_t i = 0; i < fine; ++i) {
    const double y = static_cast<double>(i) / fine;
    f[i] = 2 * kPi * std::sin(2 * kPi * y);  // -Q'
    rhs[i] = std::sin(2 * kPi * y);
  }
  const auto ref = periodic_resolvent_1d(rho, f, a, rhs);
  double err = 0.0;
  for (std::size_t p = 0; p < 4096; ++p) err = std::max(err, std::fabs(s.chi(static_cast<Eigen::Index>(p), 0) - ref[p * 64]));
  CHECK(err <= 1e-6);
}

TEST_CASE("discrete residual, maximum principle and second-order convergence") {
  auto spec = scalar_spec();
  spec.b.add(0, 0, sin_term(1.0, 1));
  spec.b.add(0, 0, cos_term(0.5, 2));
  auto grad = make_coeffs(gradient_params(spec, 0.8, 0.7));
  grad.set_drift_offset(drift_mean(grad, invariant_density(grad, 1024)));
  const auto sine = unshifted(sine_spec());
  for (const CoefficientSet* c : {static_cast<const CoefficientSet*>(&grad), &sine}) {
    for (double rho : {1e-1, 1e-3}) {
      const auto s = solve_cell_problem_grid(*c, rho, 1024);
      CHECK(s.residual <= 1e-10);
      CHECK(s.chi.cwiseAbs().maxCoeff() <= (c == &sine ? 1.0 : 1.5) / rho);
    }
  }
  const double rho = 1e-3;
  double prev = 0.0;
  for (int n : {64, 128, 256}) {
    const double err = sup_error_chi(solve_cell_problem_grid(sine, rho, n), [&](double y) { return sine_chi(y, rho); });
    if (prev > 0.0) {
      const double ratio = prev / err;
      CHECK(ratio >= 3.5);
      CHECK(ratio <= 4.5);
    }
    prev = err;
  }
}

TEST_CASE("corrector on a two-dimensional torus") {
  auto spec = CoefficientSpec::zeros(1, 2, 2, 1);
  spec.b.add(0, 0, FourierTerm{1.0, {}, {1, 1}, -0.5 * kPi});
  spec.tau1.add(0, 0, constant_term(std::sqrt(2.0)));
  spec.tau1.add(1, 1, constant_term(std::sqrt(2.0)));
  const auto coeffs = unshifted(spec);
  const double rho = 1e-2;
  const auto s = solve_cell_problem_grid(coeffs, rho, 128);
  // rho chi - Laplacian chi = sin(2 pi (y0 + y1)) -> chi = sin(.) / (rho + 8 pi^2)
  double err = 0.0;
  double y[2];
  for (std::size_t p = 0; p < s.grid.size(); ++p) {
    s.grid.point(p, y);
    err = std::max(err, std::fabs(s.chi(static_cast<Eigen::Index>(p), 0) -
                                  std::sin(2 * kPi * (y[0] + y[1])) / (rho + 8 * kPi * kPi)));
  }
  CHECK(err <= 2e-5);
}

TEST_CASE("extrapolated corrector gradient") {
  const auto coeffs = unshifted(sine_spec());
  SUBCASE("sine limit") {
    const auto field = build_corrector(coeffs, {1e-2, 1e-3, 1e-4}, 4096);
    CHECK(field.extrapolation.converged);
    CHECK(sup_error_field(field.xi(), sine_xi) <= 1e-6);
    for (double r : field.residual_norms) CHECK(r <= 1e-9);
  }
  SUBCASE("schedule preconditions") {
    CHECK_THROWS_AS(build_corrector(coeffs, {1e-2, 1e-4}, 256), ConfigError);
    CHECK_THROWS_AS(build_corrector(coeffs, {1e-2, 5e-3, 1e-3}, 256), ConfigError);
  }
  SUBCASE("model residual flags a sequence that is not linear in rho") {
    const auto field = build_corrector(coeffs, {1e-2, 1e-3, 1e-4}, 256, {}, 1e-16);
    CHECK_FALSE(field.extrapolation.converged);
  }
  SUBCASE("drift correction is stable under refining the smallest rho") {
    auto spec = sine_spec();
    spec.g.add(0, 0, cos_term(1.0, 1));
    const auto c = unshifted(spec);
    const auto density = invariant_density(c, 4096);
    auto correction = [&](const std::vector<double>& schedule) {
      const auto field = build_corrector(c, schedule, 4096);
      auto values = c.make_values();
      const double x0 = 0.0;
      Mat G(1, 1);
      return pi_average(density, [&](const double* y) {
        field.xi().at(y, G);
        c.eval(&x0, y, values);
        return G(0, 0) * values.g(0);
      });
    };
    const double a = correction({1e-2, 1e-3, 1e-4});
    const double b = correction({1e-2, 1e-3, 1e-4, 5e-5});
    CHECK(std::fabs(a - b) <= 1e-7);
    CHECK(a == doctest::Approx(1.0 / (4 * kPi)).epsilon(1e-6));
  }
}

TEST_CASE("vanishing resolvent mass along the schedule") {
  auto spec = scalar_spec();
  spec.b.add(0, 0, sin_term(1.0, 1));
  const auto coeffs = make_coeffs(gradient_params(spec, 1.0, 1.0));
  const auto density = invariant_density(coeffs, 1024);
  const std::vector<double> schedule{1.0, 1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<double> mass;
  for (double rho : schedule) {
    const auto s = solve_cell_problem_grid(coeffs, rho, 1024);
    std::vector<double> sq(static_cast<std::size_t>(s.chi.rows()));
    for (Eigen::Index p = 0; p < s.chi.rows(); ++p) sq[static_cast<std::size_t>(p)] = s.chi(p, 0) * s.chi(p, 0);
    mass.push_back(rho * density.average(sq));
  }
  for (std::size_t k = 1; k < mass.size(); ++k) CHECK(mass[k] < mass[k - 1]);
  CHECK(mass.back() <= 1e-3 * mass.front());
}

TEST_CASE("Monte Carlo resolvent") {
  SUBCASE("zero drift gives zero with zero variance") {
    auto spec = sine_spec();
    spec.b = FieldSpec::zeros(1, 1);
    const auto coeffs = unshifted(spec);
    const auto est = solve_cell_problem_mc(coeffs, 1.0, Mat::Constant(2, 1, 0.3), 16, 10.0, 1);
    CHECK(est.value.cwiseAbs().maxCoeff() == 0.0);
    CHECK(est.std_err.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("truncation horizon must cover the decay time") {
    const auto coeffs = unshifted(sine_spec());
    CHECK_THROWS_AS(solve_cell_problem_mc(coeffs, 1.0, Mat::Constant(1, 1, 0.3), 16, 5.0, 1), ConfigError);
  }
  SUBCASE("sine case against the analytic resolvent") {
    const auto coeffs = unshifted(sine_spec());
    const double rho = 1.0;
    const auto est = solve_cell_problem_mc(coeffs, rho, Mat::Constant(1, 1, 0.25), 10000, 10.0 / rho, 5);
    CHECK(std::fabs(est.value(0, 0) - sine_chi(0.25, rho)) <= 3.0 * est.std_err(0, 0));
    CHECK_FALSE(est.truncation_flag);
    CHECK(est.truncation_bias_bound == doctest::Approx(std::exp(-10.0)).epsilon(1e-3));
  }
  SUBCASE("gradient medium against the grid solution at random points") {
    auto spec = scalar_spec();
    spec.b.add(0, 0, sin_term(1.0, 1));
    const auto coeffs = make_coeffs(gradient_params(spec, 1.0, 1.0));
    const double rho = 1.0;
    Mat pts(8, 1);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 8; ++i) pts(i, 0) = u(rng);
    const auto est = solve_cell_problem_mc(coeffs, rho, pts, 2000, 10.0 / rho, 8);
    const auto grid = solve_cell_problem_grid(coeffs, rho, 4096);
    for (int i = 0; i < 8; ++i) {
      const double y = pts(i, 0);
      const auto st = grid.grid.stencil(&y);
      double g = 0.0;
      for (int k = 0; k < st.count; ++k) g += st.weight[k] * grid.chi(static_cast<Eigen::Index>(st.index[k]), 0);
      CHECK(std::fabs(est.value(i, 0) - g) <= 3.0 * est.std_err(i, 0));
    }
  }
}
