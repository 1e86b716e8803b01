#include "support.hpp"

#include "qldp/action.hpp"
#include "qldp/corrector.hpp"
#include "qldp/diagnostics.hpp"
#include "qldp/effective.hpp"
#include "qldp/rareevent.hpp"

#include <doctest.h>

using namespace qldp;
using namespace qldp::test;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

struct Media {
  std::vector<CoefficientSet> coeffs;
  std::vector<InvariantDensity> densities;

  std::vector<ErgodicMedium> view() const {
    std::vector<ErgodicMedium> out;
    for (std::size_t k = 0; k < coeffs.size(); ++k) out.push_back({&coeffs[k], &densities[k]});
    return out;
  }
};

Media make_media(const MediumParams& p, int count, std::uint64_t seed0 = 100) {
  Media m;
  for (int k = 0; k < count; ++k) {
    m.coeffs.emplace_back(sample_medium(p, seed0 + static_cast<std::uint64_t>(k)), p.coefficients);
    m.densities.push_back(invariant_density(m.coeffs.back(), 1024));
  }
  return m;
}

ErgodicOptions shifts(int count, double T, std::uint64_t seed) {
  ErgodicOptions o;
  for (int i = 0; i < count; ++i) o.t_shifts.push_back(i * T / count);
  o.x0 = v1(0.0);
  o.y0 = v1(0.0);
  o.seed = seed;
  return o;
}

const Observable cos_obs = [](const double* y) { return std::cos(2 * kPi * y[0]); };

}  // namespace

TEST_CASE("ergodic window") {
  const auto scale = ScaleParams::make(0.04, 1.5, 0.1);
  CHECK(ergodic_window(scale, 0.5) == doctest::Approx(std::sqrt(scale.rho())).epsilon(1e-14));
  CHECK_THROWS(ergodic_window(scale, 1.0));
  const auto media = make_media(params(sine_spec()), 1);
  const auto coarse = ScaleParams::make(0.04, 1.5, 0.9);
  auto opts = shifts(2, 1.0, 1);
  opts.beta = 0.05;  // window of about one rho: a handful of steps
  CHECK_THROWS_AS(ergodic_average(media.view(), coarse, cos_obs, opts), ConfigError);
}

TEST_CASE("constant observable has no deviation") {
  const auto media = make_media(params(sine_spec()), 2);
  const auto rep = ergodic_average(media.view(), ScaleParams::make(0.1), [](const double*) { return 0.75; },
                                   shifts(4, 1.0, 2));
  CHECK(rep.max_abs_deviation <= 1e-14);
  CHECK(rep.targets[0] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("window averages under the uniform invariant law") {
  const auto media = make_media(params(sine_spec()), 5);
  std::vector<double> mean_dev, mean_se;
  for (double eps : {0.1, 0.03}) {
    const auto rep = ergodic_average(media.view(), ScaleParams::make(eps, 1.5, 0.01), cos_obs, shifts(8, 1.0, 3));
    for (double t : rep.targets) CHECK(std::fabs(t) <= 1e-12);
    CHECK(rep.max_abs_deviation <= 3.0 * std::sqrt(eps) / (2 * kPi) * 3.0);
    mean_dev.push_back(rep.mean_abs_deviation);
    mean_se.push_back(rep.mean_abs_deviation_se);
    // no shift is singled out: the worst deviation stays within a few times the typical one
    CHECK(rep.max_abs_deviation <= 4.0 * rep.mean_abs_deviation);
  }
  CHECK(mean_dev[1] <= mean_dev[0] + mean_se[0]);
  CHECK(mean_dev[1] < mean_dev[0]);
}

TEST_CASE("window averages under a Gibbs invariant law") {
  auto spec = scalar_spec();
  spec.b.add(0, 0, sin_term(1.0, 1));
  const auto media = make_media(gradient_params(spec, 1.0, 1.0), 3);
  const auto rep = ergodic_average(media.view(), ScaleParams::make(0.03, 1.5, 0.01), cos_obs, shifts(4, 1.0, 4));
  const double oracle = gibbs_average([](double y) { return std::cos(2 * kPi * y); }, 1.0, 1.0, 1 << 18);
  for (std::size_t k = 0; k < rep.targets.size(); ++k) {
    // the random shift translates the medium, not the observable
    const double shift = media.coeffs[k].sample().shift[0];
    const double target = gibbs_average([&](double y) { return std::cos(2 * kPi * (y - shift)); }, 1.0, 1.0, 1 << 16);
    CHECK(std::fabs(rep.targets[k] - target) <= 1e-6);
  }
  CHECK(oracle < -0.4);
  CHECK(rep.max_abs_deviation <= 0.15);
}

TEST_CASE("slow fast drift does not change the ergodic limit") {
  auto spec = sine_spec();
  spec.g.add(0, 0, constant_term(1.0));
  const auto media = make_media(params(spec), 3);
  auto opts = shifts(4, 1.0, 5);
  const auto plain = ergodic_average(media.view(), ScaleParams::make(0.03, 1.5, 0.01), cos_obs, opts);
  opts.mode = ErgodicMode::Perturbed;
  const auto pert = ergodic_average(media.view(), ScaleParams::make(0.03, 1.5, 0.01), cos_obs, opts);
  CHECK(pert.max_abs_deviation <= 0.15);
  CHECK(plain.max_abs_deviation <= 0.15);
}

TEST_CASE("ergodic averages at a large epsilon run") {
  const auto media = make_media(params(sine_spec()), 1);
  const auto rep = ergodic_average(media.view(), ScaleParams::make(0.5), cos_obs, shifts(2, 1.0, 6));
  CHECK(std::isfinite(rep.max_abs_deviation));
}

TEST_CASE("occupation measure without control") {
  const auto p = params(sine_spec());
  const CoefficientSet coeffs(sample_medium(p, 7), p.coefficients);
  const auto density = invariant_density(coeffs, 4096);
  const auto scale = ScaleParams::make(0.01);
  const double window = occupation_window(scale);
  CHECK(window == doctest::Approx(10.0 * scale.rho() * std::pow(0.01, -0.125)).epsilon(1e-12));
  const double T = 1.0;
  const auto run = simulate_occupation_run(coeffs, scale, v1(0.0), v1(0.0), T, window, ControlPolicy::zero(1, 1), 8);
  OccupationBins bins;
  const auto h = build_occupation(run, scale, T, window, bins);

  CHECK(h.total_mass() == doctest::Approx(T).epsilon(1e-12));
  const auto tm = h.time_marginal();
  for (int b = 0; b < bins.t_bins; ++b) CHECK(std::fabs(tm[b] - (h.t_edges[b + 1] - h.t_edges[b])) <= 1e-12);
  const auto u = h.u_marginal(0);
  CHECK(u[static_cast<std::size_t>(h.zero_u_bin())] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(h.overflow_steps == 0);

  const auto ref = density.bin_masses(bins.y_bins);
  const double tv = total_variation(h.y_marginal(), ref);
  MESSAGE("y-marginal TV " << tv);
  CHECK(tv <= 0.05);

  CHECK_THROWS(build_occupation(run, scale, T, 5.0 * scale.rho(), bins));
}

TEST_CASE("occupation measure under a constant control") {
  const auto p = params(constant_spec(0.0, 1.0));
  const CoefficientSet coeffs(sample_medium(p, 1), p.coefficients);
  const auto scale = ScaleParams::make(0.05);
  const double window = occupation_window(scale);
  const auto run = simulate_occupation_run(coeffs, scale, v1(0.0), v1(0.0), 1.0, window,
                                           ControlPolicy::constant(v1(2.1), v1(-3.3)), 9);
  OccupationBins bins;
  auto h = build_occupation(run, scale, 1.0, window, bins);
  // u = 2.1 -> bin floor((2.1 + 10) / 20 * 21) = 12; u = -3.3 -> 7; control is off after T
  const auto u1 = h.u_marginal(0);
  const auto u2 = h.u_marginal(1);
  CHECK(u1[12] + u1[10] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(u1[12] > 0.97);
  CHECK(u2[7] > 0.97);
  const auto copy = h;
  h.merge(copy);
  CHECK(h.total_mass() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("total variation") {
  const std::vector<double> a{0.5, 0.5, 0.0}, b{0.25, 0.25, 0.5};
  CHECK(total_variation(a, b) == doctest::Approx(0.5));
  CHECK(total_variation(a, a) == 0.0);
}

TEST_CASE("mean slow path follows the averaged drift") {
  SUBCASE("constant drift") {
    const auto p = params(constant_spec(0.7, 1.0));
    const CoefficientSet coeffs(sample_medium(p, 1), p.coefficients);
    const auto runs =
        simulate_ensemble(coeffs, ScaleParams::make(0.1), v1(0.0), v1(0.0), 1.0, ControlPolicy::zero(1, 1), 400, 3, 10);
    const auto check = viability_drift_check(runs, [](double t) { return v1(0.7 * t); });
    CHECK(check.sup_gap <= 4.0 * check.max_se);
    CHECK(check.times.back() == doctest::Approx(1.0));
  }
  SUBCASE("controlled Brownian motion tracks the optimal path") {
    const auto p = params(constant_spec(0.0, 1.0));
    CoefficientSet coeffs(sample_medium(p, 1), p.coefficients);
    const auto density = invariant_density(coeffs, 256);
    const auto corrector = build_corrector(coeffs, default_rho_schedule(), 256);
    auto xi = std::make_shared<const GradientField>(corrector.xi());
    auto eff = std::make_shared<const EffectiveCoefficients>(compute_effective(coeffs, density, *xi));
    const auto opt = minimize_action(v1(0.0), EventSpec::half_space(v1(1.0), 1.0), 1.0, *eff, 16);
    const auto policy = build_is_control(opt.path, eff, xi, 1, 1);
    const auto runs = simulate_ensemble(coeffs, ScaleParams::make(0.05), v1(0.0), v1(0.0), 1.0, policy, 400, 4, 10);
    const auto check = viability_drift_check(runs, [&](double t) { return opt.path.at(t); });
    CHECK(check.sup_gap <= 4.0 * check.max_se);
  }
  SUBCASE("sine medium with a fast drift contribution") {
    auto spec = sine_spec();
    spec.g.add(0, 0, cos_term(1.0, 1));
    const auto p = params(spec);
    CoefficientSet coeffs(sample_medium(p, 2), p.coefficients);
    const auto density = invariant_density(coeffs, 1024);
    const auto corrector = build_corrector(coeffs, default_rho_schedule(), 1024);
    const auto eff = compute_effective(coeffs, density, corrector.xi());
    const auto ode = drift_path(v1(0.0), 1.0, eff, 64);
    const auto runs = simulate_ensemble(coeffs, ScaleParams::make(0.03, 1.5, 0.01), v1(0.0), v1(0.0), 1.0,
                                        ControlPolicy::zero(1, 1), 400, 5, 100);
    const auto check = viability_drift_check(runs, [&](double t) { return ode.at(t); });
    MESSAGE("sup gap " << check.sup_gap << " se " << check.max_se << " mean end " << check.mean_path(check.mean_path.rows() - 1, 0) << " ode " << ode.at(1.0)(0));
    CHECK(check.sup_gap <= 0.05);
  }
}
