// Acceptance run: one PASS/FAIL line per criterion. Tolerances and runtime
// limits are fixed below; the exit status is nonzero if any line fails.

#include "support.hpp"

#include "qldp/action.hpp"
#include "qldp/config.hpp"
#include "qldp/corrector.hpp"
#include "qldp/diagnostics.hpp"
#include "qldp/effective.hpp"
#include "qldp/rareevent.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

using namespace qldp;
using namespace qldp::test;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Vec v1(double a) { return Vec::Constant(1, a); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

ExperimentConfig load(const char* name) {
  return parse_config(load_config_document(std::string(QLDP_CONFIG_DIR) + "/" + name));
}

struct Model {
  std::unique_ptr<CoefficientSet> coeffs;
  InvariantDensity density;
  std::shared_ptr<const GradientField> xi;
  std::shared_ptr<const EffectiveCoefficients> eff;
};

Model homogenized(const MediumParams& medium, std::uint64_t seed, int n_grid = 4096) {
  Model m;
  m.coeffs = std::make_unique<CoefficientSet>(sample_medium(medium, seed), medium.coefficients);
  m.density = invariant_density(*m.coeffs, n_grid);
  m.coeffs->set_drift_offset(drift_mean(*m.coeffs, m.density));
  const auto field = build_corrector(*m.coeffs, default_rho_schedule(), n_grid);
  m.xi = std::make_shared<const GradientField>(field.xi());
  m.eff = std::make_shared<const EffectiveCoefficients>(compute_effective(*m.coeffs, m.density, *m.xi));
  return m;
}

EstimationSetup setup_from(const ExperimentConfig& cfg, const EventSpec& event) {
  EstimationSetup s;
  s.x0 = cfg.x0;
  s.y0 = cfg.y0;
  s.T = cfg.T;
  s.event = event;
  s.delta_exponent = cfg.delta_exponent;
  s.step_factor = cfg.step_factor;
  s.seed = cfg.seed;
  return s;
}

Outcome corrector_oracle() {
  const auto p = params(sine_spec());
  auto sample = sample_medium(p, 0);
  sample.shift.assign(1, 0.0);
  const CoefficientSet coeffs(sample, p.coefficients);
  const double rho = 1e-3;
  const auto s = solve_cell_problem_grid(coeffs, rho, 4096);
  double chi_err = 0.0, y = 0.0;
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    s.grid.point(i, &y);
    chi_err = std::max(chi_err, std::fabs(s.chi(static_cast<Eigen::Index>(i), 0) - sine_chi(y, rho)));
  }
  const auto field = build_corrector(coeffs, default_rho_schedule(), 4096);
  double xi_err = 0.0;
  for (std::size_t i = 0; i < field.grid.size(); ++i) {
    field.grid.point(i, &y);
    xi_err = std::max(xi_err, std::fabs(field.xi().data()(static_cast<Eigen::Index>(i), 0) - sine_xi(y)));
  }
  return {chi_err <= 1e-5 && xi_err <= 1e-6,
          "chi sup-error " + fmt(chi_err) + " (<= 1e-5), xi sup-error " + fmt(xi_err) + " (<= 1e-6)"};
}

Outcome effective_oracle() {
  const double c0 = 0.7, s0 = 1.3;
  const auto cst = homogenized(params(constant_spec(c0, s0)), 0, 256);
  const double r_err = std::fabs(cst.eff->r(v1(0.0))(0) - c0);
  const double q_err = std::fabs(cst.eff->q(v1(0.0))(0, 0) - s0 * s0);
  const auto sine = homogenized(params(sine_spec()), 0);
  const double oracle = periodic_mean([](double y) { return std::pow(1.0 + std::sqrt(2.0) * sine_xi(y), 2); }, 1 << 16);
  const double sine_err = std::fabs(sine.eff->q(v1(0.0))(0, 0) - oracle);
  return {r_err <= 1e-12 && q_err <= 1e-12 && sine_err <= 1e-6,
          "constant |r-c0| " + fmt(r_err) + ", |q-s0^2| " + fmt(q_err) + " (<= 1e-12); sine |q-oracle| " +
              fmt(sine_err) + " (<= 1e-6)"};
}

Outcome drift_lln() {
  auto spec = sine_spec();
  spec.c.add(0, 0, FourierTerm{0.5, {-0.5}, {}, 0.0});
  spec.c.add(0, 0, cos_term(0.3, 1));
  const auto m = homogenized(params(spec, Family::RandomPhaseFourier), 4);
  const auto scale = ScaleParams::make(0.01, 1.5, 0.1);
  const std::size_t steps = step_count(scale, 1.0);
  const auto runs = simulate_ensemble(*m.coeffs, scale, v1(0.0), v1(0.0), 1.0, ControlPolicy::zero(1, 1), 1000, 31,
                                      steps / 100);
  const auto ode = drift_path(v1(0.0), 1.0, *m.eff, 400);
  const auto check = viability_drift_check(runs, [&](double t) { return ode.at(t); });
  return {check.sup_gap <= 0.05,
          "eps 0.01, 1000 replicas: sup |mean X - ode| " + fmt(check.sup_gap) + " (<= 0.05), se " + fmt(check.se_at_sup)};
}

Outcome quenched_ergodic() {
  // flat medium: f = 0, so pi is uniform and the target is 0
  const auto p = params(sine_spec(), Family::RandomPhaseFourier);
  std::vector<CoefficientSet> coeffs;
  std::vector<InvariantDensity> dens;
  for (std::uint64_t k = 0; k < 5; ++k) {
    coeffs.emplace_back(sample_medium(p, 4 + k), p.coefficients);
    dens.push_back(invariant_density(coeffs.back(), 1024));
  }
  std::vector<ErgodicMedium> media;
  for (std::size_t k = 0; k < coeffs.size(); ++k) media.push_back({&coeffs[k], &dens[k]});
  ErgodicOptions opts;
  for (int i = 0; i < 8; ++i) opts.t_shifts.push_back(i / 8.0);
  opts.x0 = v1(0.0);
  opts.y0 = v1(0.0);
  opts.seed = 21;
  const auto obs = [](const double* y) { return std::cos(2 * kPi * y[0]); };

  std::vector<double> dev, se;
  double worst = 0.0;
  for (double eps : {0.1, 0.03, 0.01}) {
    const auto rep = ergodic_average(media, ScaleParams::make(eps, 1.5, 0.01), obs, opts);
    dev.push_back(rep.mean_abs_deviation);
    se.push_back(rep.mean_abs_deviation_se);
    worst = rep.max_abs_deviation;
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < dev.size(); ++k)
    if (dev[k] > dev[k - 1] + std::hypot(se[k], se[k - 1])) decreasing = false;
  std::ostringstream d;
  d << "eps 0.01: max |avg| over 8 shifts x 5 media " << fmt(worst) << " (<= 0.05); mean |dev| along eps "
    << fmt(dev[0]) << " > " << fmt(dev[1]) << " > " << fmt(dev[2]) << " (within 1 SE per step)";
  return {worst <= 0.05 && decreasing, d.str()};
}

Outcome girsanov() {
  const auto cfg = load("sine.json");
  const auto m = homogenized(cfg.medium, cfg.medium_seed);
  const auto event = EventSpec::half_space(v1(1.0), 1.0);
  const auto opt = minimize_action(cfg.x0, event, cfg.T, *m.eff, cfg.n_seg);
  const auto policy = build_is_control(opt.path, m.eff, m.xi, 1, 1);
  const auto setup = setup_from(cfg, event);
  const auto is = estimate_probability_at(*m.coeffs, setup, 0.2, 10000, SamplingMode::ImportanceSampling, &policy);
  const auto plain = estimate_probability_at(*m.coeffs, setup, 0.2, 10000, SamplingMode::Plain);
  const auto& e = is.estimate;
  const double w_dev = std::fabs(e.mean_weight - 1.0);
  const double gap = std::fabs(e.p_hat - plain.estimate.p_hat);
  const double se = std::hypot(e.std_err, plain.estimate.std_err);
  return {w_dev <= 3.0 * e.mean_weight_se && gap <= 3.0 * se,
          "mean weight " + fmt(e.mean_weight) + " +- " + fmt(e.mean_weight_se) + " (within 3 SE of 1); IS " +
              fmt(e.p_hat) + " vs plain " + fmt(plain.estimate.p_hat) + ", gap " + fmt(gap) + " (<= 3 x " + fmt(se) +
              ")"};
}

Outcome schilder() {
  const auto cfg = load("schilder.json");
  const auto m = homogenized(cfg.medium, cfg.medium_seed, 256);
  const double a = cfg.event.level, T = cfg.T;
  const auto opt = minimize_action(cfg.x0, cfg.event, T, *m.eff, cfg.n_seg);
  const auto policy = build_is_control(opt.path, m.eff, m.xi, m.coeffs->k1(), m.coeffs->k2());
  const std::vector<double> eps{0.2, 0.1, 0.05};
  const auto runs = estimate_probability(*m.coeffs, setup_from(cfg, cfg.event), eps, 10000,
                                         SamplingMode::ImportanceSampling, &policy);
  std::vector<RareEventEstimate> est;
  for (const auto& r : runs) est.push_back(r.estimate);
  const auto report = ldp_scaling_report(est, a * a / (2 * T));
  const auto& last = est.back();
  const double exact = gaussian_upper_tail(a, last.eps * T);
  const double err = std::fabs(last.p_hat - exact);
  std::ostringstream d;
  d << "eps 0.05: p_hat " << fmt(last.p_hat) << " vs " << fmt(exact) << ", |err| " << fmt(err) << " (<= 3 x "
    << fmt(last.std_err) << "), rel err " << fmt(last.relative_error) << " (<= 0.05); gaps";
  for (const auto& row : report.rows) d << " " << fmt(row.gap);
  d << (report.gaps_decreasing ? " strictly decreasing" : " NOT decreasing");
  return {err <= 3.0 * last.std_err && last.relative_error <= 0.05 && report.gaps_decreasing, d.str()};
}

Outcome multiscale_scaling() {
  const auto cfg = load("sine.json");
  const auto m = homogenized(cfg.medium, cfg.medium_seed);
  const auto opt = minimize_action(cfg.x0, cfg.event, cfg.T, *m.eff, cfg.n_seg);
  const double s_star = opt.value;
  const auto policy = build_is_control(opt.path, m.eff, m.xi, 1, 1);
  const auto setup = setup_from(cfg, cfg.event);

  const auto small = estimate_probability_at(*m.coeffs, setup, 0.05, 10000, SamplingMode::ImportanceSampling, &policy);
  const double rel_gap = std::fabs(small.estimate.minus_eps_log - s_star) / s_star;

  // equal budget: compare relative error per sqrt(sample), i.e. at equal replica count
  const std::size_t n_is = 10000, n_plain = 100000;
  const auto is = estimate_probability_at(*m.coeffs, setup, 0.2, n_is, SamplingMode::ImportanceSampling, &policy);
  const auto plain = estimate_probability_at(*m.coeffs, setup, 0.2, n_plain, SamplingMode::Plain);
  const double re_is = is.estimate.relative_error * std::sqrt(static_cast<double>(n_is));
  const double re_plain = plain.estimate.relative_error * std::sqrt(static_cast<double>(n_plain));
  const double ratio = re_is / re_plain;
  std::ostringstream d;
  d << "level " << fmt(cfg.event.level) << ": S* " << fmt(s_star) << ", -eps log p_hat(0.05) "
    << fmt(small.estimate.minus_eps_log) << ", rel gap " << fmt(rel_gap) << " (<= 0.2); eps 0.2 per-sample rel err IS "
    << fmt(re_is) << " vs plain " << fmt(re_plain) << " (" << plain.estimate.hits << " plain hits), ratio "
    << fmt(ratio) << " (<= 0.2)";
  return {rel_gap <= 0.2 && ratio <= 0.2 && plain.estimate.hits >= 10, d.str()};
}

Outcome occupation() {
  const auto cfg = load("sine.json");
  const auto m = homogenized(cfg.medium, cfg.medium_seed);
  const auto opt = minimize_action(cfg.x0, cfg.event, cfg.T, *m.eff, cfg.n_seg);
  const auto policy = build_is_control(opt.path, m.eff, m.xi, 1, 1);
  const auto scale = ScaleParams::make(0.01, cfg.delta_exponent, cfg.step_factor);
  const double window = occupation_window(scale);
  OccupationBins bins;
  OccupationHistogram hist;
  for (std::uint64_t r = 0; r < 4; ++r) {
    const auto run = simulate_occupation_run(*m.coeffs, scale, cfg.x0, cfg.y0, cfg.T, window, policy, cfg.seed, r);
    const auto h = build_occupation(run, scale, cfg.T, window, bins);
    if (r == 0) hist = h;
    else hist.merge(h);
  }
  const double tv = total_variation(hist.y_marginal(), m.density.bin_masses(bins.y_bins));
  const auto tm = hist.time_marginal();
  double lebesgue_err = 0.0;
  for (int b = 0; b < bins.t_bins; ++b)
    lebesgue_err = std::max(lebesgue_err, std::fabs(tm[b] / 4.0 - (hist.t_edges[b + 1] - hist.t_edges[b])));
  return {tv <= 0.05 && lebesgue_err <= 1e-12,
          "eps 0.01 controlled: y-marginal TV " + fmt(tv) + " (<= 0.05); time-marginal error " + fmt(lebesgue_err) +
              " (<= 1e-12)"};
}

Outcome action_checks() {
  const EffectiveCoefficients eff(Vec::Constant(1, 0.2), Mat::Constant(1, 1, -0.5), Mat::Constant(1, 1, 1.0),
                                  {Mat::Constant(1, 1, 0.3)}, {{Mat::Constant(1, 1, 0.2)}});
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  DiscretePath path = DiscretePath::straight(v1(0.0), v1(1.0), 1.0, 16);
  for (int k = 1; k <= 16; ++k) path.knots(k, 0) += 0.2 * n01(rng);
  const auto value = path_action(path, eff, true);
  double grad_err = 0.0;
  for (int k = 0; k <= 16; ++k) {
    DiscretePath up = path, down = path;
    up.knots(k, 0) += 1e-6;
    down.knots(k, 0) -= 1e-6;
    const double fd = (path_action(up, eff).total - path_action(down, eff).total) / 2e-6;
    grad_err = std::max(grad_err, std::fabs(fd - value.gradient(k, 0)) / std::max(1.0, std::fabs(fd)));
  }

  Mat q(2, 2);
  q << 1.5, 0.3, 0.3, 0.8;
  Vec r(2), x0(2), x1(2);
  r << 0.4, -0.1;
  x0 << 0.0, 1.0;
  x1 << 1.0, -0.5;
  const auto cst = EffectiveCoefficients::constant(r, q);
  const double T = 2.0;
  const Vec w = (x1 - x0) / T - r;
  const double exact = 0.5 * T * w.dot(q.inverse() * w);
  const auto res = minimize_action(x0, EventSpec::fixed_endpoint(x1), T, cst, 16);
  const double value_err = std::fabs(res.value - exact);
  const double line_err = (res.path.knots - DiscretePath::straight(x0, x1, T, 16).knots).cwiseAbs().maxCoeff();
  return {grad_err <= 1e-6 && value_err <= 1e-8 && line_err <= 1e-6,
          "gradient rel err " + fmt(grad_err) + " (<= 1e-6); fixed-endpoint value err " + fmt(value_err) +
              " (<= 1e-8), distance to straight line " + fmt(line_err)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    Outcome (*fn)();
  };
  const Criterion criteria[] = {
      {1, "corrector analytic oracle", 1.0, corrector_oracle},
      {2, "effective coefficients", 1.0, effective_oracle},
      {3, "LLN / averaged drift", 120.0, drift_lln},
      {4, "quenched ergodic averages", 120.0, quenched_ergodic},
      {5, "Girsanov sanity", 60.0, girsanov},
      {6, "Schilder end-to-end", 120.0, schilder},
      {7, "multiscale LDP scaling", 600.0, multiscale_scaling},
      {8, "occupation measure", 120.0, occupation},
      {9, "action module", 1.0, action_checks},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = out.pass && secs < c.limit_seconds;
    if (!pass) ++failures;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << "  " << c.name << ": " << out.detail
              << "; runtime " << fmt(secs) << " s (< " << fmt(c.limit_seconds) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
