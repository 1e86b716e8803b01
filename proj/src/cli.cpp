#include "qldp/cli.hpp"

#include "qldp/io.hpp"
#include "qldp/rng.hpp"
#include "qldp/torus_grid.hpp"

#include <Eigen/Core>

#include <cmath>
#include <fstream>
#include <memory>
#include <ostream>

namespace qldp {

namespace fs = std::filesystem;
using nlohmann::json;

json apply_overrides(json doc, const Overrides& o) {
  if (!doc.is_object()) return doc;
  if (o.experiment) doc["experiment"] = *o.experiment;
  if (o.eps) {
    if (!doc.contains("scales") || !doc["scales"].is_object()) doc["scales"] = json::object();
    doc["scales"]["eps"] = *o.eps;
  }
  if (o.seed) doc["seed"] = *o.seed;
  if (o.replicas) doc["replicas"] = *o.replicas;
  if (o.output_dir) doc["output"] = *o.output_dir;
  auto section = [&](const char* name) -> json& {
    if (!doc.contains(name) || !doc[name].is_object()) doc[name] = json::object();
    return doc[name];
  };
  if (o.corrector_method) section("corrector")["method"] = *o.corrector_method;
  if (o.rho) section("corrector")["rho"] = *o.rho;
  if (o.no_extrapolation) section("corrector")["extrapolate"] = false;
  if (o.mode) section("estimate")["mode"] = *o.mode;
  return doc;
}

namespace {

constexpr const char* kVersion = "0.1.0";

struct Environment {
  std::unique_ptr<CoefficientSet> coeffs;
  InvariantDensity density;
  int n_grid = 0;
};

struct Homogenized {
  CorrectorField field;
  std::shared_ptr<const GradientField> gradient;
  std::shared_ptr<const EffectiveCoefficients> eff;
};

int default_grid(const ExperimentConfig& cfg) {
  if (cfg.corrector.n_grid > 0) return cfg.corrector.n_grid;
  return cfg.medium.coefficients.fast_dim == 1 ? 4096 : 256;
}

std::vector<double> vec_to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Environment build_environment(const ExperimentConfig& cfg, std::uint64_t medium_seed) {
  Environment env;
  env.coeffs = std::make_unique<CoefficientSet>(sample_medium(cfg.medium, medium_seed), cfg.medium.coefficients);
  env.n_grid = default_grid(cfg);
  env.density = invariant_density(*env.coeffs, env.n_grid);
  env.coeffs->set_drift_offset(drift_mean(*env.coeffs, env.density));
  return env;
}

class Runner {
 public:
  Runner(ExperimentConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log), out_(cfg_.output_dir) {}

  void run() {
    fs::create_directories(out_);
    write_manifest();
    env_ = build_environment(cfg_, cfg_.medium_seed);
    switch (cfg_.experiment) {
      case ExperimentType::Homogenize: homogenize(); break;
      case ExperimentType::Rate: homogenize(); rate(); break;
      case ExperimentType::Estimate:
      case ExperimentType::FullPipeline:
        homogenize();
        rate();
        estimate();
        break;
      case ExperimentType::Ergodic: ergodic(); break;
      case ExperimentType::Occupation:
        homogenize();
        if (cfg_.event.kind != EventSpec::Kind::WholeSpace) rate();
        occupation();
        break;
    }
    log_ << "wrote artifacts to " << out_.string() << '\n';
  }

  const fs::path& out() const { return out_; }

 private:
  void write_manifest() {
    // the output location does not affect results
    json hashed = cfg_.source;
    hashed.erase("output");
    const std::string canonical = hashed.dump();
    json manifest{{"manifest_version", 1},
                  {"tool", "quench-ldp"},
                  {"version", kVersion},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"config_hash", fnv1a_hex(canonical)},
                  {"seed", cfg_.seed},
                  {"experiment", to_string(cfg_.experiment)},
                  {"config", cfg_.source}};
    write_json(out_ / "run_manifest.json", manifest);
  }

  void homogenize() {
    const auto& cc = cfg_.corrector;
    const auto& coeffs = *env_.coeffs;
    auto schedule = cc.rho_schedule.empty() ? default_rho_schedule() : cc.rho_schedule;
    CellSolveOptions options;
    options.relative_tolerance = cc.tolerance;
    hom_.field = build_corrector(coeffs, schedule, env_.n_grid, options, cc.model_tolerance);

    EffectiveCoefficients::Provenance prov;
    prov.rho_schedule = schedule;
    prov.n_grid = env_.n_grid;
    std::string gradient_kind = "extrapolated";
    if (cc.fixed_rho) {
      const auto sol = solve_cell_problem_grid(coeffs, *cc.fixed_rho, env_.n_grid, options);
      hom_.gradient = std::make_shared<GradientField>(sol.dchi);
      prov.rho_schedule = {*cc.fixed_rho};
      prov.extrapolated = false;
      gradient_kind = "fixed_rho";
    } else if (!cc.extrapolate) {
      hom_.gradient = std::make_shared<GradientField>(hom_.field.smallest_rho_gradient());
      prov.extrapolated = false;
      gradient_kind = "smallest_rho";
    } else {
      hom_.gradient = std::make_shared<GradientField>(hom_.field.xi());
    }
    auto eff = compute_effective(coeffs, env_.density, *hom_.gradient);
    eff.provenance = prov;
    hom_.eff = std::make_shared<EffectiveCoefficients>(std::move(eff));

    const int m = coeffs.slow_dim();
    std::vector<std::string> header;
    for (int i = 0; i < m; ++i) header.push_back("x" + std::to_string(i));
    for (int i = 0; i < m; ++i) header.push_back("r" + std::to_string(i));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) header.push_back("q" + std::to_string(i) + std::to_string(j));
    std::vector<std::vector<double>> rows;
    const int points = cfg_.x_grid.points;
    for (int p = 0; p < points; ++p) {
      const double s = points == 1 ? 0.0 : static_cast<double>(p) / (points - 1);
      const Vec x = cfg_.x_grid.lower + s * (cfg_.x_grid.upper - cfg_.x_grid.lower);
      const Vec r = hom_.eff->r(x);
      const Mat q = hom_.eff->q(x);
      std::vector<double> row = vec_to_std(x);
      for (int i = 0; i < m; ++i) row.push_back(r(i));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) row.push_back(q(i, j));
      rows.push_back(std::move(row));
    }
    write_csv(out_ / "effective.csv", header, rows);

    json meta{{"fast_dim", coeffs.fast_dim()},
              {"slow_dim", m},
              {"n_grid", env_.n_grid},
              {"gradient", gradient_kind},
              {"layout", "row = grid node (i + n j); columns = d chi_l / d y_k at l * fast_dim + k"}};
    write_binary_dump(out_ / "corrector_gradient", hom_.gradient->data(), meta);

    const auto& ex = hom_.field.extrapolation;
    json report{{"drift_offset", vec_to_std(hom_.field.drift_offset)},
                {"rho_schedule", schedule},
                {"cell_residuals", hom_.field.residual_norms},
                {"extrapolation_max_residual", ex.max_residual},
                {"extrapolation_converged", ex.converged},
                {"gradient", gradient_kind},
                {"n_grid", env_.n_grid},
                {"density_closed_form", env_.density.closed_form},
                {"r_at_x0", vec_to_std(hom_.eff->r(cfg_.x0))},
                {"q_at_x0", matrix_json(hom_.eff->q(cfg_.x0))}};
    if (!ex.converged) log_ << "warning: corrector extrapolation residual " << ex.max_residual << " above tolerance\n";
    if (cc.method == CorrectorMethod::MonteCarlo) report["monte_carlo"] = corrector_mc();
    write_json(out_ / "homogenize.json", report);
  }

  json corrector_mc() {
    const auto& cc = cfg_.corrector;
    const auto& coeffs = *env_.coeffs;
    const int n = coeffs.fast_dim();
    const int m = coeffs.slow_dim();
    Mat points(static_cast<Eigen::Index>(cc.mc_points), n);
    GaussianSource rng(make_stream(cfg_.seed, StreamTag::Resolvent, 1u << 20));
    for (Eigen::Index p = 0; p < points.rows(); ++p)
      for (int d = 0; d < n; ++d) points(p, d) = rng.uniform();
    const auto mc = solve_cell_problem_mc(coeffs, cc.mc_rho, points, cc.mc_paths, 10.0 / cc.mc_rho, cfg_.seed, cc.mc_dt);
    CellSolveOptions options;
    options.relative_tolerance = cc.tolerance;
    const auto grid = solve_cell_problem_grid(coeffs, cc.mc_rho, env_.n_grid, options);

    std::vector<std::string> header;
    for (int d = 0; d < n; ++d) header.push_back("y" + std::to_string(d));
    for (int l = 0; l < m; ++l) {
      header.push_back("chi_mc" + std::to_string(l));
      header.push_back("se" + std::to_string(l));
      header.push_back("chi_grid" + std::to_string(l));
    }
    std::vector<std::vector<double>> rows;
    double max_z = 0.0;
    for (Eigen::Index p = 0; p < points.rows(); ++p) {
      std::vector<double> row;
      for (int d = 0; d < n; ++d) row.push_back(points(p, d));
      const Vec y = points.row(p).transpose();
      const auto st = grid.grid.stencil(y.data());
      for (int l = 0; l < m; ++l) {
        double g = 0.0;
        for (int s = 0; s < st.count; ++s) g += st.weight[static_cast<std::size_t>(s)] * grid.chi(static_cast<Eigen::Index>(st.index[static_cast<std::size_t>(s)]), l);
        row.push_back(mc.value(p, l));
        row.push_back(mc.std_err(p, l));
        row.push_back(g);
        if (mc.std_err(p, l) > 0.0) max_z = std::max(max_z, std::fabs(mc.value(p, l) - g) / mc.std_err(p, l));
      }
      rows.push_back(std::move(row));
    }
    write_csv(out_ / "corrector_mc.csv", header, rows);
    return json{{"rho", cc.mc_rho},
                {"paths", cc.mc_paths},
                {"max_z_score", max_z},
                {"truncation_bias_bound", mc.truncation_bias_bound},
                {"truncation_flag", mc.truncation_flag}};
  }

  void rate() {
    require(cfg_.event.kind != EventSpec::Kind::WholeSpace || cfg_.experiment == ExperimentType::Occupation,
            "rate needs an event");
    auto res = minimize_action(cfg_.x0, cfg_.event, cfg_.T, *hom_.eff, cfg_.n_seg);
    psi_ = res.path;
    s_star_ = res.value;
    const int m = psi_.dim();
    std::vector<std::string> header{"t"};
    for (int i = 0; i < m; ++i) header.push_back("psi" + std::to_string(i));
    for (int i = 0; i < m; ++i) header.push_back("dpsi" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    for (int k = 0; k <= psi_.segments(); ++k) {
      const double t = k * psi_.dt();
      std::vector<double> row{t};
      const Vec x = psi_.knot(k);
      const Vec v = psi_.velocity(std::min(k, psi_.segments() - 1));
      for (int i = 0; i < m; ++i) row.push_back(x(i));
      for (int i = 0; i < m; ++i) row.push_back(v(i));
      rows.push_back(std::move(row));
    }
    write_csv(out_ / "path.csv", header, rows);
    write_json(out_ / "rate.json", json{{"s_star", res.value},
                                        {"stationarity", res.stationarity},
                                        {"iterations", res.iterations},
                                        {"converged", res.converged},
                                        {"n_seg", cfg_.n_seg},
                                        {"T", cfg_.T}});
    if (!res.converged) log_ << "warning: action minimization did not reach the gradient tolerance\n";
  }

  void estimate() {
    const auto& coeffs = *env_.coeffs;
    EstimationSetup setup;
    setup.x0 = cfg_.x0;
    setup.y0 = cfg_.y0;
    setup.T = cfg_.T;
    setup.event = cfg_.event;
    setup.delta_exponent = cfg_.delta_exponent;
    setup.step_factor = cfg_.step_factor;
    setup.seed = cfg_.seed;
    setup.control_cost_cap = cfg_.control_cost_cap;
    std::optional<ControlPolicy> policy;
    if (cfg_.mode == SamplingMode::ImportanceSampling)
      policy = build_is_control(psi_, hom_.eff, hom_.gradient, coeffs.k1(), coeffs.k2());

    std::vector<RareEventEstimate> estimates;
    std::vector<std::vector<double>> weight_rows;
    json per_eps = json::array();
    for (double eps : cfg_.eps) {
      const auto run =
          estimate_probability_at(coeffs, setup, eps, cfg_.replicas, cfg_.mode, policy ? &*policy : nullptr);
      const auto& e = run.estimate;
      estimates.push_back(e);
      for (std::size_t i = 0; i < run.log_weights.size(); ++i)
        weight_rows.push_back({eps, static_cast<double>(i), run.log_weights[i], static_cast<double>(run.hits[i])});
      per_eps.push_back(json{{"eps", eps},
                             {"p_hat", e.p_hat},
                             {"log_p_hat", e.log_p_hat},
                             {"std_err", e.std_err},
                             {"relative_error", e.relative_error},
                             {"replicas", e.n_replicas},
                             {"hits", e.hits},
                             {"minus_eps_log_p", e.minus_eps_log},
                             {"effective_sample_size", e.effective_sample_size},
                             {"max_log_weight", std::isfinite(e.max_log_weight) ? json(e.max_log_weight) : json()},
                             {"degenerate", e.degenerate},
                             {"mean_weight", e.mean_weight},
                             {"mean_weight_se", e.mean_weight_se},
                             {"cost_cap_exceeded", e.cost_cap_exceeded}});
      log_ << "eps " << eps << ": p_hat " << e.p_hat << " (rel. err. " << e.relative_error << ")\n";
      write_csv(out_ / "log_weights.csv", {"eps", "replica", "log_weight", "hit"}, weight_rows);
    }
    json report{{"mode", cfg_.mode == SamplingMode::Plain ? "plain" : "is"},
                {"s_star", s_star_},
                {"estimates", per_eps}};
    if (estimates.size() >= 3) {
      const auto scaling = ldp_scaling_report(estimates, s_star_);
      json rows = json::array();
      for (const auto& r : scaling.rows)
        rows.push_back(json{{"eps", r.eps}, {"minus_eps_log_p", r.minus_eps_log}, {"gap", r.gap}});
      report["scaling"] = json{{"rows", rows}, {"gaps_decreasing", scaling.gaps_decreasing}};
    }
    write_json(out_ / "estimate.json", report);
  }

  void ergodic() {
    const auto& es = cfg_.ergodic;
    std::vector<Environment> media;
    std::vector<ErgodicMedium> views;
    for (int k = 0; k < es.media; ++k) media.push_back(build_environment(cfg_, cfg_.medium_seed + static_cast<std::uint64_t>(k)));
    for (const auto& env : media) views.push_back({env.coeffs.get(), &env.density});
    const auto observable = make_observable(es.observable);

    ErgodicOptions options;
    options.mode = es.mode;
    options.beta = es.beta;
    options.x0 = cfg_.x0;
    options.y0 = cfg_.y0;
    options.seed = cfg_.seed;
    for (int i = 0; i < es.shifts; ++i) options.t_shifts.push_back(cfg_.T * i / es.shifts);

    json per_eps = json::array();
    std::vector<std::vector<double>> rows;
    for (double eps : cfg_.eps) {
      const auto scale = ScaleParams::make(eps, cfg_.delta_exponent, cfg_.step_factor);
      const auto rep = ergodic_average(views, scale, observable, options);
      per_eps.push_back(json{{"eps", eps},
                             {"window", rep.window},
                             {"window_steps", rep.window_steps},
                             {"targets", rep.targets},
                             {"max_abs_deviation", rep.max_abs_deviation},
                             {"mean_abs_deviation", rep.mean_abs_deviation},
                             {"mean_abs_deviation_se", rep.mean_abs_deviation_se}});
      for (Eigen::Index k = 0; k < rep.averages.rows(); ++k)
        for (Eigen::Index s = 0; s < rep.averages.cols(); ++s)
          rows.push_back({eps, static_cast<double>(k), options.t_shifts[static_cast<std::size_t>(s)], rep.averages(k, s),
                          rep.deviations(k, s)});
    }
    write_csv(out_ / "ergodic_windows.csv", {"eps", "medium", "t_shift", "average", "deviation"}, rows);
    json report{{"mode", es.mode == ErgodicMode::Uncontrolled ? "uncontrolled" : "perturbed"},
                {"beta", es.beta},
                {"per_eps", per_eps}};

    if (es.drift_check) {
      homogenize();
      const double eps = cfg_.eps.back();
      const auto scale = ScaleParams::make(eps, cfg_.delta_exponent, cfg_.step_factor);
      const auto steps = step_count(scale, cfg_.T);
      const std::size_t stride = std::max<std::size_t>(1, steps / 100);
      const auto zero = ControlPolicy::zero(env_.coeffs->k1(), env_.coeffs->k2());
      const auto runs = simulate_ensemble(*env_.coeffs, scale, cfg_.x0, cfg_.y0, cfg_.T, zero, cfg_.replicas,
                                          cfg_.seed, stride);
      const auto ode = drift_path(cfg_.x0, cfg_.T, *hom_.eff, 400);
      const auto check = viability_drift_check(runs, [&](double t) { return ode.at(t); });
      std::vector<std::vector<double>> drows;
      for (std::size_t k = 0; k < check.times.size(); ++k) {
        std::vector<double> row{check.times[k]};
        const Vec ref = ode.at(check.times[k]);
        for (Eigen::Index i = 0; i < check.mean_path.cols(); ++i) row.push_back(check.mean_path(static_cast<Eigen::Index>(k), i));
        for (Eigen::Index i = 0; i < ref.size(); ++i) row.push_back(ref(i));
        drows.push_back(std::move(row));
      }
      std::vector<std::string> header{"t"};
      for (Eigen::Index i = 0; i < check.mean_path.cols(); ++i) header.push_back("mean_x" + std::to_string(i));
      for (Eigen::Index i = 0; i < check.mean_path.cols(); ++i) header.push_back("ode_x" + std::to_string(i));
      write_csv(out_ / "drift_check.csv", header, drows);
      report["drift_check"] = json{{"eps", eps},
                                   {"replicas", cfg_.replicas},
                                   {"sup_gap", check.sup_gap},
                                   {"se_at_sup", check.se_at_sup},
                                   {"t_at_sup", check.t_at_sup}};
    }
    write_json(out_ / "ergodic.json", report);
  }

  void occupation() {
    const auto& coeffs = *env_.coeffs;
    const auto& os = cfg_.occupation;
    std::optional<ControlPolicy> policy;
    if (cfg_.event.kind != EventSpec::Kind::WholeSpace)
      policy = build_is_control(psi_, hom_.eff, hom_.gradient, coeffs.k1(), coeffs.k2());
    else
      policy = ControlPolicy::zero(coeffs.k1(), coeffs.k2());

    json per_eps = json::array();
    std::vector<std::vector<double>> rows;
    for (double eps : cfg_.eps) {
      const auto scale = ScaleParams::make(eps, cfg_.delta_exponent, cfg_.step_factor);
      const double window = occupation_window(scale);
      std::optional<OccupationHistogram> total;
      for (std::size_t r = 0; r < os.runs; ++r) {
        const auto run = simulate_occupation_run(coeffs, scale, cfg_.x0, cfg_.y0, cfg_.T, window, *policy, cfg_.seed, r);
        auto h = build_occupation(run, scale, cfg_.T, window, os.bins);
        if (total) total->merge(h);
        else total = std::move(h);
      }
      const auto y = total->y_marginal();
      const auto pi = env_.density.bin_masses(os.bins.y_bins);
      const double tv = total_variation(y, pi);
      auto time = total->time_marginal();
      for (auto& t : time) t /= static_cast<double>(os.runs);
      double time_error = 0.0;
      for (std::size_t b = 0; b < time.size(); ++b)
        time_error = std::max(time_error, std::fabs(time[b] - (total->t_edges[b + 1] - total->t_edges[b])));
      per_eps.push_back(json{{"eps", eps},
                             {"window", total->window},
                             {"runs", os.runs},
                             {"y_total_variation", tv},
                             {"time_marginal_max_error", time_error},
                             {"overflow_steps", total->overflow_steps}});
      for (std::size_t b = 0; b < y.size(); ++b) {
        const double lo = static_cast<double>(b % static_cast<std::size_t>(os.bins.y_bins)) / os.bins.y_bins;
        rows.push_back({eps, 0.0, static_cast<double>(b), lo, lo + 1.0 / os.bins.y_bins, y[b], b < pi.size() ? pi[b] : 0.0});
      }
      for (std::size_t b = 0; b < time.size(); ++b)
        rows.push_back({eps, 1.0, static_cast<double>(b), total->t_edges[b], total->t_edges[b + 1], time[b],
                        total->t_edges[b + 1] - total->t_edges[b]});
      for (int c = 0; c < total->k1 + total->k2; ++c) {
        const auto u = total->u_marginal(c);
        const double width = 2.0 * os.bins.u_max / os.bins.u_bins;
        for (std::size_t b = 0; b < u.size(); ++b)
          rows.push_back({eps, 2.0 + c, static_cast<double>(b), -os.bins.u_max + width * b,
                          -os.bins.u_max + width * (b + 1), u[b], 0.0});
      }
    }
    write_csv(out_ / "occupation_histograms.csv", {"eps", "marginal", "bin", "lower", "upper", "mass", "reference"},
              rows);
    write_json(out_ / "occupation.json", json{{"marginal_codes", "0 = y, 1 = time, 2+ = control components"},
                                              {"per_eps", per_eps}});
  }

  ExperimentConfig cfg_;
  std::ostream& log_;
  fs::path out_;
  Environment env_;
  Homogenized hom_;
  DiscretePath psi_;
  double s_star_ = 0.0;
};

void mark_failed(const fs::path& out, const std::string& message) {
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream marker(out / "FAILED");
  marker << message << '\n';
}

}  // namespace

int run_document(const json& doc, std::ostream& log) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(doc);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const fs::path out = cfg.output_dir;
  try {
    Runner runner(std::move(cfg), log);
    runner.run();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << '\n';
    mark_failed(out, e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    mark_failed(out, e.what());
    return kExitFailure;
  }
  std::error_code ec;
  fs::remove(out / "FAILED", ec);
  return kExitOk;
}

int run_experiment(const std::string& config_path, const Overrides& overrides, std::ostream& log) {
  json doc;
  try {
    doc = load_config_document(config_path);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return run_document(apply_overrides(std::move(doc), overrides), log);
}

}  // namespace qldp
