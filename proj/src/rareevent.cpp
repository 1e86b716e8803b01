#include "qldp/rareevent.hpp"

#include "qldp/parallel.hpp"
#include "qldp/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace qldp {

PathTrackingLaw::PathTrackingLaw(DiscretePath psi, std::shared_ptr<const EffectiveCoefficients> eff,
                                 std::shared_ptr<const GradientField> gradient)
    : psi_(std::move(psi)), eff_(std::move(eff)), gradient_(std::move(gradient)) {
  require(eff_ != nullptr && gradient_ != nullptr, "tracking law needs effective coefficients and a corrector");
  require(psi_.dim() == eff_->dim(), "reference path dimension mismatch");
  if (!eff_->q_depends_on_x()) {
    const Vec origin = Vec::Zero(eff_->dim());
    const auto llt = eff_->q_factor(origin);
    q_inverse_ = llt.solve(Mat::Identity(eff_->dim(), eff_->dim()));
  }
}

Vec PathTrackingLaw::tracking_direction(double t, const Vec& x) const {
  const Vec w = psi_.velocity_at(t) - eff_->r(x);
  if (q_inverse_.size() > 0) return q_inverse_ * w;
  return eff_->q_factor(x).solve(w);
}

void PathTrackingLaw::evaluate(double t, const double* x, const double* y, const CoefficientValues& values,
                               double* u1, double* u2) const {
  const int m = eff_->dim();
  const Vec xv = Eigen::Map<const Vec>(x, m);
  const Vec w = tracking_direction(t, xv);
  Mat G(m, gradient_->fast_dim());
  gradient_->at(y, G);
  const Eigen::Index k1 = values.sigma.cols();
  const Eigen::Index k2 = values.tau2.cols();
  Eigen::Map<Vec>(u1, k1) = (values.sigma + G * values.tau1).transpose() * w;
  Eigen::Map<Vec>(u2, k2) = (G * values.tau2).transpose() * w;
}

ControlPolicy build_is_control(const DiscretePath& psi_star, std::shared_ptr<const EffectiveCoefficients> eff,
                               std::shared_ptr<const GradientField> gradient, int k1, int k2) {
  return ControlPolicy::tracking(k1, k2,
                                 std::make_shared<PathTrackingLaw>(psi_star, std::move(eff), std::move(gradient)));
}

WeightSummary summarize_weights(std::span<const double> log_weights, std::span<const char> hits) {
  require(log_weights.size() == hits.size(), "weights and indicators differ in length");
  WeightSummary s;
  const auto n = log_weights.size();
  s.max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (!hits[i]) continue;
    ++s.hits;
    s.max_log = std::max(s.max_log, log_weights[i]);
  }
  if (s.hits == 0 || n == 0) {
    s.log_mean = -std::numeric_limits<double>::infinity();
    s.relative_error = std::numeric_limits<double>::infinity();
    return s;
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!hits[i]) continue;
    const double z = log_weights[i] - s.max_log;
    sum += std::exp(z);
    sum_sq += std::exp(2.0 * z);
  }
  const double log_n = std::log(static_cast<double>(n));
  const double log_sum = s.max_log + std::log(sum);
  s.log_mean = log_sum - log_n;
  s.mean = std::exp(s.log_mean);
  // second moment over first moment squared, both relative to max_log
  const double ratio = static_cast<double>(n) * sum_sq / (sum * sum);
  const double rel_var = n > 1 ? std::max(0.0, ratio - 1.0) / static_cast<double>(n - 1) : 0.0;
  s.relative_error = std::sqrt(rel_var);
  s.std_err = s.mean * s.relative_error;
  s.effective_sample_size = sum * sum / sum_sq;
  return s;
}

EstimationRun estimate_probability_at(const CoefficientSet& coeffs, const EstimationSetup& setup, double eps,
                                      std::size_t n_replicas, SamplingMode mode, const ControlPolicy* policy) {
  require(n_replicas >= 2, "need at least two replicas");
  require(setup.event.kind != EventSpec::Kind::FixedEndpoint, "fixed-endpoint events have probability zero");
  const auto scale = ScaleParams::make(eps, setup.delta_exponent, setup.step_factor);
  ControlPolicy zero = ControlPolicy::zero(coeffs.k1(), coeffs.k2());
  const ControlPolicy* active = &zero;
  if (mode == SamplingMode::ImportanceSampling) {
    require(policy != nullptr, "importance sampling requires a control policy");
    active = policy;
  }

  EstimationRun run;
  run.log_weights.assign(n_replicas, 0.0);
  run.hits.assign(n_replicas, 0);
  std::vector<char> capped(n_replicas, 0);
  IntegrationOptions options;
  options.record_stride = 0;
  options.control_cost_cap = setup.control_cost_cap;
  const std::uint64_t seed =
      mix64(setup.seed ^ mix64(std::bit_cast<std::uint64_t>(eps)) ^ (mode == SamplingMode::Plain ? 0x5bd1e995ULL : 0ULL));

  parallel_for(n_replicas, [&](std::size_t i) {
    const auto res = integrate_controlled(coeffs, scale, setup.x0, setup.y0, setup.T, *active, seed, i, options);
    run.log_weights[i] = res.log_weight;
    run.hits[i] = setup.event.contains(res.path.x_final()) ? 1 : 0;
    capped[i] = res.cost_cap_exceeded ? 1 : 0;
  });

  RareEventEstimate& est = run.estimate;
  est.mode = mode;
  est.eps = eps;
  est.n_replicas = n_replicas;
  est.cost_cap_exceeded = static_cast<std::size_t>(std::count(capped.begin(), capped.end(), 1));

  const std::vector<char> all(n_replicas, 1);
  const auto weights = summarize_weights(run.log_weights, all);
  est.mean_weight = weights.mean;
  est.mean_weight_se = weights.std_err;

  const auto s = summarize_weights(run.log_weights, run.hits);
  est.hits = s.hits;
  est.max_log_weight = s.max_log;
  est.effective_sample_size = s.effective_sample_size;
  if (setup.event.kind == EventSpec::Kind::WholeSpace) {
    est.p_hat = 1.0;
    est.log_p_hat = 0.0;
    est.std_err = 0.0;
    est.relative_error = 0.0;
  } else {
    est.log_p_hat = std::min(0.0, s.log_mean);
    est.p_hat = std::exp(est.log_p_hat);
    est.relative_error = s.relative_error;
    est.std_err = s.std_err;
  }
  est.minus_eps_log = -eps * est.log_p_hat;
  est.degenerate = est.effective_sample_size < static_cast<double>(setup.min_effective_sample_size);
  return run;
}

std::vector<EstimationRun> estimate_probability(const CoefficientSet& coeffs, const EstimationSetup& setup,
                                                std::span<const double> eps_list, std::size_t n_replicas,
                                                SamplingMode mode, const ControlPolicy* policy) {
  std::vector<EstimationRun> out;
  out.reserve(eps_list.size());
  for (double eps : eps_list) out.push_back(estimate_probability_at(coeffs, setup, eps, n_replicas, mode, policy));
  return out;
}

ScalingReport ldp_scaling_report(std::span<const RareEventEstimate> estimates, double s_star) {
  require(estimates.size() >= 3, "scaling report needs at least three epsilon values");
  ScalingReport report;
  report.s_star = s_star;
  for (const auto& e : estimates) report.rows.push_back({e.eps, e.minus_eps_log, e.minus_eps_log - s_star});
  std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) { return a.eps > b.eps; });
  report.gaps_decreasing = true;
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    if (!(std::fabs(report.rows[i].gap) < std::fabs(report.rows[i - 1].gap))) report.gaps_decreasing = false;
  return report;
}

}  // namespace qldp
