#pragma once

#include "qldp/action.hpp"
#include "qldp/corrector.hpp"
#include "qldp/dynamics.hpp"
#include "qldp/effective.hpp"

#include <memory>
#include <span>
#include <vector>

namespace qldp {

/// u1 = (sigma + G tau1)^T q^{-1}(x) (psi'(t) - r(x)), u2 = (G tau2)^T q^{-1}(x) (psi'(t) - r(x)),
/// with G the corrector gradient (xi, or D chi_rho for a fixed rho) at y.
class PathTrackingLaw final : public FeedbackLaw {
 public:
  PathTrackingLaw(DiscretePath psi, std::shared_ptr<const EffectiveCoefficients> eff,
                  std::shared_ptr<const GradientField> gradient);

  void evaluate(double t, const double* x, const double* y, const CoefficientValues& values, double* u1,
                double* u2) const override;

  /// q^{-1}(x) (psi'(t) - r(x)).
  Vec tracking_direction(double t, const Vec& x) const;

 private:
  DiscretePath psi_;
  std::shared_ptr<const EffectiveCoefficients> eff_;
  std::shared_ptr<const GradientField> gradient_;
  Mat q_inverse_;  ///< cached when q does not depend on x
};

ControlPolicy build_is_control(const DiscretePath& psi_star, std::shared_ptr<const EffectiveCoefficients> eff,
                               std::shared_ptr<const GradientField> gradient, int k1, int k2);

enum class SamplingMode { Plain, ImportanceSampling };

struct RareEventEstimate {
  SamplingMode mode = SamplingMode::Plain;
  double eps = 0.0;
  double p_hat = 0.0;
  double log_p_hat = 0.0;
  double std_err = 0.0;
  double relative_error = 0.0;
  std::size_t n_replicas = 0;
  std::size_t hits = 0;
  double minus_eps_log = 0.0;
  double max_log_weight = 0.0;
  double effective_sample_size = 0.0;
  bool degenerate = false;
  double mean_weight = 1.0;
  double mean_weight_se = 0.0;
  std::size_t cost_cap_exceeded = 0;
};

/// Log-space statistics of weights w_i = 1{hit_i} exp(log_w_i) averaged over
/// all n entries.
struct WeightSummary {
  double log_mean = 0.0;
  double mean = 0.0;
  double std_err = 0.0;
  double relative_error = 0.0;
  double effective_sample_size = 0.0;
  double max_log = 0.0;
  std::size_t hits = 0;
};
WeightSummary summarize_weights(std::span<const double> log_weights, std::span<const char> hits);

struct EstimationSetup {
  Vec x0;
  Vec y0;
  double T = 1.0;
  EventSpec event;
  double delta_exponent = 1.5;
  double step_factor = 0.1;
  std::uint64_t seed = 0;
  double control_cost_cap = std::numeric_limits<double>::infinity();
  std::size_t min_effective_sample_size = 10;
};

struct EstimationRun {
  RareEventEstimate estimate;
  std::vector<double> log_weights;
  std::vector<char> hits;
};

/// One epsilon. Importance sampling runs the controlled dynamics and weights
/// each hit by the Girsanov factor; plain mode averages raw indicators.
EstimationRun estimate_probability_at(const CoefficientSet& coeffs, const EstimationSetup& setup, double eps,
                                      std::size_t n_replicas, SamplingMode mode,
                                      const ControlPolicy* policy = nullptr);

std::vector<EstimationRun> estimate_probability(const CoefficientSet& coeffs, const EstimationSetup& setup,
                                                std::span<const double> eps_list, std::size_t n_replicas,
                                                SamplingMode mode, const ControlPolicy* policy = nullptr);

struct ScalingRow {
  double eps = 0.0;
  double minus_eps_log = 0.0;
  double gap = 0.0;
};

struct ScalingReport {
  double s_star = 0.0;
  std::vector<ScalingRow> rows;  ///< sorted by decreasing eps
  bool gaps_decreasing = false;  ///< |gap| strictly decreases as eps decreases
};

ScalingReport ldp_scaling_report(std::span<const RareEventEstimate> estimates, double s_star);

}  // namespace qldp
