#pragma once

#include "qldp/medium.hpp"

#include <cstdint>
#include <limits>
#include <memory>

namespace qldp {

/// Small-noise / homogenization scales with delta = eps^a, a > 1.
struct ScaleParams {
  double epsilon = 0.1;
  double delta_exponent = 1.5;
  double step_factor = 0.1;

  static ScaleParams make(double epsilon, double delta_exponent = 1.5, double step_factor = 0.1);

  double delta() const;
  double eps_over_delta() const;
  /// rho(eps) = delta^2 / eps, which is also the time scale of the fast motion.
  double rho() const;
  double max_step() const { return step_factor * rho(); }
};

/// One simulated trajectory. Rows of X and Y are the recorded (possibly
/// thinned) states; U1/U2 hold per-step controls when requested.
struct PathSample {
  std::vector<double> times;
  Mat X;
  Mat Y;
  std::vector<double> step_times;
  Mat U1;
  Mat U2;
  std::uint64_t replica_id = 0;
  std::uint64_t stream_seed = 0;
  double dt = 0.0;

  Vec x_final() const { return X.row(X.rows() - 1).transpose(); }
};

/// State feedback u = (u1, u2)(t, x, y). Implementations must be thread safe.
class FeedbackLaw {
 public:
  virtual ~FeedbackLaw() = default;
  virtual void evaluate(double t, const double* x, const double* y, const CoefficientValues& values, double* u1,
                        double* u2) const = 0;
};

class ControlPolicy {
 public:
  enum class Mode { Zero, Constant, PathTracking };

  static ControlPolicy zero(int k1, int k2);
  static ControlPolicy constant(const Vec& u1, const Vec& u2);
  static ControlPolicy tracking(int k1, int k2, std::shared_ptr<const FeedbackLaw> law);

  Mode mode() const { return mode_; }
  int k1() const { return static_cast<int>(u1_.size()); }
  int k2() const { return static_cast<int>(u2_.size()); }

  void evaluate(double t, const double* x, const double* y, const CoefficientValues& values, double* u1,
                double* u2) const;

 private:
  Mode mode_ = Mode::Zero;
  Vec u1_, u2_;
  std::shared_ptr<const FeedbackLaw> law_;
};

struct IntegrationOptions {
  /// Keep every stride-th state; 0 keeps only the endpoints.
  std::size_t record_stride = 1;
  bool record_controls = false;
  /// Drop the (1/delta) g drift of the fast component.
  bool suppress_g = false;
  /// Controls vanish for t >= control_horizon.
  double control_horizon = std::numeric_limits<double>::infinity();
  /// Flag raised when 1/2 int |u|^2 dt exceeds this.
  double control_cost_cap = std::numeric_limits<double>::infinity();
  /// Explicit time step; 0 selects the largest admissible one.
  double dt = 0.0;
};

struct ControlledPath {
  PathSample path;
  double log_weight = 0.0;
  double control_cost = 0.0;
  bool cost_cap_exceeded = false;
};

/// Number of uniform Euler steps on [0, T] respecting dt <= c_step delta^2 / eps.
std::size_t step_count(const ScaleParams& scale, double T, double requested_dt = 0.0);

PathSample integrate_uncontrolled(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                  const Vec& y0, double T, std::uint64_t stream_seed, std::uint64_t replica = 0,
                                  const IntegrationOptions& options = {});

/// Euler-Maruyama for the controlled system. log_weight accumulates
///   log M = -(1/sqrt(eps)) sum u . dZ - (1/(2 eps)) sum |u|^2 dt,
/// the density of the uncontrolled law with respect to the controlled one;
/// it is exact for the discretized chain.
ControlledPath integrate_controlled(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                    const Vec& y0, double T, const ControlPolicy& policy,
                                    std::uint64_t stream_seed, std::uint64_t replica = 0,
                                    const IntegrationOptions& options = {});

struct FastPath {
  std::vector<double> times;
  Mat Y;
};

/// Fast process in its own clock: dY = f dt + tau1 dW + tau2 dB.
FastPath integrate_fast_rescaled(const CoefficientSet& coeffs, const Vec& y0, double T_fast,
                                 std::uint64_t stream_seed, std::uint64_t replica = 0, double dt_fast = 1e-3,
                                 std::size_t record_stride = 1);

}  // namespace qldp
