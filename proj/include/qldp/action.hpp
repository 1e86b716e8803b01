#pragma once

#include "qldp/effective.hpp"
#include "qldp/lbfgs.hpp"

#include <vector>

namespace qldp {

/// Piecewise-linear path on uniform knots over [0, T].
struct DiscretePath {
  double T = 1.0;
  Mat knots;  ///< (n_seg + 1) x m

  int segments() const { return static_cast<int>(knots.rows()) - 1; }
  int dim() const { return static_cast<int>(knots.cols()); }
  double dt() const { return T / segments(); }
  Vec knot(int k) const { return knots.row(k).transpose(); }
  Vec velocity(int segment) const;
  Vec at(double t) const;
  /// Velocity of the segment containing t (right-continuous; last segment at t = T).
  Vec velocity_at(double t) const;

  static DiscretePath straight(const Vec& from, const Vec& to, double T, int n_seg);
};

struct ActionValue {
  double total = 0.0;
  std::vector<double> per_segment;
  Mat gradient;  ///< same shape as knots; empty unless requested
};

/// 1/2 (v - r(x))^T q(x)^{-1} (v - r(x)).
double local_rate(const Vec& x, const Vec& v, const EffectiveCoefficients& eff);

/// Midpoint rule: each segment contributes dt * L(midpoint, segment velocity).
ActionValue path_action(const DiscretePath& path, const EffectiveCoefficients& eff, bool with_gradient = false);

struct EventSpec {
  enum class Kind { FixedEndpoint, HalfSpace, WholeSpace };
  Kind kind = Kind::WholeSpace;
  Vec endpoint;   ///< FixedEndpoint
  Vec normal;     ///< HalfSpace: {x : normal . x >= level}
  double level = 0.0;

  static EventSpec fixed_endpoint(const Vec& x);
  static EventSpec half_space(const Vec& normal, double level);
  static EventSpec whole_space();

  /// Membership of a terminal state. A fixed endpoint has measure zero and
  /// is never hit by a simulated path.
  bool contains(const Vec& x) const;
};

struct MinimizeOptions {
  LbfgsOptions lbfgs;
};

struct MinimizeResult {
  DiscretePath path;
  double value = 0.0;
  double stationarity = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Zero-action path: midpoint-rule solution of phi' = r(phi).
DiscretePath drift_path(const Vec& x0, double T, const EffectiveCoefficients& eff, int n_seg);

/// Minimizes the discretized action over paths from x0 that end in the event.
/// Fixed endpoint: interior knots are free. Half space: interior knots plus
/// the endpoint restricted to the boundary hyperplane; returns the drift path
/// with zero action when it already ends inside the half space.
MinimizeResult minimize_action(const Vec& x0, const EventSpec& event, double T, const EffectiveCoefficients& eff,
                               int n_seg, const MinimizeOptions& options = {});

}  // namespace qldp
