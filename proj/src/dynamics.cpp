#include "qldp/dynamics.hpp"

#include "qldp/rng.hpp"

#include <cmath>
#include <string>

namespace qldp {

ScaleParams ScaleParams::make(double epsilon, double delta_exponent, double step_factor) {
  require(epsilon > 0.0, "epsilon must be positive");
  require(delta_exponent > 1.0, "delta exponent must exceed 1 so that eps/delta diverges");
  require(step_factor > 0.0 && step_factor <= 1.0, "step factor must lie in (0, 1]");
  return ScaleParams{epsilon, delta_exponent, step_factor};
}

double ScaleParams::delta() const { return std::pow(epsilon, delta_exponent); }
double ScaleParams::eps_over_delta() const { return epsilon / delta(); }
double ScaleParams::rho() const {
  const double d = delta();
  return d * d / epsilon;
}

ControlPolicy ControlPolicy::zero(int k1, int k2) {
  ControlPolicy p;
  p.mode_ = Mode::Zero;
  p.u1_ = Vec::Zero(k1);
  p.u2_ = Vec::Zero(k2);
  return p;
}

ControlPolicy ControlPolicy::constant(const Vec& u1, const Vec& u2) {
  ControlPolicy p;
  p.mode_ = Mode::Constant;
  p.u1_ = u1;
  p.u2_ = u2;
  return p;
}

ControlPolicy ControlPolicy::tracking(int k1, int k2, std::shared_ptr<const FeedbackLaw> law) {
  require(law != nullptr, "tracking policy needs a feedback law");
  ControlPolicy p;
  p.mode_ = Mode::PathTracking;
  p.u1_ = Vec::Zero(k1);
  p.u2_ = Vec::Zero(k2);
  p.law_ = std::move(law);
  return p;
}

void ControlPolicy::evaluate(double t, const double* x, const double* y, const CoefficientValues& values, double* u1,
                             double* u2) const {
  switch (mode_) {
    case Mode::Zero:
    case Mode::Constant:
      for (Eigen::Index i = 0; i < u1_.size(); ++i) u1[i] = u1_(i);
      for (Eigen::Index i = 0; i < u2_.size(); ++i) u2[i] = u2_(i);
      return;
    case Mode::PathTracking:
      law_->evaluate(t, x, y, values, u1, u2);
      return;
  }
}

std::size_t step_count(const ScaleParams& scale, double T, double requested_dt) {
  require(T >= 0.0, "time horizon must be nonnegative");
  const double max_dt = scale.max_step();
  if (requested_dt > 0.0) {
    if (requested_dt > max_dt * (1.0 + 1e-12))
      throw ConfigError("time step " + std::to_string(requested_dt) + " violates the fast-scale bound " +
                        std::to_string(max_dt));
    return static_cast<std::size_t>(std::ceil(T / requested_dt - 1e-9));
  }
  return static_cast<std::size_t>(std::ceil(T / max_dt - 1e-9));
}

namespace {

struct Recorder {
  std::size_t stride;
  std::size_t steps;
  std::size_t rows;

  Recorder(std::size_t stride_, std::size_t steps_) : stride(stride_), steps(steps_) {
    if (stride == 0 || steps == 0) {
      rows = steps == 0 ? 1 : 2;
    } else {
      rows = steps / stride + 1 + (steps % stride != 0 ? 1 : 0);
    }
  }
  bool keep(std::size_t step) const {
    if (step == 0 || step == steps) return true;
    return stride != 0 && step % stride == 0;
  }
};

template <bool Controlled>
ControlledPath integrate(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0, const Vec& y0,
                         double T, const ControlPolicy* policy, std::uint64_t stream_seed, std::uint64_t replica,
                         const IntegrationOptions& options) {
  const int m = coeffs.slow_dim();
  const int n = coeffs.fast_dim();
  const int k1 = coeffs.k1();
  const int k2 = coeffs.k2();
  require(x0.size() == m && y0.size() == n, "initial state dimension mismatch");
  if constexpr (Controlled) require(policy->k1() == k1 && policy->k2() == k2, "control dimension mismatch");

  const std::size_t steps = step_count(scale, T, options.dt);
  const double dt = steps == 0 ? 0.0 : T / static_cast<double>(steps);
  const double sqrt_dt = std::sqrt(dt);
  const double eps = scale.epsilon;
  const double sqrt_eps = std::sqrt(eps);
  const double delta = scale.delta();
  const double eod = eps / delta;
  const double inv_delta = 1.0 / delta;

  ControlledPath out;
  PathSample& path = out.path;
  path.replica_id = replica;
  path.stream_seed = stream_seed;
  path.dt = dt;
  Recorder rec(options.record_stride, steps);
  path.X.resize(static_cast<Eigen::Index>(rec.rows), m);
  path.Y.resize(static_cast<Eigen::Index>(rec.rows), n);
  path.times.reserve(rec.rows);
  if (options.record_controls) {
    path.U1.resize(static_cast<Eigen::Index>(steps), k1);
    path.U2.resize(static_cast<Eigen::Index>(steps), k2);
    path.step_times.reserve(steps);
  }

  GaussianSource normal(make_stream(stream_seed, StreamTag::Path, replica));
  Vec x = x0;
  Vec y = y0;
  Vec dw(k1), db(k2), u1 = Vec::Zero(k1), u2 = Vec::Zero(k2);
  Vec dx(m), dy(n);
  auto values = coeffs.make_values();

  Eigen::Index row = 0;
  auto record = [&](std::size_t step) {
    path.times.push_back(static_cast<double>(step) * dt);
    path.X.row(row) = x.transpose();
    path.Y.row(row) = y.transpose();
    ++row;
  };
  record(0);

  for (std::size_t step = 0; step < steps; ++step) {
    const double t = static_cast<double>(step) * dt;
    coeffs.eval(x.data(), y.data(), values);
    for (int i = 0; i < k1; ++i) dw(i) = sqrt_dt * normal();
    for (int i = 0; i < k2; ++i) db(i) = sqrt_dt * normal();

    dx.noalias() = (eod * values.b + values.c) * dt + sqrt_eps * values.sigma * dw;
    dy = eod * values.f;
    if (!options.suppress_g) dy += values.g;
    dy *= dt;
    dy.noalias() += sqrt_eps * (values.tau1 * dw + values.tau2 * db);

    if constexpr (Controlled) {
      if (t < options.control_horizon) {
        policy->evaluate(t, x.data(), y.data(), values, u1.data(), u2.data());
      } else {
        u1.setZero();
        u2.setZero();
      }
      const double u_sq = u1.squaredNorm() + u2.squaredNorm();
      dx.noalias() += values.sigma * u1 * dt;
      dy.noalias() += (values.tau1 * u1 + values.tau2 * u2) * dt;
      out.log_weight -= (u1.dot(dw) + u2.dot(db)) / sqrt_eps + 0.5 * u_sq * dt / eps;
      out.control_cost += 0.5 * u_sq * dt;
      if (options.record_controls) {
        path.U1.row(static_cast<Eigen::Index>(step)) = u1.transpose();
        path.U2.row(static_cast<Eigen::Index>(step)) = u2.transpose();
      }
    } else if (options.record_controls) {
      path.U1.row(static_cast<Eigen::Index>(step)).setZero();
      path.U2.row(static_cast<Eigen::Index>(step)).setZero();
    }
    if (options.record_controls) path.step_times.push_back(t);

    x += dx;
    y.noalias() += inv_delta * dy;
    if (!x.allFinite() || !y.allFinite())
      throw NumericalError("non-finite state at step " + std::to_string(step + 1));
    if (rec.keep(step + 1)) record(step + 1);
  }
  if (out.control_cost > options.control_cost_cap) out.cost_cap_exceeded = true;
  return out;
}

}  // namespace

PathSample integrate_uncontrolled(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                  const Vec& y0, double T, std::uint64_t stream_seed, std::uint64_t replica,
                                  const IntegrationOptions& options) {
  require(T > 0.0, "time horizon must be positive");
  return integrate<false>(coeffs, scale, x0, y0, T, nullptr, stream_seed, replica, options).path;
}

ControlledPath integrate_controlled(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                    const Vec& y0, double T, const ControlPolicy& policy,
                                    std::uint64_t stream_seed, std::uint64_t replica,
                                    const IntegrationOptions& options) {
  require(T > 0.0, "time horizon must be positive");
  return integrate<true>(coeffs, scale, x0, y0, T, &policy, stream_seed, replica, options);
}

FastPath integrate_fast_rescaled(const CoefficientSet& coeffs, const Vec& y0, double T_fast,
                                 std::uint64_t stream_seed, std::uint64_t replica, double dt_fast,
                                 std::size_t record_stride) {
  require(T_fast >= 0.0, "fast horizon must be nonnegative");
  require(dt_fast > 0.0, "fast step must be positive");
  const int n = coeffs.fast_dim();
  require(y0.size() == n, "initial fast state dimension mismatch");
  const std::size_t steps = static_cast<std::size_t>(std::ceil(T_fast / dt_fast - 1e-9));
  const double dt = steps == 0 ? 0.0 : T_fast / static_cast<double>(steps);
  const double sqrt_dt = std::sqrt(dt);

  Recorder rec(record_stride, steps);
  FastPath out;
  out.Y.resize(static_cast<Eigen::Index>(rec.rows), n);
  out.times.reserve(rec.rows);
  GaussianSource normal(make_stream(stream_seed, StreamTag::FastPath, replica));
  Vec y = y0;
  Vec dw(coeffs.k1()), db(coeffs.k2());
  auto values = coeffs.make_values();
  Eigen::Index row = 0;
  out.times.push_back(0.0);
  out.Y.row(row++) = y.transpose();
  for (std::size_t step = 0; step < steps; ++step) {
    coeffs.eval_fast(y.data(), values);
    for (Eigen::Index i = 0; i < dw.size(); ++i) dw(i) = sqrt_dt * normal();
    for (Eigen::Index i = 0; i < db.size(); ++i) db(i) = sqrt_dt * normal();
    y.noalias() += values.f * dt + values.tau1 * dw + values.tau2 * db;
    if (!y.allFinite()) throw NumericalError("non-finite fast state at step " + std::to_string(step + 1));
    if (rec.keep(step + 1)) {
      out.times.push_back(static_cast<double>(step + 1) * dt);
      out.Y.row(row++) = y.transpose();
    }
  }
  return out;
}

}  // namespace qldp
