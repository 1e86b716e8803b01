#include "qldp/action.hpp"

#include <algorithm>
#include <cmath>

namespace qldp {

Vec DiscretePath::velocity(int segment) const {
  return (knots.row(segment + 1) - knots.row(segment)).transpose() / dt();
}

Vec DiscretePath::at(double t) const {
  const double u = std::clamp(t / dt(), 0.0, static_cast<double>(segments()));
  const int k = std::min(static_cast<int>(std::floor(u)), segments() - 1);
  const double w = u - k;
  return ((1.0 - w) * knots.row(k) + w * knots.row(k + 1)).transpose();
}

Vec DiscretePath::velocity_at(double t) const {
  const int k = std::clamp(static_cast<int>(std::floor(t / dt())), 0, segments() - 1);
  return velocity(k);
}

DiscretePath DiscretePath::straight(const Vec& from, const Vec& to, double T, int n_seg) {
  require(n_seg >= 1 && T > 0.0, "path needs T > 0 and at least one segment");
  require(from.size() == to.size(), "path endpoint dimension mismatch");
  DiscretePath p;
  p.T = T;
  p.knots.resize(n_seg + 1, from.size());
  for (int k = 0; k <= n_seg; ++k) {
    const double w = static_cast<double>(k) / n_seg;
    p.knots.row(k) = ((1.0 - w) * from + w * to).transpose();
  }
  return p;
}

double local_rate(const Vec& x, const Vec& v, const EffectiveCoefficients& eff) {
  const Vec w = v - eff.r(x);
  const auto llt = eff.q_factor(x);
  return 0.5 * w.dot(llt.solve(w));
}

ActionValue path_action(const DiscretePath& path, const EffectiveCoefficients& eff, bool with_gradient) {
  const int n_seg = path.segments();
  const int m = path.dim();
  require(m == eff.dim(), "path dimension does not match effective coefficients");
  const double dt = path.dt();
  ActionValue out;
  out.per_segment.resize(static_cast<std::size_t>(n_seg));
  if (with_gradient) out.gradient = Mat::Zero(path.knots.rows(), m);
  const Mat& jac = eff.drift_jacobian();

  for (int k = 0; k < n_seg; ++k) {
    const Vec a = path.knot(k);
    const Vec b = path.knot(k + 1);
    const Vec mid = 0.5 * (a + b);
    const Vec v = (b - a) / dt;
    const Vec w = v - eff.r(mid);
    const auto llt = eff.q_factor(mid);
    const Vec z = llt.solve(w);
    const double L = 0.5 * w.dot(z);
    out.per_segment[static_cast<std::size_t>(k)] = dt * L;
    out.total += dt * L;
    if (!with_gradient) continue;
    Vec dmid = -jac.transpose() * z;
    if (eff.q_depends_on_x())
      for (int i = 0; i < m; ++i) dmid(i) -= 0.5 * z.dot(eff.dq(mid, i) * z);
    out.gradient.row(k) += (0.5 * dt * dmid - z).transpose();
    out.gradient.row(k + 1) += (0.5 * dt * dmid + z).transpose();
  }
  return out;
}

EventSpec EventSpec::fixed_endpoint(const Vec& x) {
  EventSpec e;
  e.kind = Kind::FixedEndpoint;
  e.endpoint = x;
  return e;
}

EventSpec EventSpec::half_space(const Vec& normal, double level) {
  require(normal.size() > 0 && normal.norm() > 0.0, "half-space normal must be nonzero");
  EventSpec e;
  e.kind = Kind::HalfSpace;
  e.normal = normal;
  e.level = level;
  return e;
}

EventSpec EventSpec::whole_space() { return EventSpec{}; }

bool EventSpec::contains(const Vec& x) const {
  switch (kind) {
    case Kind::WholeSpace: return true;
    case Kind::HalfSpace: return normal.dot(x) >= level;
    case Kind::FixedEndpoint: return false;
  }
  return false;
}

DiscretePath drift_path(const Vec& x0, double T, const EffectiveCoefficients& eff, int n_seg) {
  require(n_seg >= 1 && T > 0.0, "path needs T > 0 and at least one segment");
  const int m = static_cast<int>(x0.size());
  DiscretePath p;
  p.T = T;
  p.knots.resize(n_seg + 1, m);
  p.knots.row(0) = x0.transpose();
  const double dt = T / n_seg;
  const Mat& jac = eff.drift_jacobian();
  const Vec r0 = eff.r(Vec::Zero(m));
  const Mat lhs = Mat::Identity(m, m) - 0.5 * dt * jac;
  const auto lu = lhs.partialPivLu();
  for (int k = 0; k < n_seg; ++k) {
    const Vec xk = p.knot(k);
    p.knots.row(k + 1) = lu.solve(xk + dt * (r0 + 0.5 * jac * xk)).transpose();
  }
  return p;
}

namespace {

// Orthonormal basis of the complement of `normal`.
Mat complement_basis(const Vec& normal) {
  const auto m = normal.size();
  Eigen::HouseholderQR<Mat> qr(normal);
  const Mat q = qr.householderQ() * Mat::Identity(m, m);
  return q.rightCols(m - 1);
}

}  // namespace

MinimizeResult minimize_action(const Vec& x0, const EventSpec& event, double T, const EffectiveCoefficients& eff,
                               int n_seg, const MinimizeOptions& options) {
  require(n_seg >= 1 && T > 0.0, "minimize_action needs T > 0 and at least one segment");
  const int m = static_cast<int>(x0.size());
  require(m == eff.dim(), "initial point dimension does not match effective coefficients");

  MinimizeResult out;
  Vec end;
  Mat basis;
  Vec anchor;
  switch (event.kind) {
    case EventSpec::Kind::WholeSpace: {
      out.path = drift_path(x0, T, eff, n_seg);
      out.value = path_action(out.path, eff).total;
      out.converged = true;
      return out;
    }
    case EventSpec::Kind::FixedEndpoint:
      require(event.endpoint.size() == m, "event endpoint dimension mismatch");
      end = event.endpoint;
      break;
    case EventSpec::Kind::HalfSpace: {
      require(event.normal.size() == m, "event normal dimension mismatch");
      DiscretePath free = drift_path(x0, T, eff, n_seg);
      if (event.contains(free.knot(n_seg))) {
        out.path = std::move(free);
        out.value = path_action(out.path, eff).total;
        out.converged = true;
        return out;
      }
      const Vec& a = event.normal;
      anchor = event.level * a / a.squaredNorm();
      basis = complement_basis(a);
      end = x0 + (event.level - a.dot(x0)) * a / a.squaredNorm();
      break;
    }
  }

  DiscretePath path = DiscretePath::straight(x0, end, T, n_seg);
  const int interior = n_seg - 1;
  const int free_end = static_cast<int>(basis.cols());
  Vec vars(interior * m + free_end);
  for (int k = 1; k < n_seg; ++k) vars.segment((k - 1) * m, m) = path.knot(k);
  if (free_end > 0) vars.tail(free_end) = basis.transpose() * (end - anchor);

  auto unpack = [&](const Vec& v, DiscretePath& p) {
    for (int k = 1; k < n_seg; ++k) p.knots.row(k) = v.segment((k - 1) * m, m).transpose();
    if (event.kind == EventSpec::Kind::HalfSpace) p.knots.row(n_seg) = (anchor + basis * v.tail(free_end)).transpose();
  };

  DiscretePath work = path;
  const Objective objective = [&](const Vec& v, Vec& grad) {
    unpack(v, work);
    const auto value = path_action(work, eff, true);
    grad.resize(v.size());
    for (int k = 1; k < n_seg; ++k) grad.segment((k - 1) * m, m) = value.gradient.row(k).transpose();
    if (free_end > 0) grad.tail(free_end) = basis.transpose() * value.gradient.row(n_seg).transpose();
    return value.total;
  };

  const auto res = minimize_lbfgs(objective, vars, options.lbfgs);
  unpack(res.x, path);
  out.path = std::move(path);
  out.value = path_action(out.path, eff).total;
  out.stationarity = res.gradient_norm;
  out.iterations = res.iterations;
  out.converged = res.converged;
  return out;
}

}  // namespace qldp
