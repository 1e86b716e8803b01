#include "qldp/lbfgs.hpp"

#include <cmath>
#include <limits>

namespace qldp {

namespace {

struct LineSearchResult {
  double step = 0.0;
  double value = 0.0;
  bool ok = false;
};

// Bisection/expansion search for a step satisfying the weak Wolfe conditions.
LineSearchResult wolfe_search(const Objective& objective, const Vec& x, double f0, double slope0, const Vec& dir,
                              const LbfgsOptions& options, Vec& x_new, Vec& g_new) {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double step = 1.0;
  LineSearchResult best;
  for (int it = 0; it < 60; ++it) {
    x_new = x + step * dir;
    const double f = objective(x_new, g_new);
    if (!std::isfinite(f) || f > f0 + options.armijo * step * slope0) {
      hi = step;
    } else if (g_new.dot(dir) < options.curvature * slope0) {
      lo = step;
      best = {step, f, true};
    } else {
      return {step, f, true};
    }
    step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * lo;
    if (std::isfinite(hi) && hi - lo < 1e-16 * std::max(1.0, hi)) break;
  }
  if (best.ok) {
    x_new = x + best.step * dir;
    best.value = objective(x_new, g_new);
  }
  return best;
}

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, Vec x0, const LbfgsOptions& options) {
  LbfgsResult result;
  result.x = std::move(x0);
  const auto n = result.x.size();
  Vec g(n);
  result.value = objective(result.x, g);
  result.gradient_norm = n ? g.lpNorm<Eigen::Infinity>() : 0.0;
  if (n == 0 || result.gradient_norm <= options.gradient_tolerance) {
    result.converged = true;
    return result;
  }

  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vec x_new(n), g_new(n), dir(n);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    // two-loop recursion
    dir = -g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      const auto k = static_cast<std::size_t>(i);
      alpha[k] = rho_hist[k] * s_hist[k].dot(dir);
      dir -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(dir);
      dir += (alpha[k] - beta) * s_hist[k];
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }

    const auto ls = wolfe_search(objective, result.x, result.value, slope, dir, options, x_new, g_new);
    result.iterations = iter;
    if (!ls.ok) break;

    Vec s = x_new - result.x;
    Vec y = g_new - g;
    const double sy = s.dot(y);
    result.x = x_new;
    g = g_new;
    result.value = ls.value;
    result.gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (result.gradient_norm <= options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    if (sy > 1e-300) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  return result;
}

}  // namespace qldp
