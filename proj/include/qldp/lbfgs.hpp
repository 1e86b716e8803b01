#pragma once

#include "qldp/types.hpp"

#include <deque>
#include <functional>

namespace qldp {

struct LbfgsOptions {
  int max_iterations = 5000;
  int history = 12;
  double gradient_tolerance = 1e-8;
  double armijo = 1e-4;
  double curvature = 0.9;
};

struct LbfgsResult {
  Vec x;
  double value = 0.0;
  double gradient_norm = 0.0;  ///< infinity norm
  int iterations = 0;
  bool converged = false;
};

/// objective(x, grad) returns f(x) and writes the gradient.
using Objective = std::function<double(const Vec&, Vec&)>;

/// Limited-memory BFGS with a bracketing line search enforcing the weak
/// Wolfe conditions. Returns the best iterate when the budget runs out.
LbfgsResult minimize_lbfgs(const Objective& objective, Vec x0, const LbfgsOptions& options = {});

}  // namespace qldp
