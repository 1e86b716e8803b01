#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace qldp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Raised for malformed configuration or invalid arguments. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation cannot produce a trustworthy result
/// (non-finite state, singular system, non-SPD matrix). CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace qldp
