#include "qldp/diagnostics.hpp"

#include "qldp/parallel.hpp"
#include "qldp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qldp {

double ergodic_window(const ScaleParams& scale, double beta) {
  require(beta > 0.0 && beta < 1.0, "window exponent beta must lie in (0, 1)");
  return std::pow(scale.rho(), 1.0 - beta);
}

ErgodicReport ergodic_average(std::span<const ErgodicMedium> media, const ScaleParams& scale,
                              const Observable& observable, const ErgodicOptions& options) {
  require(!media.empty(), "ergodic_average needs at least one medium");
  require(!options.t_shifts.empty(), "ergodic_average needs at least one time shift");
  if (options.mode == ErgodicMode::Controlled)
    require(options.policy != nullptr, "controlled mode requires a policy");

  ErgodicReport report;
  report.window = ergodic_window(scale, options.beta);
  const double t_max = *std::max_element(options.t_shifts.begin(), options.t_shifts.end());
  require(*std::min_element(options.t_shifts.begin(), options.t_shifts.end()) >= 0.0, "time shifts must be >= 0");
  const double horizon = t_max + report.window;
  const std::size_t steps = step_count(scale, horizon);
  const double dt = horizon / static_cast<double>(steps);
  report.window_steps = static_cast<std::size_t>(std::llround(report.window / dt));
  if (report.window_steps < 10)
    throw ConfigError("averaging window spans " + std::to_string(report.window_steps) +
                      " fast steps; at least 10 are required");

  const auto n_media = static_cast<Eigen::Index>(media.size());
  const auto n_shifts = static_cast<Eigen::Index>(options.t_shifts.size());
  report.averages = Mat::Zero(n_media, n_shifts);
  report.targets.resize(media.size());

  parallel_for(media.size(), [&](std::size_t k) {
    const auto& medium = media[k];
    const CoefficientSet& coeffs = *medium.coeffs;
    report.targets[k] = pi_average(*medium.density, observable);
    IntegrationOptions io;
    io.record_stride = 1;
    io.dt = dt;
    io.suppress_g = options.mode == ErgodicMode::Uncontrolled;
    const ControlPolicy zero = ControlPolicy::zero(coeffs.k1(), coeffs.k2());
    const ControlPolicy& policy = options.mode == ErgodicMode::Controlled ? *options.policy : zero;
    const auto run = integrate_controlled(coeffs, scale, options.x0, options.y0, horizon, policy, options.seed, k, io);
    const Mat& Y = run.path.Y;
    std::vector<double> psi(static_cast<std::size_t>(Y.rows()));
    for (Eigen::Index r = 0; r < Y.rows(); ++r) {
      const Vec y = Y.row(r).transpose();
      psi[static_cast<std::size_t>(r)] = observable(y.data());
    }
    for (Eigen::Index s = 0; s < n_shifts; ++s) {
      const auto start = static_cast<std::size_t>(std::llround(options.t_shifts[static_cast<std::size_t>(s)] / dt));
      double acc = 0.0;
      for (std::size_t j = start; j < start + report.window_steps; ++j) acc += psi[std::min(j, psi.size() - 1)];
      report.averages(static_cast<Eigen::Index>(k), s) = acc / static_cast<double>(report.window_steps);
    }
  });

  report.deviations = report.averages;
  for (Eigen::Index k = 0; k < n_media; ++k)
    report.deviations.row(k).array() -= report.targets[static_cast<std::size_t>(k)];
  const Mat abs_dev = report.deviations.cwiseAbs();
  report.max_abs_deviation = abs_dev.maxCoeff();
  report.first_shift_max_deviation = abs_dev.col(0).maxCoeff();
  const double count = static_cast<double>(abs_dev.size());
  report.mean_abs_deviation = abs_dev.sum() / count;
  if (abs_dev.size() > 1) {
    const double var = (abs_dev.array() - report.mean_abs_deviation).square().sum() / (count - 1.0);
    report.mean_abs_deviation_se = std::sqrt(var / count);
  }
  return report;
}

double occupation_window(const ScaleParams& scale) {
  return 10.0 * scale.rho() * std::pow(scale.eps_over_delta(), 0.25);
}

double OccupationHistogram::total_mass() const {
  double total = 0.0;
  for (const auto& [key, m] : mass) total += m;
  return total;
}

std::vector<double> OccupationHistogram::time_marginal() const {
  std::vector<double> out(static_cast<std::size_t>(bins.t_bins), 0.0);
  for (const auto& [key, m] : mass) out[static_cast<std::size_t>(key.back())] += m;
  return out;
}

std::vector<double> OccupationHistogram::y_marginal() const {
  std::size_t cells = static_cast<std::size_t>(bins.y_bins);
  if (fast_dim == 2) cells *= static_cast<std::size_t>(bins.y_bins);
  std::vector<double> out(cells, 0.0);
  const std::size_t offset = static_cast<std::size_t>(k1 + k2);
  for (const auto& [key, m] : mass) {
    std::size_t cell = static_cast<std::size_t>(key[offset]);
    if (fast_dim == 2) cell += static_cast<std::size_t>(bins.y_bins) * static_cast<std::size_t>(key[offset + 1]);
    out[cell] += m;
  }
  const double total = total_mass();
  for (auto& v : out) v /= total;
  return out;
}

std::vector<double> OccupationHistogram::u_marginal(int component) const {
  require(component >= 0 && component < k1 + k2, "control component out of range");
  std::vector<double> out(static_cast<std::size_t>(bins.u_bins), 0.0);
  for (const auto& [key, m] : mass) out[static_cast<std::size_t>(key[static_cast<std::size_t>(component)])] += m;
  const double total = total_mass();
  for (auto& v : out) v /= total;
  return out;
}

void OccupationHistogram::merge(const OccupationHistogram& other) {
  require(other.k1 == k1 && other.k2 == k2 && other.fast_dim == fast_dim && other.bins.u_bins == bins.u_bins &&
              other.bins.y_bins == bins.y_bins && other.bins.t_bins == bins.t_bins,
          "cannot merge occupation histograms with different layouts");
  for (const auto& [key, m] : other.mass) mass[key] += m;
  overflow_steps += other.overflow_steps;
}

PathSample simulate_occupation_run(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                   const Vec& y0, double T, double window, const ControlPolicy& policy,
                                   std::uint64_t seed, std::uint64_t replica) {
  const std::size_t steps_T = step_count(scale, T);
  const double dt = T / static_cast<double>(steps_T);
  const auto extra = static_cast<std::size_t>(std::ceil(window / dt - 1e-9));
  IntegrationOptions io;
  io.dt = dt;
  io.record_stride = 1;
  io.record_controls = true;
  io.control_horizon = T - 0.5 * dt;
  const double horizon = dt * static_cast<double>(steps_T + extra);
  return integrate_controlled(coeffs, scale, x0, y0, horizon, policy, seed, replica, io).path;
}

OccupationHistogram build_occupation(const PathSample& run, const ScaleParams& scale, double T, double window,
                                     const OccupationBins& bins) {
  require(window >= 10.0 * scale.rho() * (1.0 - 1e-9), "occupation window must be at least 10 delta^2/eps");
  require(bins.u_bins >= 1 && bins.y_bins >= 1 && bins.t_bins >= 1 && bins.u_max > 0.0, "invalid occupation bins");
  require(run.U1.rows() > 0 && run.dt > 0.0, "occupation needs a run with recorded controls");
  const double dt = run.dt;
  const auto K = static_cast<std::size_t>(std::llround(window / dt));
  const auto n_t = static_cast<std::size_t>(std::llround(T / dt));
  const auto n_steps = static_cast<std::size_t>(run.U1.rows());
  require(K >= 1, "occupation window shorter than one step");
  require(n_steps >= n_t + K, "run is too short for the occupation window");
  require(static_cast<std::size_t>(run.Y.rows()) >= n_steps, "run must record every step");

  OccupationHistogram h;
  h.window = static_cast<double>(K) * dt;
  h.T = static_cast<double>(n_t) * dt;
  h.bins = bins;
  h.k1 = static_cast<int>(run.U1.cols());
  h.k2 = static_cast<int>(run.U2.cols());
  h.fast_dim = static_cast<int>(run.Y.cols());

  std::vector<std::size_t> bin_start(static_cast<std::size_t>(bins.t_bins) + 1);
  for (int b = 0; b <= bins.t_bins; ++b)
    bin_start[static_cast<std::size_t>(b)] = n_t * static_cast<std::size_t>(b) / static_cast<std::size_t>(bins.t_bins);
  for (auto s : bin_start) h.t_edges.push_back(static_cast<double>(s) * dt);

  auto u_bin = [&](double u, bool& overflow) {
    const double scaled = (u + bins.u_max) / (2.0 * bins.u_max) * bins.u_bins;
    long idx = static_cast<long>(std::floor(scaled));
    if (idx < 0 || idx >= bins.u_bins) overflow = true;
    return static_cast<int>(std::clamp<long>(idx, 0, bins.u_bins - 1));
  };

  const double full = dt * dt / h.window;
  const double half = 0.5 * full;
  std::vector<int> key(static_cast<std::size_t>(h.k1 + h.k2 + h.fast_dim + 1));
  for (std::size_t j = 0; j < n_t + K; ++j) {
    bool overflow = false;
    std::size_t slot = 0;
    const auto r = static_cast<Eigen::Index>(j);
    for (int c = 0; c < h.k1; ++c) key[slot++] = u_bin(run.U1(r, c), overflow);
    for (int c = 0; c < h.k2; ++c) key[slot++] = u_bin(run.U2(r, c), overflow);
    for (int d = 0; d < h.fast_dim; ++d) {
      const double y = run.Y(r, d) - std::floor(run.Y(r, d));
      key[slot++] = std::min(static_cast<int>(y * bins.y_bins), bins.y_bins - 1);
    }
    if (overflow) ++h.overflow_steps;

    // window starts i with [i dt, i dt + Delta] overlapping step j: i in [j - K, j]
    const std::size_t lo = j >= K ? j - K : 0;
    const std::size_t hi = std::min(j, n_t - 1);
    if (lo > hi) continue;
    for (int b = 0; b < bins.t_bins; ++b) {
      const std::size_t a = std::max(lo, bin_start[static_cast<std::size_t>(b)]);
      const std::size_t e = std::min(hi + 1, bin_start[static_cast<std::size_t>(b) + 1]);
      if (a >= e) continue;
      double w = static_cast<double>(e - a) * full;
      if (j >= K && j - K >= a && j - K < e) w -= half;
      if (j >= a && j < e) w -= half;
      key.back() = b;
      h.mass[key] += w;
    }
  }
  return h;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "total variation: size mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::fabs(p[i] - q[i]);
  return 0.5 * tv;
}

std::vector<PathSample> simulate_ensemble(const CoefficientSet& coeffs, const ScaleParams& scale, const Vec& x0,
                                          const Vec& y0, double T, const ControlPolicy& policy,
                                          std::size_t replicas, std::uint64_t seed, std::size_t record_stride) {
  std::vector<PathSample> out(replicas);
  IntegrationOptions io;
  io.record_stride = record_stride;
  parallel_for(replicas, [&](std::size_t i) {
    out[i] = integrate_controlled(coeffs, scale, x0, y0, T, policy, seed, i, io).path;
  });
  return out;
}

DriftCheck viability_drift_check(std::span<const PathSample> runs, const std::function<Vec(double)>& reference) {
  require(runs.size() >= 2, "drift check needs at least two replicas");
  const auto rows = runs.front().X.rows();
  const auto m = runs.front().X.cols();
  for (const auto& r : runs) require(r.X.rows() == rows && r.X.cols() == m, "replicas are not aligned");
  const double n = static_cast<double>(runs.size());

  DriftCheck out;
  out.times = runs.front().times;
  out.mean_path = Mat::Zero(rows, m);
  Mat second = Mat::Zero(rows, m);
  for (const auto& r : runs) {
    out.mean_path += r.X;
    second += r.X.cwiseAbs2();
  }
  out.mean_path /= n;
  const Mat var = ((second / n - out.mean_path.cwiseAbs2()) * (n / (n - 1.0))).cwiseMax(0.0);
  const Mat se = (var / n).cwiseSqrt();
  out.max_se = se.maxCoeff();
  for (Eigen::Index k = 0; k < rows; ++k) {
    const double t = out.times[static_cast<std::size_t>(k)];
    const Vec ref = reference(t);
    Eigen::Index arg = 0;
    const double gap = (out.mean_path.row(k).transpose() - ref).cwiseAbs().maxCoeff(&arg);
    if (gap > out.sup_gap) {
      out.sup_gap = gap;
      out.se_at_sup = se(k, arg);
      out.t_at_sup = t;
    }
  }
  return out;
}

}  // namespace qldp
