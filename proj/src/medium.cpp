#include "qldp/medium.hpp"

#include "qldp/rng.hpp"
#include "qldp/torus_grid.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace qldp {

namespace {

bool all_zero(const std::vector<int>& k) {
  return std::all_of(k.begin(), k.end(), [](int v) { return v == 0; });
}

void collect_modes(const FieldSpec& field, std::vector<std::vector<int>>& out) {
  for (const auto& entry : field.entries)
    for (const auto& term : entry)
      if (!term.is_constant()) out.push_back(term.wavevector);
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::RandomShiftPeriodic: return "random_shift_periodic";
    case Family::RandomPhaseFourier: return "random_phase_fourier";
    case Family::GradientType: return "gradient";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "random_shift_periodic") return Family::RandomShiftPeriodic;
  if (name == "random_phase_fourier") return Family::RandomPhaseFourier;
  if (name == "gradient") return Family::GradientType;
  throw ConfigError("unknown environment family '" + name + "'");
}

bool FourierTerm::is_constant() const { return all_zero(wavevector); }

FieldSpec FieldSpec::zeros(int rows, int cols) {
  FieldSpec f;
  f.rows = rows;
  f.cols = cols;
  f.entries.resize(static_cast<std::size_t>(rows * cols));
  return f;
}

FieldSpec& FieldSpec::add(int row, int col, FourierTerm term) {
  require(row >= 0 && row < rows && col >= 0 && col < cols, "field entry out of range");
  at(row, col).push_back(std::move(term));
  return *this;
}

CoefficientSpec CoefficientSpec::zeros(int slow_dim, int fast_dim, int k1, int k2) {
  CoefficientSpec s;
  s.slow_dim = slow_dim;
  s.fast_dim = fast_dim;
  s.k1 = k1;
  s.k2 = k2;
  s.b = FieldSpec::zeros(slow_dim, 1);
  s.c = FieldSpec::zeros(slow_dim, 1);
  s.sigma = FieldSpec::zeros(slow_dim, k1);
  s.f = FieldSpec::zeros(fast_dim, 1);
  s.g = FieldSpec::zeros(fast_dim, 1);
  s.tau1 = FieldSpec::zeros(fast_dim, k1);
  s.tau2 = FieldSpec::zeros(fast_dim, k2);
  return s;
}

double MediumSample::mode_offset(std::size_t mode) const {
  double offset = 0.0;
  const auto& k = modes[mode];
  for (std::size_t d = 0; d < k.size() && d < shift.size(); ++d) offset += kTwoPi * k[d] * shift[d];
  if (mode < phases.size()) offset += phases[mode];
  return offset;
}

int MediumSample::mode_index(const std::vector<int>& wavevector) const {
  for (std::size_t j = 0; j < modes.size(); ++j)
    if (modes[j] == wavevector) return static_cast<int>(j);
  return -1;
}

MediumSample sample_medium(const MediumParams& params, std::uint64_t seed) {
  const auto& spec = params.coefficients;
  require(spec.fast_dim == 1 || spec.fast_dim == 2, "fast_dim must be 1 or 2");
  require(spec.slow_dim >= 1, "slow_dim must be positive");

  MediumSample sample;
  sample.family = params.family;
  sample.slow_dim = spec.slow_dim;
  sample.fast_dim = spec.fast_dim;
  sample.seed = seed;
  sample.shift.assign(static_cast<std::size_t>(spec.fast_dim), 0.0);

  std::vector<std::vector<int>> modes;
  for (const FieldSpec* f : {&spec.b, &spec.c, &spec.sigma, &spec.f, &spec.g, &spec.tau1, &spec.tau2})
    collect_modes(*f, modes);

  if (params.family == Family::GradientType) {
    require(params.potential.D_const > 0.0, "gradient family requires D_const > 0");
    require(!params.potential.modes.empty(), "gradient family requires a nonempty potential Fourier spec");
    require(spec.k1 >= spec.fast_dim, "gradient family requires k1 >= fast_dim");
    for (const auto& term : params.potential.modes) {
      require(term.x_slope.empty(), "potential terms cannot depend on x");
      if (!term.is_constant()) modes.push_back(term.wavevector);
    }
    sample.potential = params.potential;
  }
  if (params.family == Family::RandomPhaseFourier) require(!modes.empty(), "random_phase_fourier requires at least one non-constant mode");

  for (auto& k : modes) {
    require(static_cast<int>(k.size()) == spec.fast_dim, "wavevector length must equal fast_dim");
  }
  std::sort(modes.begin(), modes.end());
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
  sample.modes = std::move(modes);

  GaussianSource rng(make_stream(seed, StreamTag::Medium));
  switch (params.family) {
    case Family::RandomShiftPeriodic:
      for (auto& s : sample.shift) s = rng.uniform();
      break;
    case Family::RandomPhaseFourier:
      sample.phases.resize(sample.modes.size());
      for (auto& p : sample.phases) p = kTwoPi * rng.uniform();
      break;
    case Family::GradientType:
      break;
  }
  return sample;
}

CoefficientSet::CoefficientSet(MediumSample sample, const CoefficientSpec& spec)
    : sample_(std::move(sample)),
      slow_dim_(spec.slow_dim),
      fast_dim_(spec.fast_dim),
      k1_(spec.k1),
      k2_(spec.k2) {
  require(sample_.fast_dim == fast_dim_ && sample_.slow_dim == slow_dim_,
          "medium sample dimensions do not match coefficient spec");
  auto check_shape = [](const FieldSpec& f, int rows, int cols, const char* name) {
    require(f.rows == rows && f.cols == cols && f.entries.size() == static_cast<std::size_t>(rows * cols),
            std::string("coefficient field '") + name + "' has the wrong shape");
  };
  check_shape(spec.b, slow_dim_, 1, "b");
  check_shape(spec.c, slow_dim_, 1, "c");
  check_shape(spec.sigma, slow_dim_, k1_, "sigma");
  check_shape(spec.g, fast_dim_, 1, "g");
  b_ = compile(spec.b, "b", false);
  c_ = compile(spec.c, "c", true);
  sigma_ = compile(spec.sigma, "sigma", true);
  g_ = compile(spec.g, "g", true);

  if (sample_.family == Family::GradientType) {
    const double D = sample_.potential.D_const;
    FieldSpec f = FieldSpec::zeros(fast_dim_, 1);
    FieldSpec pot = FieldSpec::zeros(1, 1);
    for (const auto& term : sample_.potential.modes) {
      pot.add(0, 0, term);
      if (term.is_constant()) continue;
      for (int i = 0; i < fast_dim_; ++i) {
        const int ki = term.wavevector[static_cast<std::size_t>(i)];
        if (ki == 0) continue;
        // -d/dy_i [A cos(theta)] = 2 pi k_i A cos(theta - pi/2)
        f.add(i, 0, FourierTerm{kTwoPi * ki * term.amp, {}, term.wavevector, term.phase - 0.25 * kTwoPi});
      }
    }
    FieldSpec tau1 = FieldSpec::zeros(fast_dim_, k1_);
    for (int i = 0; i < fast_dim_; ++i) tau1.add(i, i, FourierTerm{std::sqrt(2.0 * D), {}, {}, 0.0});
    f_ = compile(f, "f", false);
    tau1_ = compile(tau1, "tau1", false);
    tau2_ = compile(FieldSpec::zeros(fast_dim_, k2_), "tau2", false);
    potential_ = compile(pot, "potential", false);
  } else {
    check_shape(spec.f, fast_dim_, 1, "f");
    check_shape(spec.tau1, fast_dim_, k1_, "tau1");
    check_shape(spec.tau2, fast_dim_, k2_, "tau2");
    f_ = compile(spec.f, "f", false);
    tau1_ = compile(spec.tau1, "tau1", false);
    tau2_ = compile(spec.tau2, "tau2", false);
  }
  b_offset_ = Vec::Zero(slow_dim_);
}

CoefficientSet::Field CoefficientSet::compile(const FieldSpec& spec, const char* name, bool x_allowed) const {
  Field field;
  field.rows = spec.rows;
  field.cols = spec.cols;
  field.entries.resize(spec.entries.size());
  for (std::size_t e = 0; e < spec.entries.size(); ++e) {
    for (const auto& term : spec.entries[e]) {
      Term t;
      t.amp = term.amp;
      if (!term.x_slope.empty()) {
        require(x_allowed, std::string("field '") + name + "' cannot depend on x");
        require(static_cast<int>(term.x_slope.size()) == slow_dim_,
                std::string("x_slope length in field '") + name + "' must equal slow_dim");
        if (std::any_of(term.x_slope.begin(), term.x_slope.end(), [](double v) { return v != 0.0; })) {
          t.slope = term.x_slope;
          field.depends_on_x = true;
        }
      }
      double phase = term.phase;
      if (!term.is_constant()) {
        t.mode = sample_.mode_index(term.wavevector);
        require(t.mode >= 0, std::string("wavevector in field '") + name + "' missing from the mode basis");
        phase += sample_.mode_offset(static_cast<std::size_t>(t.mode));
      }
      t.cos_phase = std::cos(phase);
      t.sin_phase = std::sin(phase);
      field.entries[e].push_back(std::move(t));
    }
  }
  return field;
}

CoefficientValues CoefficientSet::make_values() const {
  CoefficientValues v;
  v.b = Vec::Zero(slow_dim_);
  v.c = Vec::Zero(slow_dim_);
  v.f = Vec::Zero(fast_dim_);
  v.g = Vec::Zero(fast_dim_);
  v.sigma = Mat::Zero(slow_dim_, k1_);
  v.tau1 = Mat::Zero(fast_dim_, k1_);
  v.tau2 = Mat::Zero(fast_dim_, k2_);
  v.mode_cos.assign(sample_.modes.size(), 1.0);
  v.mode_sin.assign(sample_.modes.size(), 0.0);
  return v;
}

void CoefficientSet::fill_modes(const double* y, CoefficientValues& out) const {
  for (std::size_t j = 0; j < sample_.modes.size(); ++j) {
    const auto& k = sample_.modes[j];
    double arg = 0.0;
    for (int d = 0; d < fast_dim_; ++d) {
      const double yd = y[d] - std::floor(y[d]);
      arg += k[static_cast<std::size_t>(d)] * yd;
    }
    arg *= kTwoPi;
    out.mode_cos[j] = std::cos(arg);
    out.mode_sin[j] = std::sin(arg);
  }
}

void CoefficientSet::fill(const Field& field, const double* x, const CoefficientValues& cache, double* dst) const {
  // dst is column-major (Eigen default)
  for (int r = 0; r < field.rows; ++r) {
    for (int c = 0; c < field.cols; ++c) {
      double value = 0.0;
      for (const auto& t : field.entries[static_cast<std::size_t>(r * field.cols + c)]) {
        double amp = t.amp;
        if (x != nullptr)
          for (std::size_t i = 0; i < t.slope.size(); ++i) amp += t.slope[i] * x[i];
        if (t.mode < 0) {
          value += amp * t.cos_phase;
        } else {
          const auto m = static_cast<std::size_t>(t.mode);
          value += amp * (cache.mode_cos[m] * t.cos_phase - cache.mode_sin[m] * t.sin_phase);
        }
      }
      dst[r + c * field.rows] = value;
    }
  }
}

void CoefficientSet::eval(const double* x, const double* y, CoefficientValues& out) const {
  fill_modes(y, out);
  fill(b_, nullptr, out, out.b.data());
  out.b -= b_offset_;
  fill(c_, x, out, out.c.data());
  fill(sigma_, x, out, out.sigma.data());
  fill(f_, nullptr, out, out.f.data());
  fill(g_, x, out, out.g.data());
  fill(tau1_, nullptr, out, out.tau1.data());
  fill(tau2_, nullptr, out, out.tau2.data());
}

void CoefficientSet::eval_fast(const double* y, CoefficientValues& out) const {
  fill_modes(y, out);
  fill(b_, nullptr, out, out.b.data());
  out.b -= b_offset_;
  fill(f_, nullptr, out, out.f.data());
  fill(tau1_, nullptr, out, out.tau1.data());
  fill(tau2_, nullptr, out, out.tau2.data());
}

CoefficientValues CoefficientSet::eval(const Vec& x, const Vec& y) const {
  require(x.size() == slow_dim_ && y.size() == fast_dim_, "eval: dimension mismatch");
  auto v = make_values();
  eval(x.data(), y.data(), v);
  return v;
}

void CoefficientSet::set_drift_offset(const Vec& offset) {
  require(offset.size() == slow_dim_, "drift offset dimension mismatch");
  b_offset_ = offset;
}

bool CoefficientSet::fast_drift_vanishes() const {
  return std::all_of(f_.entries.begin(), f_.entries.end(), [](const auto& e) {
    return std::all_of(e.begin(), e.end(), [](const Term& t) { return t.amp == 0.0; });
  });
}

bool CoefficientSet::diffusion_is_constant() const {
  auto constant = [](const Field& f) {
    return std::all_of(f.entries.begin(), f.entries.end(), [](const auto& e) {
      return std::all_of(e.begin(), e.end(), [](const Term& t) { return t.mode < 0 || t.amp == 0.0; });
    });
  };
  return constant(tau1_) && constant(tau2_);
}

double CoefficientSet::gradient_density(const double* y) const {
  require(is_gradient(), "closed-form density requires the gradient family");
  auto v = make_values();
  fill_modes(y, v);
  double q = 0.0;
  fill(potential_, nullptr, v, &q);
  return std::exp(-q / sample_.potential.D_const);
}

double InvariantDensity::average(std::span<const double> values) const {
  require(values.size() == density.size(), "average: value grid does not match density grid");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    num += values[i] * density[i];
    den += density[i];
  }
  return num / den;
}

double InvariantDensity::average(const std::function<double(const double*)>& h) const {
  TorusGrid grid(fast_dim, n_grid);
  std::vector<double> values(grid.size());
  double y[2] = {0.0, 0.0};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, y);
    values[p] = h(y);
  }
  return average(values);
}

namespace {

/// Integral of the periodic hat function centred at node i/n over [lo, hi] (lo <= hi within one period).
double hat_integral(int i, int n, double lo, double hi) {
  const double h = 1.0 / n;
  const double c = static_cast<double>(i) * h;
  double total = 0.0;
  // the hat may wrap around, so test the three periodic copies
  for (int copy = -1; copy <= 1; ++copy) {
    const double centre = c + copy;
    const double a = std::max(lo, centre - h);
    const double b = std::min(hi, centre + h);
    if (a >= b) continue;
    auto primitive = [&](double t) {
      const double u = (t - centre) / h;  // in [-1, 1]
      return u <= 0.0 ? h * (u + 0.5 * u * u) : h * (u - 0.5 * u * u);
    };
    total += primitive(b) - primitive(a);
  }
  return total;
}

}  // namespace

std::vector<double> InvariantDensity::bin_masses(int bins) const {
  require(bins > 0 && n_grid > 0, "bin count and grid size must be positive");
  // node-to-bin weights for the piecewise-linear interpolant of the density
  std::vector<std::vector<std::pair<int, double>>> weights(static_cast<std::size_t>(n_grid));
  for (int i = 0; i < n_grid; ++i)
    for (int b = 0; b < bins; ++b) {
      const double w = hat_integral(i, n_grid, static_cast<double>(b) / bins, static_cast<double>(b + 1) / bins);
      if (w > 0.0) weights[static_cast<std::size_t>(i)].emplace_back(b, w);
    }
  std::size_t cells = static_cast<std::size_t>(bins);
  if (fast_dim == 2) cells *= static_cast<std::size_t>(bins);
  std::vector<double> mass(cells, 0.0);
  const auto n = static_cast<std::size_t>(n_grid);
  for (std::size_t p = 0; p < density.size(); ++p) {
    const auto& wi = weights[p % n];
    if (fast_dim == 1) {
      for (const auto& [b, w] : wi) mass[static_cast<std::size_t>(b)] += density[p] * w;
      continue;
    }
    const auto& wj = weights[p / n];
    for (const auto& [bi, w0] : wi)
      for (const auto& [bj, w1] : wj) mass[static_cast<std::size_t>(bi + bins * bj)] += density[p] * w0 * w1;
  }
  double total = 0.0;
  for (double m : mass) total += m;
  for (auto& m : mass) m /= total;
  return mass;
}

InvariantDensity invariant_density(const CoefficientSet& coeffs, int n_grid) {
  TorusGrid grid(coeffs.fast_dim(), n_grid);
  InvariantDensity out;
  out.fast_dim = coeffs.fast_dim();
  out.n_grid = n_grid;
  out.density.assign(grid.size(), 1.0);
  double y[2] = {0.0, 0.0};

  if (coeffs.is_gradient()) {
    out.closed_form = true;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      grid.point(p, y);
      out.density[p] = coeffs.gradient_density(y);
    }
  } else if (coeffs.fast_drift_vanishes() && coeffs.diffusion_is_constant()) {
    out.closed_form = true;
  } else {
    // Null vector of L_h^T with one equation replaced by the normalization.
    SparseMatrix adjoint = SparseMatrix(assemble_generator(coeffs, grid).transpose());
    const auto size = static_cast<Eigen::Index>(grid.size());
    for (Eigen::Index k = 0; k < size; ++k) adjoint.coeffRef(0, k) = 1.0;
    Eigen::SparseMatrix<double> colmajor(adjoint);
    colmajor.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(colmajor);
    if (lu.info() != Eigen::Success) throw NumericalError("invariant density: adjoint factorization failed");
    Vec rhs = Vec::Zero(size);
    rhs(0) = static_cast<double>(size);
    const Vec m = lu.solve(rhs);
    for (Eigen::Index k = 0; k < size; ++k) out.density[static_cast<std::size_t>(k)] = m(k);
  }

  double sum = 0.0;
  for (std::size_t p = 0; p < out.density.size(); ++p) {
    if (!(out.density[p] > 0.0)) throw NumericalError("invariant density is not positive on the grid");
    sum += out.density[p];
  }
  out.normalizer = sum / static_cast<double>(out.density.size());
  for (auto& d : out.density) d /= out.normalizer;
  return out;
}

double pi_average(const InvariantDensity& density, const std::function<double(const double*)>& h) {
  for (double d : density.density)
    if (!(d > 0.0)) throw NumericalError("pi_average: density must be positive on the grid");
  return density.average(h);
}

NondegeneracyReport check_nondegeneracy(const CoefficientSet& coeffs, const Vec& x, int points) {
  TorusGrid grid(coeffs.fast_dim(), points);
  NondegeneracyReport report{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  auto values = coeffs.make_values();
  double y[2] = {0.0, 0.0};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, y);
    coeffs.eval(x.data(), y, values);
    const Mat ss = values.sigma * values.sigma.transpose();
    const Mat aa = values.tau1 * values.tau1.transpose() + values.tau2 * values.tau2.transpose();
    report.min_sigma_eig = std::min(report.min_sigma_eig, Eigen::SelfAdjointEigenSolver<Mat>(ss).eigenvalues().minCoeff());
    report.min_fast_eig = std::min(report.min_fast_eig, Eigen::SelfAdjointEigenSolver<Mat>(aa).eigenvalues().minCoeff());
  }
  return report;
}

Vec drift_mean(const CoefficientSet& coeffs, const InvariantDensity& density) {
  TorusGrid grid(coeffs.fast_dim(), density.n_grid);
  Vec mean = Vec::Zero(coeffs.slow_dim());
  auto values = coeffs.make_values();
  double y[2] = {0.0, 0.0};
  double weight = 0.0;
  for (std::size_t p = 0; p < grid.size(); ++p) {
    grid.point(p, y);
    coeffs.eval_fast(y, values);
    mean += density.density[p] * (values.b + coeffs.drift_offset());
    weight += density.density[p];
  }
  return mean / weight;
}

}  // namespace qldp
