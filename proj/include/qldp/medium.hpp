#pragma once

#include "qldp/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qldp {

class TorusGrid;

enum class Family { RandomShiftPeriodic, RandomPhaseFourier, GradientType };

std::string to_string(Family family);
Family family_from_string(const std::string& name);

/// One Fourier term of a scalar coefficient entry:
///   (amp + x_slope . x) * cos(2 pi k . y + phase + medium offset of k).
/// An empty or all-zero wavevector is a constant in y. x_slope may be empty.
struct FourierTerm {
  double amp = 0.0;
  std::vector<double> x_slope;
  std::vector<int> wavevector;
  double phase = 0.0;

  bool is_constant() const;
};

/// Matrix-valued field; every entry is a sum of Fourier terms. Row-major.
struct FieldSpec {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<FourierTerm>> entries;

  static FieldSpec zeros(int rows, int cols);
  FieldSpec& add(int row, int col, FourierTerm term);
  std::vector<FourierTerm>& at(int row, int col) { return entries[static_cast<std::size_t>(row * cols + col)]; }
  const std::vector<FourierTerm>& at(int row, int col) const {
    return entries[static_cast<std::size_t>(row * cols + col)];
  }
};

/// Coefficient fields of the slow/fast system. Shapes (m = slow_dim,
/// n = fast_dim): b, c: m x 1; sigma: m x k1; f, g: n x 1; tau1: n x k1;
/// tau2: n x k2. Only c, g and sigma may depend on x.
struct CoefficientSpec {
  int slow_dim = 1;
  int fast_dim = 1;
  int k1 = 1;
  int k2 = 1;
  FieldSpec b, c, sigma, f, g, tau1, tau2;

  static CoefficientSpec zeros(int slow_dim, int fast_dim, int k1, int k2);
};

/// Periodic potential Q for the gradient family: f = -grad Q,
/// tau1 = sqrt(2 D) I, tau2 = 0, invariant density exp(-Q / D).
struct PotentialSpec {
  std::vector<FourierTerm> modes;
  double D_const = 1.0;
};

struct MediumParams {
  Family family = Family::RandomShiftPeriodic;
  CoefficientSpec coefficients;
  PotentialSpec potential;
};

/// A realization of the random environment. Shifts and phases act on every
/// field through the per-wavevector offset 2 pi k . shift + phase_k.
struct MediumSample {
  Family family = Family::RandomShiftPeriodic;
  int slow_dim = 1;
  int fast_dim = 1;
  std::vector<double> shift;
  std::vector<std::vector<int>> modes;
  std::vector<double> phases;
  PotentialSpec potential;
  std::uint64_t seed = 0;

  double mode_offset(std::size_t mode) const;
  int mode_index(const std::vector<int>& wavevector) const;
};

MediumSample sample_medium(const MediumParams& params, std::uint64_t seed);

/// Point values of every coefficient field. Holds scratch space so repeated
/// evaluation does not allocate.
struct CoefficientValues {
  Vec b, c, f, g;
  Mat sigma, tau1, tau2;
  std::vector<double> mode_cos, mode_sin;
};

/// Compiled, immutable coefficient evaluator for one medium sample.
class CoefficientSet {
 public:
  CoefficientSet(MediumSample sample, const CoefficientSpec& spec);

  int slow_dim() const { return slow_dim_; }
  int fast_dim() const { return fast_dim_; }
  int k1() const { return k1_; }
  int k2() const { return k2_; }
  const MediumSample& sample() const { return sample_; }

  CoefficientValues make_values() const;
  void eval(const double* x, const double* y, CoefficientValues& out) const;
  /// b, f, tau1, tau2 only; these never depend on x.
  void eval_fast(const double* y, CoefficientValues& out) const;
  CoefficientValues eval(const Vec& x, const Vec& y) const;

  /// Constant subtracted from b (centering). Zero unless set.
  const Vec& drift_offset() const { return b_offset_; }
  void set_drift_offset(const Vec& offset);

  bool fast_drift_vanishes() const;
  bool diffusion_is_constant() const;
  bool is_gradient() const { return sample_.family == Family::GradientType; }

  /// Closed-form invariant density exp(-Q/D) at y (gradient family only).
  double gradient_density(const double* y) const;

 private:
  struct Term {
    int mode = -1;
    double amp = 0.0;
    std::vector<double> slope;
    double cos_phase = 1.0;
    double sin_phase = 0.0;
  };
  struct Field {
    int rows = 0;
    int cols = 0;
    bool depends_on_x = false;
    std::vector<std::vector<Term>> entries;
  };

  Field compile(const FieldSpec& spec, const char* name, bool x_allowed) const;
  void fill_modes(const double* y, CoefficientValues& out) const;
  void fill(const Field& field, const double* x, const CoefficientValues& cache, double* dst) const;

  MediumSample sample_;
  int slow_dim_, fast_dim_, k1_, k2_;
  Field b_, c_, sigma_, f_, g_, tau1_, tau2_, potential_;
  Vec b_offset_;
};

/// Grid representation of the invariant density m~ of the environment
/// process, normalized so that the grid mean of density equals one.
struct InvariantDensity {
  int fast_dim = 1;
  int n_grid = 0;
  std::vector<double> density;
  double normalizer = 1.0;
  bool closed_form = false;

  std::size_t size() const { return density.size(); }
  /// Node coordinates follow TorusGrid: y_i = i / n_grid per dimension.
  double average(std::span<const double> values) const;
  double average(const std::function<double(const double*)>& h) const;
  /// Mass of each of `bins` equal bins per dimension (trapezoid split at edges).
  std::vector<double> bin_masses(int bins) const;
};

/// Closed form for the gradient family and for f = 0 with constant
/// diffusion; otherwise the null vector of the discrete adjoint generator.
InvariantDensity invariant_density(const CoefficientSet& coeffs, int n_grid);

double pi_average(const InvariantDensity& density, const std::function<double(const double*)>& h);

struct NondegeneracyReport {
  double min_sigma_eig = 0.0;
  double min_fast_eig = 0.0;
};

/// Smallest eigenvalues of sigma sigma^T (at x) and tau1 tau1^T + tau2 tau2^T
/// over a uniform y-grid with `points` nodes per dimension.
NondegeneracyReport check_nondegeneracy(const CoefficientSet& coeffs, const Vec& x, int points = 256);

/// pi-mean of b; subtracting it makes the cell problem solvable.
Vec drift_mean(const CoefficientSet& coeffs, const InvariantDensity& density);

}  // namespace qldp
