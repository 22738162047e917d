#pragma once

#include <vector>

#include "huntbranch/branching_law.hpp"
#include "huntbranch/linalg.hpp"
#include "huntbranch/motion.hpp"

namespace huntbranch {

/// Generator of the first-moment (Feynman-Kac) semigroup: the motion
/// generator plus the diagonal potential (A(x) - 1) beta(x).
///
/// exp(tM)(x,y) is the expected number of particles at y at time t for a
/// population started from one particle at x.
class FeynmanKacOperator {
 public:
  FeynmanKacOperator(MotionModel motion, const BranchingLaw& law);

  const Matrix& matrix() const noexcept { return matrix_; }
  const MotionModel& motion() const noexcept { return motion_; }
  std::span<const double> potential() const noexcept { return potential_; }
  std::span<const double> mean_offspring() const noexcept { return mean_; }
  std::span<const double> beta() const noexcept { return beta_; }
  std::size_t size() const noexcept { return motion_.size(); }

  /// exp(tM), t >= 0.
  Matrix semigroup(double t) const;
  /// Density p^{(1-A)beta}(t,x,y) = exp(tM)(x,y) / m(y), t > 0.
  Matrix density(double t) const;
  /// E_{delta_x} <f, X_t> = sum_y exp(tM)(x,y) f(y).
  double expected_observable(State x, std::span<const double> f, double t) const;

 private:
  MotionModel motion_;
  Matrix matrix_;
  std::vector<double> potential_;
  std::vector<double> mean_;
  std::vector<double> beta_;
};

FeynmanKacOperator build_operator(const MotionModel& motion, const BranchingLaw& law);

/// Principal eigen-triple. Normalization: sum phi phi~ m = 1 and
/// sum phi~ m = 1. phi~ is the eigenfunction of the m-dual, so phi~ m is the
/// left Perron vector of M.
struct SpectralTriple {
  double lambda1 = 0.0;
  Vector phi;
  Vector phi_tilde;
  /// lambda1 minus the next-largest real part (+inf for a single state).
  double gap = 0.0;
  bool supercritical = false;
  /// sum phi^2 phi~ m, finite on a finite state space.
  double phi2_phi_tilde_integral = 0.0;
  double right_residual = 0.0;
  double left_residual = 0.0;
};

enum class EigenMethod { kAuto, kDense, kPower };

struct EigenOptions {
  EigenMethod method = EigenMethod::kAuto;
  std::size_t dense_limit = 500;     ///< kAuto uses the dense solver up to this size
  double tolerance = 1e-12;          ///< power-iteration residual target
  std::size_t max_iterations = 100000;
};

/// Throws SpectralError if the motion is reducible, the leading eigenvalue
/// is complex beyond 1e-10 or not simple, or residuals exceed 1e-10.
SpectralTriple principal_triple(const FeynmanKacOperator& op, const EigenOptions& options = {});

/// Fit of the ultracontractivity envelope
///   D(t) = max_{x,y} |exp(-lambda1 t) p(t,x,y) / (phi(x) phi~(y)) - 1| <= c exp(-nu t).
struct IUFit {
  double c = 0.0;
  double nu = 0.0;
  double gap = 0.0;  ///< spectral gap, reported next to nu without being assumed equal
  std::vector<double> times;
  std::vector<double> deviations;
};

/// Least-squares fit of log D(t) = log c - nu t over the grid; c is then
/// raised until the envelope dominates every observation. Throws
/// std::invalid_argument for a bad grid and SpectralError when D does not
/// decrease (inconsistent triple).
IUFit iu_fit(const FeynmanKacOperator& op, const SpectralTriple& triple, std::span<const double> t_grid);

/// Max normalized deviation D(t) at one time.
double iu_deviation(const FeynmanKacOperator& op, const SpectralTriple& triple, double t);

/// Doob h-transform by phi: conservative motion with q^phi(x,y) = q(x,y) phi(y)/phi(x)
/// and the same weights m. Its stationary law is phi phi~ m. Throws
/// SpectralError if row sums of phi^{-1}(M - lambda1)phi do not vanish.
MotionModel h_transform(const FeynmanKacOperator& op, const SpectralTriple& triple);

/// p^phi(t,x,y) = exp(-lambda1 t) p^{(1-A)beta}(t,x,y) phi(y) / phi(x), computed
/// from the operator (not from the transformed motion).
Matrix h_transformed_density(const FeynmanKacOperator& op, const SpectralTriple& triple, double t);

/// phi(x) phi~(x) m(x).
Vector invariant_measure(const FeynmanKacOperator& op, const SpectralTriple& triple);

}  // namespace huntbranch
