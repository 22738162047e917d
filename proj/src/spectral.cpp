#include "huntbranch/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "huntbranch/errors.hpp"

namespace huntbranch {

namespace {

constexpr double kImagTolerance = 1e-10;
constexpr double kResidualTolerance = 1e-10;
constexpr double kSimpleTolerance = 1e-10;
constexpr double kDeviationFloor = 1e-13;

Eigen::Map<const Vector> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// Positive representative of a Perron vector; throws if signs are mixed.
Vector perron_orient(Vector v, const char* which) {
  if (v.sum() < 0.0) v = -v;
  const double scale = v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) <= 0.0) {
      if (v(i) < -1e-9 * scale)
        throw SpectralError(std::string("principal_triple: ") + which + " eigenvector is not positive");
      throw SpectralError(std::string("principal_triple: ") + which +
                          " eigenvector has a vanishing entry (reducible model?)");
    }
  }
  return v;
}

struct PowerResult {
  double rho;
  Vector vec;
};

// A few inverse-iteration steps just above rho: the shift makes the power
// ratio close to 1, which leaves the vector short of full precision.
PowerResult polish(const Matrix& b, double rho, Vector v) {
  const auto n = b.rows();
  const double sigma = rho + 1e-8 * std::max(1.0, std::abs(rho));
  const Eigen::PartialPivLU<Matrix> lu(b - sigma * Matrix::Identity(n, n));
  for (int step = 0; step < 3; ++step) {
    const Vector w = lu.solve(v);
    v = w / w.sum();
  }
  const Vector bv = b * v;
  return {bv.sum() / v.sum(), v};
}

PowerResult power_iterate(const Matrix& b, const EigenOptions& options) {
  const auto n = b.rows();
  Vector v = Vector::Constant(n, 1.0 / static_cast<double>(n));
  double rho = 0.0;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    Vector w = b * v;
    rho = w.sum() / v.sum();
    const double residual = (w - rho * v).cwiseAbs().maxCoeff() / v.cwiseAbs().maxCoeff();
    v = w / w.sum();
    if (residual <= options.tolerance * std::max(1.0, std::abs(rho))) return polish(b, rho, v);
  }
  throw SpectralError("principal_triple: power iteration did not converge in " +
                      std::to_string(options.max_iterations) + " iterations");
}

// Magnitude of the dominant eigenvalue of b after removing the Perron pair.
double deflated_magnitude(const Matrix& b, double rho, const Vector& right, const Vector& left,
                          const EigenOptions& options) {
  const auto n = b.rows();
  if (n == 1) return 0.0;
  const Matrix deflated = b - rho * right * left.transpose() / left.dot(right);
  Vector v = Vector::LinSpaced(n, 1.0, 2.0);
  v -= right * (left.dot(v) / left.dot(right));
  double magnitude = 0.0;
  const std::size_t iterations = std::min<std::size_t>(options.max_iterations, 20000);
  for (std::size_t it = 0; it < iterations; ++it) {
    const Vector w = deflated * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = norm / v.norm();
    v = w / norm;
    if (it > 10 && std::abs(next - magnitude) <= options.tolerance * std::max(1.0, next)) return next;
    magnitude = next;
  }
  return magnitude;
}

}  // namespace

FeynmanKacOperator::FeynmanKacOperator(MotionModel motion, const BranchingLaw& law)
    : motion_(std::move(motion)) {
  if (law.size() != motion_.size())
    throw ModelError("build_operator: motion has " + std::to_string(motion_.size()) +
                     " states but branching law has " + std::to_string(law.size()));
  mean_ = mean_offspring_vector(law);
  beta_.assign(law.betas().begin(), law.betas().end());
  potential_.resize(size());
  matrix_ = motion_.generator();
  for (State x = 0; x < size(); ++x) {
    potential_[x] = (mean_[x] - 1.0) * beta_[x];
    matrix_(x, x) += potential_[x];
  }
}

Matrix FeynmanKacOperator::semigroup(double t) const {
  if (!(t >= 0.0)) throw std::invalid_argument("semigroup: t must be nonnegative");
  return expm(t * matrix_);
}

Matrix FeynmanKacOperator::density(double t) const {
  if (!(t > 0.0)) throw std::invalid_argument("density: t must be positive");
  Matrix p = semigroup(t);
  for (Eigen::Index y = 0; y < p.cols(); ++y) p.col(y) /= motion_.weight(static_cast<State>(y));
  return p;
}

double FeynmanKacOperator::expected_observable(State x, std::span<const double> f, double t) const {
  if (f.size() != size()) throw std::invalid_argument("expected_observable: f has wrong length");
  return semigroup(t).row(x).dot(as_vector(f));
}

FeynmanKacOperator build_operator(const MotionModel& motion, const BranchingLaw& law) {
  return FeynmanKacOperator(motion, law);
}

SpectralTriple principal_triple(const FeynmanKacOperator& op, const EigenOptions& options) {
  if (!op.motion().irreducible())
    throw SpectralError("principal_triple: motion is reducible; the Perron root need not be simple");
  const Matrix& m_op = op.matrix();
  const auto n = m_op.rows();
  const auto weights = as_vector(op.motion().weights());

  const bool dense = options.method == EigenMethod::kDense ||
                     (options.method == EigenMethod::kAuto &&
                      static_cast<std::size_t>(n) <= options.dense_limit);
  SpectralTriple triple;
  Vector right;
  Vector left;  // left Perron vector of M, i.e. phi~ m up to scale
  if (dense) {
    const Eigen::EigenSolver<Matrix> solver(m_op);
    if (solver.info() != Eigen::Success) throw SpectralError("principal_triple: eigensolver failed");
    const auto& values = solver.eigenvalues();
    Eigen::Index lead = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (values(i).real() > values(lead).real()) lead = i;
    if (std::abs(values(lead).imag()) > kImagTolerance)
      throw SpectralError("principal_triple: leading eigenvalue is complex");
    triple.lambda1 = values(lead).real();
    double second = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != lead) second = std::max(second, values(i).real());
    triple.gap = triple.lambda1 - second;
    if (triple.gap < kSimpleTolerance)
      throw SpectralError("principal_triple: leading eigenvalue is not simple");
    right = perron_orient(solver.eigenvectors().col(lead).real(), "right");

    const Eigen::EigenSolver<Matrix> dual_solver(m_op.transpose());
    const auto& dual_values = dual_solver.eigenvalues();
    Eigen::Index dual_lead = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (dual_values(i).real() > dual_values(dual_lead).real()) dual_lead = i;
    left = perron_orient(dual_solver.eigenvectors().col(dual_lead).real(), "left");
  } else {
    double shift = 1.0;
    for (Eigen::Index x = 0; x < n; ++x)
      shift = std::max(shift, 2.0 * std::abs(m_op(x, x)) + std::abs(op.potential()[x]) + 1.0);
    const Matrix b = m_op + shift * Matrix::Identity(n, n);
    const PowerResult r = power_iterate(b, options);
    const PowerResult l = power_iterate(b.transpose(), options);
    triple.lambda1 = r.rho - shift;
    right = perron_orient(r.vec, "right");
    left = perron_orient(l.vec, "left");
    triple.gap = r.rho - deflated_magnitude(b, r.rho, right, left, options);
  }

  // sum phi~ m = 1, then sum phi phi~ m = 1.
  const Vector phi_tilde_m = left / left.sum();
  triple.phi_tilde = phi_tilde_m.cwiseQuotient(weights);
  triple.phi = right / right.dot(phi_tilde_m);

  triple.right_residual = (m_op * triple.phi - triple.lambda1 * triple.phi).cwiseAbs().maxCoeff();
  // Dual generator in L^2(m): D_m^{-1} M^T D_m.
  const Vector dual_applied = (m_op.transpose() * phi_tilde_m).cwiseQuotient(weights);
  triple.left_residual = (dual_applied - triple.lambda1 * triple.phi_tilde).cwiseAbs().maxCoeff();
  if (triple.right_residual > kResidualTolerance || triple.left_residual > kResidualTolerance)
    throw SpectralError("principal_triple: eigen-residual above tolerance (right " +
                        std::to_string(triple.right_residual) + ", left " +
                        std::to_string(triple.left_residual) + ")");

  triple.supercritical = triple.lambda1 > 0.0;
  triple.phi2_phi_tilde_integral = (triple.phi.array().square() * phi_tilde_m.array()).sum();
  if (n == 1) triple.gap = std::numeric_limits<double>::infinity();
  return triple;
}

double iu_deviation(const FeynmanKacOperator& op, const SpectralTriple& triple, double t) {
  const Matrix p = op.density(t);
  const double decay = std::exp(-triple.lambda1 * t);
  double worst = 0.0;
  for (Eigen::Index x = 0; x < p.rows(); ++x)
    for (Eigen::Index y = 0; y < p.cols(); ++y)
      worst = std::max(worst,
                       std::abs(decay * p(x, y) / (triple.phi(x) * triple.phi_tilde(y)) - 1.0));
  return worst;
}

IUFit iu_fit(const FeynmanKacOperator& op, const SpectralTriple& triple, std::span<const double> t_grid) {
  if (t_grid.size() < 4) throw std::invalid_argument("iu_fit: need at least 4 grid points");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > 0.0)) throw std::invalid_argument("iu_fit: grid must be strictly positive");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1]))
      throw std::invalid_argument("iu_fit: grid must be strictly increasing");
  }
  IUFit fit;
  fit.gap = triple.gap;
  fit.times.assign(t_grid.begin(), t_grid.end());
  for (double t : t_grid) fit.deviations.push_back(iu_deviation(op, triple, t));

  if (!(fit.deviations.back() < fit.deviations.front()))
    throw SpectralError("iu_fit: deviation does not decrease over the grid; triple is inconsistent");

  // Points at rounding level carry no slope information.
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (fit.deviations[i] <= kDeviationFloor) continue;
    const double y = std::log(fit.deviations[i]);
    st += t_grid[i];
    sy += y;
    stt += t_grid[i] * t_grid[i];
    sty += t_grid[i] * y;
    ++used;
  }
  if (used < 2) {
    // Already converged to rounding level everywhere but the first point.
    fit.nu = triple.gap;
    fit.c = fit.deviations.front() * std::exp(fit.nu * t_grid.front());
  } else {
    const double nd = static_cast<double>(used);
    const double slope = (nd * sty - st * sy) / (nd * stt - st * st);
    const double intercept = (sy - slope * st) / nd;
    fit.nu = -slope;
    fit.c = std::exp(intercept);
  }
  if (!(fit.nu > 0.0))
    throw SpectralError("iu_fit: fitted decay rate is not positive; triple is inconsistent");

  for (std::size_t i = 0; i < t_grid.size(); ++i)
    fit.c = std::max(fit.c, fit.deviations[i] * std::exp(fit.nu * t_grid[i]));
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    while (fit.c * std::exp(-fit.nu * t_grid[i]) < fit.deviations[i])
      fit.c = std::nextafter(fit.c, std::numeric_limits<double>::infinity());
  return fit;
}

MotionModel h_transform(const FeynmanKacOperator& op, const SpectralTriple& triple) {
  const Matrix& m_op = op.matrix();
  const auto n = m_op.rows();
  Matrix rates = Matrix::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    double row = 0.0;
    for (Eigen::Index y = 0; y < n; ++y) {
      if (x == y) continue;
      rates(x, y) = m_op(x, y) * triple.phi(y) / triple.phi(x);
      row += rates(x, y);
    }
    // Row sum of phi^{-1}(M - lambda1)phi at x.
    const double residual = row + m_op(x, x) - triple.lambda1;
    if (std::abs(residual) > kResidualTolerance * (1.0 + std::abs(m_op(x, x)) + std::abs(triple.lambda1)))
      throw SpectralError("h_transform: row sum residual " + std::to_string(residual) + " at state " +
                          std::to_string(x) + "; triple is inconsistent with the operator");
  }
  const auto w = op.motion().weights();
  return MotionModel::build(std::vector<double>(w.begin(), w.end()), rates,
                            std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Matrix h_transformed_density(const FeynmanKacOperator& op, const SpectralTriple& triple, double t) {
  Matrix p = op.density(t) * std::exp(-triple.lambda1 * t);
  for (Eigen::Index x = 0; x < p.rows(); ++x)
    for (Eigen::Index y = 0; y < p.cols(); ++y) p(x, y) *= triple.phi(y) / triple.phi(x);
  return p;
}

Vector invariant_measure(const FeynmanKacOperator& op, const SpectralTriple& triple) {
  return triple.phi.cwiseProduct(triple.phi_tilde).cwiseProduct(as_vector(op.motion().weights()));
}

}  // namespace huntbranch
