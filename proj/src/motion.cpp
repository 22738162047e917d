#include "huntbranch/motion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "huntbranch/errors.hpp"

namespace huntbranch {

namespace {

bool strongly_connected(const Matrix& generator) {
  const auto n = static_cast<std::size_t>(generator.rows());
  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      for (std::size_t y = 0; y < n; ++y) {
        const double q = transpose ? generator(y, x) : generator(x, y);
        if (y != x && q > 0.0 && !seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
  };
  return reaches_all(false) && reaches_all(true);
}

}  // namespace

MotionModel MotionModel::build(std::vector<double> weights, const Matrix& rates,
                               std::vector<double> kill_rates) {
  const std::size_t n = weights.size();
  if (n == 0) throw ModelError("motion: empty state space");
  if (static_cast<std::size_t>(rates.rows()) != n || static_cast<std::size_t>(rates.cols()) != n)
    throw ModelError("motion: rate matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  if (kill_rates.size() != n) throw ModelError("motion: kill vector has wrong length");
  for (std::size_t x = 0; x < n; ++x) {
    if (!(weights[x] > 0.0) || !std::isfinite(weights[x]))
      throw ModelError("motion: weight m(" + std::to_string(x) + ") must be positive");
    if (!(kill_rates[x] >= 0.0) || !std::isfinite(kill_rates[x]))
      throw ModelError("motion: kill rate at state " + std::to_string(x) + " must be nonnegative");
  }

  MotionModel model;
  model.generator_ = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t x = 0; x < n; ++x) {
    double exit = kill_rates[x];
    for (std::size_t y = 0; y < n; ++y) {
      if (x == y) continue;
      const double q = rates(x, y);
      if (!(q >= 0.0) || !std::isfinite(q))
        throw ModelError("motion: rate q(" + std::to_string(x) + "," + std::to_string(y) +
                         ") must be nonnegative");
      model.generator_(x, y) = q;
      exit += q;
    }
    model.generator_(x, x) = -exit;
  }
  model.conservative_ =
      std::all_of(kill_rates.begin(), kill_rates.end(), [](double k) { return k == 0.0; });
  model.weights_ = std::move(weights);
  model.kill_ = std::move(kill_rates);
  model.irreducible_ = strongly_connected(model.generator_);
  return model;
}

MotionModel build_motion(std::vector<double> weights, const Matrix& rates,
                         std::vector<double> kill_rates) {
  return MotionModel::build(std::move(weights), rates, std::move(kill_rates));
}

MotionModel grid_diffusion(std::size_t n, double diffusivity, double kill_rate) {
  if (n < 2) throw ModelError("grid_diffusion: need at least 2 grid points");
  if (!(diffusivity > 0.0)) throw ModelError("grid_diffusion: diffusivity must be positive");
  const double h = 1.0 / static_cast<double>(n - 1);
  const double q = diffusivity / (h * h);
  const auto size = static_cast<Eigen::Index>(n);
  Matrix rates = Matrix::Zero(size, size);
  for (Eigen::Index i = 0; i + 1 < size; ++i) {
    rates(i, i + 1) = q;
    rates(i + 1, i) = q;
  }
  return MotionModel::build(std::vector<double>(n, 1.0 / static_cast<double>(n)), rates,
                            std::vector<double>(n, kill_rate));
}

Matrix transition_matrix(const MotionModel& model, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("transition_matrix: t must be nonnegative");
  return expm(t * model.generator());
}

Matrix density_matrix(const MotionModel& model, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("transition_density: t must be positive");
  Matrix p = transition_matrix(model, t);
  for (Eigen::Index y = 0; y < p.cols(); ++y) p.col(y) /= model.weight(static_cast<State>(y));
  return p;
}

double transition_density(const MotionModel& model, double t, State x, State y) {
  if (x >= model.size() || y >= model.size())
    throw std::out_of_range("transition_density: state out of range");
  return density_matrix(model, t)(x, y);
}

Vector apply_semigroup(const MotionModel& model, double t, const Vector& g) {
  return transition_matrix(model, t) * g;
}

Vector apply_dual_semigroup(const MotionModel& model, double t, const Vector& f) {
  // sum_y p(t,y,x) f(y) m(y) = sum_y P(y,x) f(y) m(y) / m(x)
  const Eigen::Map<const Vector> m(model.weights().data(), static_cast<Eigen::Index>(model.size()));
  const Vector fm = f.cwiseProduct(m);
  return (transition_matrix(model, t).transpose() * fm).cwiseQuotient(m);
}

Vector stationary_distribution(const MotionModel& model) {
  if (!model.conservative()) throw ModelError("stationary_distribution: model is not conservative");
  if (!model.irreducible()) throw ModelError("stationary_distribution: model is not irreducible");
  const auto n = static_cast<Eigen::Index>(model.size());
  // Solve pi G = 0 with sum(pi) = 1 by replacing one equation.
  Matrix a = model.generator().transpose();
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  return a.fullPivLu().solve(rhs);
}

State Trajectory::state_at(double t) const {
  State current = initial_state;
  for (const Jump& jump : jumps) {
    if (jump.time > t) break;
    current = jump.state;
  }
  return current;
}

Trajectory sample_path(const MotionModel& model, State x0, double t_end, Rng& rng) {
  if (x0 >= model.size()) throw std::out_of_range("sample_path: initial state out of range");
  if (!(t_end >= 0.0)) throw std::invalid_argument("sample_path: t_end must be nonnegative");
  Trajectory path;
  path.initial_state = x0;
  path.end_time = t_end;
  State x = x0;
  double t = 0.0;
  for (;;) {
    const double exit = model.exit_rate(x);
    if (exit <= 0.0) break;
    t += rng.exponential(exit);
    if (t > t_end) break;
    double target = rng.uniform() * exit;
    std::optional<State> next;
    for (State y = 0; y < model.size(); ++y) {
      if (y == x) continue;
      const double q = model.rate(x, y);
      if (q <= 0.0) continue;
      if (target < q) {
        next = y;
        break;
      }
      target -= q;
    }
    if (!next && model.kill_rate(x) <= 0.0) {
      // Rounding left the target past the last positive rate.
      for (State y = static_cast<State>(model.size()); y-- > 0;)
        if (y != x && model.rate(x, y) > 0.0) {
          next = y;
          break;
        }
    }
    if (!next) {
      path.killed = true;
      path.kill_time = t;
      break;
    }
    x = *next;
    path.jumps.push_back({t, x});
  }
  return path;
}

}  // namespace huntbranch
