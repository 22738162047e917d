#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "huntbranch/linalg.hpp"
#include "huntbranch/rng.hpp"

namespace huntbranch {

using State = std::uint32_t;

/// Finite-state continuous-time jump process with optional killing.
///
/// States are 0..N-1 with reference weights m(x) > 0. Off-diagonal rates
/// q(x,y) >= 0 and killing rates k(x) >= 0 define the (sub-Markov) generator
///   G(x,y) = q(x,y),  G(x,x) = -(sum_y q(x,y) + k(x)).
/// Transition densities are taken with respect to m:
///   p(t,x,y) = [exp(tG)](x,y) / m(y).
/// Immutable after construction.
class MotionModel {
 public:
  /// Throws ModelError on an empty state space, a non-positive weight, a
  /// negative rate, or inconsistent dimensions. Diagonal entries of `rates`
  /// are ignored.
  static MotionModel build(std::vector<double> weights, const Matrix& rates,
                           std::vector<double> kill_rates);

  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  double weight(State x) const { return weights_.at(x); }
  double rate(State x, State y) const { return x == y ? 0.0 : generator_(x, y); }
  double kill_rate(State x) const { return kill_.at(x); }
  /// Total exit rate sum_y q(x,y) + k(x).
  double exit_rate(State x) const { return -generator_(x, x); }
  const Matrix& generator() const noexcept { return generator_; }

  /// Embedded jump chain strongly connected, i.e. p(t,x,y) > 0 for all t > 0.
  bool irreducible() const noexcept { return irreducible_; }
  bool conservative() const noexcept { return conservative_; }

 private:
  MotionModel() = default;

  std::vector<double> weights_;
  std::vector<double> kill_;
  Matrix generator_;
  bool irreducible_ = false;
  bool conservative_ = false;
};

MotionModel build_motion(std::vector<double> weights, const Matrix& rates,
                         std::vector<double> kill_rates);

/// Nearest-neighbour birth-death chain on an n-point grid of [0,1] with
/// reflecting ends: rate diffusivity/h^2 to each neighbour, h = 1/(n-1),
/// uniform weights 1/n. Stand-in for a reflected diffusion.
MotionModel grid_diffusion(std::size_t n, double diffusivity, double kill_rate = 0.0);

/// Sub-stochastic transition matrix P_t(x,{y}) = [exp(tG)](x,y), t >= 0.
Matrix transition_matrix(const MotionModel& model, double t);

/// p(t,x,y); throws std::invalid_argument for t <= 0.
double transition_density(const MotionModel& model, double t, State x, State y);

/// Full density matrix p(t,.,.) for t > 0.
Matrix density_matrix(const MotionModel& model, double t);

/// (P_t g)(x) = sum_y p(t,x,y) g(y) m(y).
Vector apply_semigroup(const MotionModel& model, double t, const Vector& g);

/// Dual semigroup (P^_t f)(x) = sum_y p(t,y,x) f(y) m(y).
Vector apply_dual_semigroup(const MotionModel& model, double t, const Vector& f);

/// Stationary probability vector of a conservative irreducible model.
Vector stationary_distribution(const MotionModel& model);

struct Jump {
  double time;
  State state;
};

/// One sample path of the motion on [0, end_time].
struct Trajectory {
  State initial_state = 0;
  std::vector<Jump> jumps;
  double end_time = 0.0;
  bool killed = false;
  std::optional<double> kill_time;

  /// Current state at time t (the last state before killing if killed).
  State state_at(double t) const;
  State final_state() const { return jumps.empty() ? initial_state : jumps.back().state; }
  bool alive_at(double t) const { return !killed || t < *kill_time; }
};

/// Exact Gillespie path: Exponential(exit rate) holding times, next state
/// proportional to q(x,.) and the killing rate.
Trajectory sample_path(const MotionModel& model, State x0, double t_end, Rng& rng);

}  // namespace huntbranch
