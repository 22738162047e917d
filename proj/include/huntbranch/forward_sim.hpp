#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "huntbranch/branching_law.hpp"
#include "huntbranch/motion.hpp"
#include "huntbranch/rng.hpp"
#include "huntbranch/spectral.hpp"

namespace huntbranch {

/// (replicate, birth order): unique within a realization, stable across reruns.
struct ParticleId {
  std::uint64_t replicate = 0;
  std::uint64_t birth_order = 0;
  auto operator<=>(const ParticleId&) const = default;
};

struct Particle {
  State state = 0;
  ParticleId id;
  /// Product of 1/r over the fissions of all ancestors (times the initial mass).
  double mass = 1.0;
};

/// Population at one time. `counts` is always filled; `particles` only when
/// the run records particles (sorted by id).
struct PointMeasure {
  double time = 0.0;
  std::vector<std::uint64_t> counts;
  std::vector<Particle> particles;

  std::uint64_t total() const noexcept;
};

enum class EventKind : std::uint8_t { kJump, kFission, kKilling };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::kJump;
  ParticleId particle;
  State from = 0;
  State to = 0;                    ///< destination for jumps; equals `from` otherwise
  std::uint32_t offspring = 0;     ///< fission only; children are born at `from`
  std::uint64_t first_child = 0;   ///< children take birth orders first_child .. first_child+offspring-1
};

struct EventLog {
  std::vector<Event> events;
  std::vector<double> checkpoints;
};

enum class SimStatus : std::uint8_t { kCompleted, kOverflow };

struct SimConfig {
  double start_time = 0.0;
  double horizon = 0.0;             ///< absolute end time, >= start_time
  std::vector<double> checkpoints;  ///< sorted, within [start_time, horizon]
  std::uint64_t population_cap = 1'000'000;
  std::uint64_t master_seed = 0;
  std::uint64_t replicate = 0;
  double initial_mass = 1.0;        ///< mass of each initial particle
  std::uint64_t first_birth_order = 0;
  bool record_events = true;
  bool record_particles = true;
};

struct SimResult {
  SimStatus status = SimStatus::kCompleted;
  /// Horizon, or the time of the fission that would have exceeded the cap.
  double end_time = 0.0;
  EventLog log;
  /// One per checkpoint reached before the run stopped.
  std::vector<PointMeasure> snapshots;
};

/// Exact simulation of the branching system under P. Each particle carries a
/// motion clock (its state's exit rate) and a fission clock (beta); the next
/// event is drawn over the whole population, the firing particle uniformly
/// among those in the chosen state. A fission replaces the particle by k
/// children at the same state, k from the offspring law. If a fission would
/// push the population above the cap the run stops with kOverflow and keeps
/// everything recorded so far.
SimResult simulate(const MotionModel& motion, const BranchingLaw& law, std::span<const State> initial,
                   const SimConfig& config, Rng& rng);

/// <f, X> = sum over particles of f(state).
double observable(const PointMeasure& snapshot, std::span<const double> f);

struct MartingalePoint {
  double time = 0.0;
  double w = 0.0;  ///< exp(-lambda1 t) <phi, X_t>
  double u = 0.0;  ///< exp(-lambda1 t) <f phi, X_t>
};

std::vector<MartingalePoint> martingale_path(std::span<const PointMeasure> snapshots,
                                             const SpectralTriple& triple, std::span<const double> f);

}  // namespace huntbranch
