#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "huntbranch/branching_law.hpp"
#include "huntbranch/forward_sim.hpp"
#include "huntbranch/motion.hpp"
#include "huntbranch/rng.hpp"
#include "huntbranch/spectral.hpp"
#include "huntbranch/stats.hpp"

namespace huntbranch {

/// Independent P-copy started by one non-spine child of a spine fission.
struct Subtree {
  std::uint32_t child_index = 0;  ///< position among the fission's offspring
  double birth_time = 0.0;
  State birth_state = 0;
  double founder_mass = 1.0;      ///< product of 1/r over the spine fissions up to its birth
  SimStatus status = SimStatus::kCompleted;
  std::vector<PointMeasure> snapshots;  ///< at the record's checkpoints >= birth_time
  EventLog log;                         ///< empty unless subtree events are recorded
};

struct SpineFission {
  double time = 0.0;
  State state = 0;
  std::uint32_t offspring = 0;    ///< r_u, size-biased
  std::uint32_t spine_child = 0;  ///< uniform on {0, .., r_u - 1}
  std::vector<Subtree> subtrees;  ///< r_u - 1 entries when subtrees are simulated
};

/// One realization of the branching system under the spine measure.
struct SpineRecord {
  State x0 = 0;
  double horizon = 0.0;
  std::vector<double> checkpoints;
  std::uint64_t replicate = 0;
  Trajectory spine_path;  ///< under the h-transformed motion
  std::vector<SpineFission> fissions;
  bool subtrees_simulated = false;
  SimStatus status = SimStatus::kCompleted;  ///< kOverflow if any subtree overflowed

  State spine_state_at(double t) const { return spine_path.state_at(t); }
  std::size_t fissions_by(double t) const;
};

struct SpineConfig {
  double horizon = 0.0;
  std::vector<double> checkpoints;
  std::uint64_t population_cap = 1'000'000;
  std::uint64_t master_seed = 0;
  std::uint64_t replicate = 0;
  bool simulate_subtrees = true;
  bool record_subtree_events = false;
  bool record_subtree_particles = true;
};

/// Samples the five-step spine construction: the spine moves as the
/// h-transform of the motion by phi, fissions at rate A beta along its path,
/// produces size-biased families, continues in a uniformly chosen child, and
/// the other children start independent forward simulations. Subtree streams
/// are derived from (replicate seed, fission index, child index).
class SpineSampler {
 public:
  SpineSampler(const MotionModel& motion, const BranchingLaw& law, const SpectralTriple& triple);

  SpineRecord sample(State x0, const SpineConfig& config, Rng& rng) const;

  /// Keeps the spine skeleton of `record` and redraws every subtree from
  /// streams derived from `seed`.
  SpineRecord resample_subtrees(const SpineRecord& record, const SpineConfig& config, std::uint64_t seed) const;

  const MotionModel& spine_motion() const noexcept { return spine_motion_; }
  const SpectralTriple& triple() const noexcept { return triple_; }
  double fission_rate(State x) const { return fission_rate_.at(x); }
  const OffspringLaw& biased_offspring(State x) const { return biased_.at(x); }

 private:
  void grow_subtrees(SpineRecord& record, const SpineConfig& config, std::uint64_t stream_seed) const;

  MotionModel motion_;
  BranchingLaw law_;
  SpectralTriple triple_;
  MotionModel spine_motion_;
  std::vector<OffspringLaw> biased_;
  std::vector<double> fission_rate_;
};

SpineRecord simulate_spine(const MotionModel& motion, const BranchingLaw& law, const SpectralTriple& triple,
                           State x0, const SpineConfig& config, Rng& rng);

/// Sum over particles alive at checkpoint t of prod 1/r over their ancestors.
/// Requires subtrees simulated with particles recorded. Identically 1.
double unit_mass_identity(const SpineRecord& record, double t);

/// Spine particle plus every subtree particle alive at checkpoint t (counts only).
PointMeasure reconstructed_population(const SpineRecord& record, double t, std::size_t states);

struct SpineObservables {
  double martingale = 0.0;       ///< M_t(phi) = exp(-lambda1 t) <phi, X_t> / phi(x0)
  double decomposition_rhs = 0.0;  ///< exp(-lambda1 t) phi(Y_t) + sum (r_u - 1) phi(Y_zeta_u) exp(-lambda1 zeta_u)
  double unit_mass = 0.0;        ///< sum of ancestral 1/r products over alive particles
};

SpineObservables spine_observables(const SpineRecord& record, const SpectralTriple& triple, double t);
/// Right-hand side only; needs no subtrees.
double decomposition_rhs(const SpineRecord& record, const SpectralTriple& triple, double t);

struct EstimateComparison {
  std::size_t n = 0;
  std::size_t excluded = 0;
  double mean_a = 0.0, se_a = 0.0;
  double mean_b = 0.0, se_b = 0.0;
  double z_difference = 0.0;
  std::optional<double> oracle;
  double z_a_oracle = 0.0;
  double z_b_oracle = 0.0;
  bool pass = false;
};

/// (a) phi(x0) M_t(phi) from reconstructed populations against (b) the spine
/// right-hand side, over one ensemble. Paired difference z-statistic; with an
/// oracle both estimates must also sit within kZThreshold SE of it.
EstimateComparison spine_decomposition_check(std::span<const SpineRecord> records, const SpectralTriple& triple,
                                             double t, std::optional<double> oracle = std::nullopt);

/// Conditional form on one skeleton: mean of phi(x0) M_t(phi) over `inner`
/// subtree redraws against the skeleton's right-hand side.
EstimateComparison nested_decomposition_check(const SpineSampler& sampler, const SpineRecord& skeleton,
                                              const SpineConfig& config, double t, std::size_t inner,
                                              std::uint64_t seed);

struct MeasureChangeConfig {
  std::size_t replicates = 10000;
  std::uint64_t master_seed = 0;
  std::uint64_t population_cap = 1'000'000;
  unsigned threads = 0;
  double max_overflow_fraction = 0.001;
};

using PopulationFunctional = std::function<double(const PointMeasure&)>;

/// (a) E_P[M_t(phi) g(X_t)] by forward simulation against (b) E_Q[g(X_t)] by
/// spine reconstruction. Throws ExperimentError when overflowed replicates
/// exceed max_overflow_fraction on either side.
EstimateComparison measure_change_check(const MotionModel& motion, const BranchingLaw& law,
                                        const SpectralTriple& triple, State x0, double t,
                                        const PopulationFunctional& g, const MeasureChangeConfig& config,
                                        std::optional<double> oracle = std::nullopt);

/// Runs `replicates` spine realizations in parallel, replicate i on stream (master_seed, i).
std::vector<SpineRecord> sample_spines(const SpineSampler& sampler, State x0, const SpineConfig& config,
                                       std::size_t replicates, unsigned threads);

/// Chi-squared test of spine fission counts on [0,t] against Poisson(mean).
stats::ChiSquaredResult fission_count_test(std::span<const SpineRecord> records, double t, double poisson_mean);

/// Chi-squared test of spine offspring counts against the size-biased law of `state`.
stats::ChiSquaredResult spine_offspring_test(std::span<const SpineRecord> records, const SpineSampler& sampler,
                                             State state);

struct OccupancyCheck {
  std::vector<double> observed;
  std::vector<double> se;
  std::vector<double> expected;
  std::vector<double> z;
  bool pass = false;
};

/// Spine state frequencies at time t against the invariant law phi phi~ m.
OccupancyCheck spine_occupancy_check(std::span<const SpineRecord> records, const SpectralTriple& triple,
                                     std::span<const double> weights, double t);

}  // namespace huntbranch
