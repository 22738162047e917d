#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "huntbranch/branching_law.hpp"
#include "huntbranch/forward_sim.hpp"
#include "huntbranch/motion.hpp"
#include "huntbranch/spectral.hpp"
#include "huntbranch/stats.hpp"

namespace huntbranch {

struct EnsembleConfig {
  std::vector<double> checkpoints;  ///< sorted; the last one is the horizon
  std::size_t replicates = 1000;
  std::uint64_t master_seed = 0;
  std::uint64_t population_cap = 1'000'000;
  unsigned threads = 0;
};

struct ReplicateOutcome {
  SimStatus status = SimStatus::kCompleted;
  bool extinct = false;
  std::vector<double> w;  ///< W_t(phi) per checkpoint
  std::vector<double> u;  ///< U_t(f phi) per checkpoint
  std::vector<std::vector<std::uint64_t>> counts;  ///< X_t({y}) per checkpoint
};

struct CheckpointSummary {
  double time = 0.0;
  stats::Summary w;
  std::size_t n_accepted = 0;
  std::size_t n_overflow = 0;
};

/// Forward replicates aggregated by replicate index. Overflowed replicates
/// are kept (with status) but excluded from every summary.
struct EnsembleResult {
  State x0 = 0;
  std::vector<double> checkpoints;
  double lambda1 = 0.0;
  std::vector<double> phi;
  std::vector<double> weights;
  std::vector<double> f;
  std::vector<ReplicateOutcome> replicates;
  std::vector<CheckpointSummary> summaries;
  std::size_t n_accepted = 0;
  std::size_t n_overflow = 0;
  std::size_t n_extinct = 0;
};

/// Replicate i runs on stream (master_seed, i). Throws ExperimentError when
/// every replicate overflowed.
EnsembleResult run_ensemble(const MotionModel& motion, const BranchingLaw& law, const SpectralTriple& triple,
                            State x0, std::span<const double> f, const EnsembleConfig& config);

/// Largest fraction of excluded replicates for which a verdict is given.
inline constexpr double kMaxExcludedFraction = 0.2;
/// Fewest accepted replicates with W_t > 0 for a limit verdict.
inline constexpr std::size_t kMinSurvivors = 100;

struct MartingaleReport {
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> ses;
  std::vector<double> z;
  double target = 0.0;  ///< phi(x0)
  bool pass = false;
  bool refused = false;
};

/// Mean W_t within kZThreshold SE of phi(x0) at every checkpoint.
MartingaleReport verify_martingale(const EnsembleResult& ensemble);

struct SllnVerdict {
  double target = 0.0;  ///< sum phi~ f m
  double tolerance = 0.0;
  std::vector<double> times;
  std::vector<double> medians;
  std::vector<double> q25;
  std::vector<double> q75;
  std::vector<std::size_t> n_used;
  bool median_within_tolerance = false;
  bool iqr_shrinking = false;
  std::optional<bool> horizon_adequate;  ///< c exp(-nu T) < tolerance / 10, when a fit is supplied
  bool pass = false;
};

/// Ratio R_t(f) = exp(-lambda1 t) <X_t, f> / W_t(phi) per replicate. Passes
/// when the terminal median is within `tolerance` of the target and the
/// inter-quartile width shrinks over the last three checkpoints. Throws
/// ExperimentError with fewer than kMinSurvivors usable replicates.
SllnVerdict verify_slln(const EnsembleResult& ensemble, const SpectralTriple& triple, std::span<const double> f,
                        double tolerance, const std::optional<IUFit>& iu = std::nullopt);

struct RatioLimitReport {
  std::vector<State> subset;
  std::vector<double> times;
  std::vector<double> expected_counts;      ///< E_{delta_x0}[X_t(B)]
  std::vector<double> mean_abs_deviation;   ///< mean |X_t(B)/E X_t(B) - W_t/phi(x0)|
  std::vector<double> max_abs_deviation;
  bool decreasing_tail = false;             ///< over the last three checkpoints
};

RatioLimitReport verify_ratio_limit(const EnsembleResult& ensemble, const FeynmanKacOperator& op,
                                    std::span<const State> subset);

struct DichotomyConfig {
  std::vector<double> checkpoints{2.0, 4.0, 6.0};
  std::size_t replicates = 1000;
  std::uint64_t master_seed = 0;
  std::uint64_t population_cap = 1'000'000;
  unsigned threads = 0;
  State x0 = 0;
  /// Control median may move by at most this fraction over the last two checkpoints.
  double stability_tolerance = 0.2;
  double median_low = 0.1;
  double median_high = 10.0;
  /// Refuse when the expected number of fissions that the truncation would
  /// have cut off by the horizon reaches this value.
  double truncation_threshold = 0.1;
};

enum class Verdict { kPass, kFail, kRefused };

struct LawTrack {
  double lambda1 = 0.0;
  double phi_x0 = 0.0;
  std::vector<CheckpointSummary> summaries;
  std::vector<double> z_mean;  ///< (mean W_t - phi(x0)) / se
  std::size_t n_overflow = 0;
};

struct DichotomyReport {
  Verdict verdict = Verdict::kRefused;
  std::string reason;
  double heavy_block_ratio = 0.0;
  double expected_truncated_fissions = 0.0;
  LawTrack heavy;
  LawTrack control;
  bool control_stable = false;
  bool control_in_range = false;
  bool heavy_decreasing = false;
  bool means_consistent = false;
};

/// Runs the heavy law and a finite control law from x0 with their own
/// eigen-triples. The heavy law must be flagged divergent by l_functional.
DichotomyReport dichotomy_experiment(const MotionModel& motion, const BranchingLaw& heavy_law,
                                     const BranchingLaw& control_law, const DichotomyConfig& config);

/// Expected number of fissions in [0, T] from one particle at x0 whose size
/// would exceed each state's truncation bound under the untruncated family.
double expected_truncated_fissions(const FeynmanKacOperator& op, const BranchingLaw& law, State x0, double horizon);

}  // namespace huntbranch
