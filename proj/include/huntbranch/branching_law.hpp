#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "huntbranch/motion.hpp"
#include "huntbranch/rng.hpp"

namespace huntbranch {

/// Parametric heavy-tailed offspring family on k >= 2.
enum class HeavyFamily {
  kK2Log2,  ///< p_k ∝ 1 / (k^2 log^2 k)
  kPower,   ///< p_k ∝ k^-alpha, alpha > 2
};

struct HeavyTailDescriptor {
  HeavyFamily family = HeavyFamily::kK2Log2;
  double alpha = 0.0;       ///< exponent for kPower
  std::uint64_t kmax = 0;   ///< truncation bound; 0 means untruncated
};

/// A series evaluated by explicit summation plus a bound on what was left out.
struct SeriesValue {
  double value = 0.0;
  double tail_bound = 0.0;
};

/// Offspring distribution of a single state. p_0 = p_1 = 0 always.
///
/// Finite laws and truncated heavy laws hold an explicit pmf table and can be
/// sampled. Untruncated heavy laws only support series evaluation with tail
/// bounds and the symbolic l-functional analysis.
class OffspringLaw {
 public:
  /// `p[k]` is P(K = k). Requires p[0] = p[1] = 0 and total mass 1 within 1e-12.
  static OffspringLaw finite(std::vector<double> p);
  static OffspringLaw heavy(const HeavyTailDescriptor& descriptor);

  bool has_table() const noexcept { return !pmf_.empty(); }
  /// Largest count with positive mass (0 for untruncated laws).
  std::uint64_t max_count() const noexcept;
  double prob(std::uint64_t k) const;
  std::span<const double> pmf() const noexcept { return pmf_; }
  const std::optional<HeavyTailDescriptor>& heavy_descriptor() const noexcept { return heavy_; }

  /// Throws std::logic_error for untruncated laws.
  std::uint64_t sample(Rng& rng) const;

  SeriesValue generating_function(double z) const;
  SeriesValue mean() const;

  /// Untruncated family weight w(k), normalized by the family constant.
  double family_prob(double k) const;
  /// Bound on the untruncated family's mean beyond the table (informational).
  double untruncated_mean_tail() const;
  /// Untruncated family mass beyond kmax (0 for finite or untruncated laws).
  double untruncated_tail_mass() const;

 private:
  OffspringLaw() = default;
  void build_cdf();

  std::vector<double> pmf_;
  std::vector<double> cdf_;
  std::optional<HeavyTailDescriptor> heavy_;
  double family_norm_ = 1.0;  // sum_{k>=2} w(k) for the untruncated family
};

/// Branching rate beta(x) and per-state offspring laws.
class BranchingLaw {
 public:
  static BranchingLaw build(std::vector<double> beta,
                            std::vector<std::shared_ptr<const OffspringLaw>> offspring);
  /// Same offspring law at every state.
  static BranchingLaw uniform(std::vector<double> beta, std::shared_ptr<const OffspringLaw> law);

  std::size_t size() const noexcept { return beta_.size(); }
  double beta(State x) const { return beta_.at(x); }
  std::span<const double> betas() const noexcept { return beta_; }
  const OffspringLaw& offspring(State x) const { return *offspring_.at(x); }
  const std::shared_ptr<const OffspringLaw>& offspring_ptr(State x) const { return offspring_.at(x); }

 private:
  std::vector<double> beta_;
  std::vector<std::shared_ptr<const OffspringLaw>> offspring_;
};

/// psi(x, z) = sum_k p_k(x) z^k; throws std::domain_error for |z| > 1.
SeriesValue evaluate_gf(const BranchingLaw& law, State x, double z);

/// A(x) = sum_k k p_k(x). Throws ModelError when the tail bound exceeds
/// kMeanTailTolerance (the law is not usable as a bounded-mean law).
SeriesValue mean_offspring(const BranchingLaw& law, State x);
inline constexpr double kMeanTailTolerance = 1e-9;

/// Per-state A(x) for all states.
std::vector<double> mean_offspring_vector(const BranchingLaw& law);

/// p^_k = k p_k / A, as a finite law. Throws for untruncated laws.
OffspringLaw size_biased(const BranchingLaw& law, State x);

/// Maps a law with p_1 > 0 to the equivalent law with p_1 = 0:
/// beta' = beta (1 - p_1), p'_k = p_k / (1 - p_1) for k >= 2.
struct ReducedBranching {
  double beta;
  std::vector<double> p;
};
ReducedBranching remove_single_offspring(double beta, std::vector<double> p);

struct StateLlogL {
  double value = 0.0;      ///< l(x); partial sum over the analysed blocks if divergent
  bool divergent = false;
  double block_ratio = 0.0;  ///< (64 b_64)/(32 b_32) for heavy laws, 0 otherwise
};

struct LlogLReport {
  std::vector<StateLlogL> states;
  /// sum_x phi~(x) beta(x) l(x) m(x), present when phi~ m was supplied and finite.
  std::optional<double> integral;
  bool integral_divergent = false;
  int dyadic_blocks = 64;
  double divergence_ratio_threshold = 0.75;
};

/// l(x) = sum_k k phi(x) log+(k phi(x)) p_k(x).
///
/// Heavy laws are analysed on their untruncated family over dyadic blocks
/// [2^j, 2^(j+1)), j = 1..64; the series is declared divergent when block
/// sums decay no faster than 1/j, i.e. when (64 b_64)/(32 b_32) exceeds the
/// threshold. `phi_tilde_m`, when non-empty, is phi~(x) m(x) per state and
/// enables the integral.
LlogLReport l_functional(const BranchingLaw& law, std::span<const double> phi,
                         std::span<const double> phi_tilde_m = {});

}  // namespace huntbranch
