#include "huntbranch/branching_law.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "huntbranch/errors.hpp"

namespace huntbranch {

namespace {

constexpr double kPmfTolerance = 1e-12;
// Summation cutoff for untruncated heavy laws.
constexpr std::uint64_t kUntruncatedCutoff = 1'000'000;
// Terms summed explicitly when normalizing an untruncated family.
constexpr std::uint64_t kNormCutoff = 1u << 20;
constexpr int kDyadicBlocks = 64;
constexpr int kDirectBlockLimit = 16;
constexpr int kSimpsonPanels = 128;
constexpr double kDivergenceRatio = 0.75;

// Neumaier compensated sum.
class Accumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double family_weight(const HeavyTailDescriptor& d, double k) {
  switch (d.family) {
    case HeavyFamily::kK2Log2: {
      const double lk = std::log(k);
      return 1.0 / (k * k * lk * lk);
    }
    case HeavyFamily::kPower:
      return std::pow(k, -d.alpha);
  }
  return 0.0;
}

// Integral bounds on sum_{k>K} w(k) and sum_{k>K} k w(k) (both summands decrease).
double family_tail_mass(const HeavyTailDescriptor& d, double k) {
  switch (d.family) {
    case HeavyFamily::kK2Log2: {
      const double lk = std::log(k);
      return 1.0 / (k * lk * lk);
    }
    case HeavyFamily::kPower:
      return std::pow(k, 1.0 - d.alpha) / (d.alpha - 1.0);
  }
  return 0.0;
}

double family_tail_mean(const HeavyTailDescriptor& d, double k) {
  switch (d.family) {
    case HeavyFamily::kK2Log2:
      return 1.0 / std::log(k);
    case HeavyFamily::kPower:
      return std::pow(k, 2.0 - d.alpha) / (d.alpha - 2.0);
  }
  return 0.0;
}

double family_normalizer(const HeavyTailDescriptor& d) {
  Accumulator acc;
  for (std::uint64_t k = 2; k <= kNormCutoff; ++k) acc.add(family_weight(d, static_cast<double>(k)));
  acc.add(family_tail_mass(d, static_cast<double>(kNormCutoff) + 0.5));
  return acc.value();
}

double log_plus(double x) { return x > 1.0 ? std::log(x) : 0.0; }

// Block sum of g over integers in [lo, hi].
template <typename F>
double block_sum(F&& g, double lo, double hi, bool direct) {
  if (direct) {
    Accumulator acc;
    for (double k = lo; k <= hi; k += 1.0) acc.add(g(k));
    return acc.value();
  }
  // Midpoint-corrected integral, Simpson in u = log x.
  const double a = std::log(lo - 0.5);
  const double b = std::log(hi + 0.5);
  const double h = (b - a) / kSimpsonPanels;
  auto integrand = [&](double u) {
    const double x = std::exp(u);
    return g(x) * x;
  };
  Accumulator acc;
  acc.add(integrand(a));
  acc.add(integrand(b));
  for (int i = 1; i < kSimpsonPanels; ++i) acc.add((i % 2 == 1 ? 4.0 : 2.0) * integrand(a + i * h));
  return acc.value() * h / 3.0;
}

}  // namespace

OffspringLaw OffspringLaw::finite(std::vector<double> p) {
  if (p.size() < 3) throw ModelError("offspring: pmf must have support in k >= 2");
  if (p[0] != 0.0 || p[1] != 0.0)
    throw ModelError("offspring: p_0 and p_1 must be zero (use remove_single_offspring for p_1 > 0)");
  Accumulator total;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= 0.0) || !std::isfinite(p[k]))
      throw ModelError("offspring: p_" + std::to_string(k) + " must be a nonnegative number");
    total.add(p[k]);
  }
  if (std::abs(total.value() - 1.0) > kPmfTolerance)
    throw ModelError("offspring: probabilities sum to " + std::to_string(total.value()));
  while (p.size() > 3 && p.back() == 0.0) p.pop_back();
  OffspringLaw law;
  law.pmf_ = std::move(p);
  law.build_cdf();
  return law;
}

OffspringLaw OffspringLaw::heavy(const HeavyTailDescriptor& descriptor) {
  if (descriptor.family == HeavyFamily::kPower && !(descriptor.alpha > 2.0))
    throw ModelError("offspring: power family needs alpha > 2 for a finite mean");
  if (descriptor.kmax != 0 && descriptor.kmax < 2)
    throw ModelError("offspring: kmax must be at least 2");
  OffspringLaw law;
  law.heavy_ = descriptor;
  law.family_norm_ = family_normalizer(descriptor);
  if (descriptor.kmax != 0) {
    law.pmf_.assign(descriptor.kmax + 1, 0.0);
    Accumulator total;
    for (std::uint64_t k = 2; k <= descriptor.kmax; ++k) {
      law.pmf_[k] = family_weight(descriptor, static_cast<double>(k));
      total.add(law.pmf_[k]);
    }
    const double z = total.value();
    for (double& pk : law.pmf_) pk /= z;
    law.build_cdf();
  }
  return law;
}

void OffspringLaw::build_cdf() {
  cdf_.resize(pmf_.size());
  Accumulator acc;
  for (std::size_t k = 0; k < pmf_.size(); ++k) {
    acc.add(pmf_[k]);
    cdf_[k] = acc.value();
  }
}

std::uint64_t OffspringLaw::max_count() const noexcept {
  return pmf_.empty() ? 0 : static_cast<std::uint64_t>(pmf_.size() - 1);
}

double OffspringLaw::prob(std::uint64_t k) const {
  if (has_table()) return k < pmf_.size() ? pmf_[k] : 0.0;
  return k < 2 ? 0.0 : family_prob(static_cast<double>(k));
}

double OffspringLaw::family_prob(double k) const {
  if (!heavy_) return prob(static_cast<std::uint64_t>(k));
  return k < 2.0 ? 0.0 : family_weight(*heavy_, k) / family_norm_;
}

double OffspringLaw::untruncated_mean_tail() const {
  if (!heavy_) return 0.0;
  const double cut = heavy_->kmax != 0 ? static_cast<double>(heavy_->kmax)
                                       : static_cast<double>(kUntruncatedCutoff);
  return family_tail_mean(*heavy_, cut) / family_norm_;
}

double OffspringLaw::untruncated_tail_mass() const {
  if (!heavy_ || heavy_->kmax == 0) return 0.0;
  return family_tail_mass(*heavy_, static_cast<double>(heavy_->kmax)) / family_norm_;
}

std::uint64_t OffspringLaw::sample(Rng& rng) const {
  if (!has_table()) throw std::logic_error("offspring: untruncated heavy law cannot be sampled; set kmax");
  const double u = rng.uniform() * cdf_.back();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto k = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(
      it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
  return std::max<std::uint64_t>(k, 2);
}

SeriesValue OffspringLaw::generating_function(double z) const {
  if (has_table()) {
    // Horner from the top.
    double value = 0.0;
    for (std::size_t k = pmf_.size(); k-- > 0;) value = value * z + pmf_[k];
    return {value, 0.0};
  }
  Accumulator acc;
  double zk = z * z;
  for (std::uint64_t k = 2; k <= kUntruncatedCutoff; ++k, zk *= z)
    acc.add(family_prob(static_cast<double>(k)) * zk);
  const double tail = family_tail_mass(*heavy_, static_cast<double>(kUntruncatedCutoff)) / family_norm_;
  return {acc.value(), std::abs(z) < 1.0 ? tail * std::pow(std::abs(z), kUntruncatedCutoff + 1.0) : tail};
}

SeriesValue OffspringLaw::mean() const {
  Accumulator acc;
  if (has_table()) {
    for (std::size_t k = 2; k < pmf_.size(); ++k) acc.add(static_cast<double>(k) * pmf_[k]);
    return {acc.value(), 0.0};
  }
  for (std::uint64_t k = 2; k <= kUntruncatedCutoff; ++k) {
    const double kd = static_cast<double>(k);
    acc.add(kd * family_prob(kd));
  }
  return {acc.value(), untruncated_mean_tail()};
}

BranchingLaw BranchingLaw::build(std::vector<double> beta,
                                 std::vector<std::shared_ptr<const OffspringLaw>> offspring) {
  if (beta.empty()) throw ModelError("branching law: empty state space");
  if (beta.size() != offspring.size())
    throw ModelError("branching law: beta and offspring tables have different lengths");
  for (std::size_t x = 0; x < beta.size(); ++x) {
    if (!(beta[x] >= 0.0) || !std::isfinite(beta[x]))
      throw ModelError("branching law: beta(" + std::to_string(x) + ") must be nonnegative");
    if (!offspring[x]) throw ModelError("branching law: missing offspring law at state " + std::to_string(x));
  }
  BranchingLaw law;
  law.beta_ = std::move(beta);
  law.offspring_ = std::move(offspring);
  return law;
}

BranchingLaw BranchingLaw::uniform(std::vector<double> beta, std::shared_ptr<const OffspringLaw> law) {
  std::vector<std::shared_ptr<const OffspringLaw>> table(beta.size(), std::move(law));
  return build(std::move(beta), std::move(table));
}

SeriesValue evaluate_gf(const BranchingLaw& law, State x, double z) {
  if (!(std::abs(z) <= 1.0)) throw std::domain_error("evaluate_gf: |z| must be at most 1");
  return law.offspring(x).generating_function(z);
}

SeriesValue mean_offspring(const BranchingLaw& law, State x) {
  const SeriesValue a = law.offspring(x).mean();
  if (a.tail_bound > kMeanTailTolerance)
    throw ModelError("mean_offspring: tail bound " + std::to_string(a.tail_bound) + " at state " +
                     std::to_string(x) + " exceeds tolerance; the mean is not resolved");
  return a;
}

std::vector<double> mean_offspring_vector(const BranchingLaw& law) {
  std::vector<double> a(law.size());
  for (State x = 0; x < law.size(); ++x) a[x] = mean_offspring(law, x).value;
  return a;
}

OffspringLaw size_biased(const BranchingLaw& law, State x) {
  const OffspringLaw& base = law.offspring(x);
  if (!base.has_table()) throw std::logic_error("size_biased: untruncated heavy law has no pmf table");
  const double a = base.mean().value;
  const auto pmf = base.pmf();
  std::vector<double> biased(pmf.size(), 0.0);
  Accumulator total;
  for (std::size_t k = 2; k < pmf.size(); ++k) {
    biased[k] = static_cast<double>(k) * pmf[k] / a;
    total.add(biased[k]);
  }
  // Remove the rounding residue so the table passes the 1e-12 normalization check.
  const double z = total.value();
  for (double& p : biased) p /= z;
  return OffspringLaw::finite(std::move(biased));
}

ReducedBranching remove_single_offspring(double beta, std::vector<double> p) {
  if (p.size() < 2) throw ModelError("remove_single_offspring: pmf too short");
  if (p[0] != 0.0) throw ModelError("remove_single_offspring: p_0 must be zero");
  const double p1 = p[1];
  if (!(p1 >= 0.0 && p1 < 1.0)) throw ModelError("remove_single_offspring: need 0 <= p_1 < 1");
  ReducedBranching out{beta * (1.0 - p1), std::move(p)};
  out.p[1] = 0.0;
  for (std::size_t k = 2; k < out.p.size(); ++k) out.p[k] /= (1.0 - p1);
  return out;
}

LlogLReport l_functional(const BranchingLaw& law, std::span<const double> phi,
                         std::span<const double> phi_tilde_m) {
  if (phi.size() != law.size()) throw std::invalid_argument("l_functional: phi has wrong length");
  if (!phi_tilde_m.empty() && phi_tilde_m.size() != law.size())
    throw std::invalid_argument("l_functional: phi~ m has wrong length");
  LlogLReport report;
  report.dyadic_blocks = kDyadicBlocks;
  report.divergence_ratio_threshold = kDivergenceRatio;
  report.states.resize(law.size());

  for (State x = 0; x < law.size(); ++x) {
    if (!(phi[x] > 0.0)) throw std::invalid_argument("l_functional: phi must be strictly positive");
    const OffspringLaw& offspring = law.offspring(x);
    const double ph = phi[x];
    StateLlogL& out = report.states[x];
    if (!offspring.heavy_descriptor()) {
      Accumulator acc;
      const auto pmf = offspring.pmf();
      for (std::size_t k = 2; k < pmf.size(); ++k) {
        const double kp = static_cast<double>(k) * ph;
        acc.add(kp * log_plus(kp) * pmf[k]);
      }
      out.value = acc.value();
      continue;
    }
    auto term = [&](double k) {
      const double kp = k * ph;
      return kp * log_plus(kp) * offspring.family_prob(k);
    };
    std::vector<double> blocks(kDyadicBlocks + 1, 0.0);
    Accumulator total;
    for (int j = 1; j <= kDyadicBlocks; ++j) {
      const double lo = std::ldexp(1.0, j);
      const double hi = std::ldexp(1.0, j + 1) - 1.0;
      blocks[j] = block_sum(term, lo, hi, j <= kDirectBlockLimit);
      total.add(blocks[j]);
    }
    const int half = kDyadicBlocks / 2;
    const double early = half * blocks[half];
    out.block_ratio = early > 0.0 ? (kDyadicBlocks * blocks[kDyadicBlocks]) / early : 0.0;
    out.divergent = out.block_ratio > kDivergenceRatio;
    out.value = total.value();
  }

  if (!phi_tilde_m.empty()) {
    Accumulator acc;
    for (State x = 0; x < law.size(); ++x) {
      if (law.beta(x) <= 0.0) continue;
      if (report.states[x].divergent) {
        report.integral_divergent = true;
        continue;
      }
      acc.add(phi_tilde_m[x] * law.beta(x) * report.states[x].value);
    }
    if (!report.integral_divergent) report.integral = acc.value();
  }
  return report;
}

}  // namespace huntbranch
