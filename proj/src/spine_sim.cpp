#include "huntbranch/spine_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "huntbranch/errors.hpp"
#include "huntbranch/parallel.hpp"

namespace huntbranch {

namespace {

const PointMeasure* snapshot_at(const Subtree& subtree, double t) {
  for (const PointMeasure& snap : subtree.snapshots)
    if (snap.time == t) return &snap;
  return nullptr;
}

const PointMeasure& require_snapshot(const Subtree& subtree, double t) {
  const PointMeasure* snap = snapshot_at(subtree, t);
  if (snap == nullptr)
    throw std::invalid_argument("spine: time " + std::to_string(t) +
                                " is not a checkpoint reached by every subtree");
  return *snap;
}

void require_subtrees(const SpineRecord& record, double t) {
  if (!record.subtrees_simulated)
    for (const SpineFission& f : record.fissions)
      if (f.time <= t) throw std::logic_error("spine: subtrees were not simulated for this record");
}

double phi_at(const SpectralTriple& triple, State x) { return triple.phi(static_cast<Eigen::Index>(x)); }

double paired_z(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return stats::z_score(stats::mean(d), stats::standard_error(d), 0.0);
}

}  // namespace

std::size_t SpineRecord::fissions_by(double t) const {
  return static_cast<std::size_t>(
      std::count_if(fissions.begin(), fissions.end(), [t](const SpineFission& f) { return f.time <= t; }));
}

SpineSampler::SpineSampler(const MotionModel& motion, const BranchingLaw& law, const SpectralTriple& triple)
    : motion_(motion), law_(law), triple_(triple), spine_motion_(h_transform(build_operator(motion, law), triple)) {
  if (static_cast<std::size_t>(triple.phi.size()) != motion.size())
    throw ModelError("spine: triple does not match the motion's state space");
  biased_.reserve(law.size());
  fission_rate_.resize(law.size());
  for (State x = 0; x < law.size(); ++x) {
    const double a = mean_offspring(law, x).value;
    fission_rate_[x] = a * law.beta(x);
    biased_.push_back(size_biased(law, x));
  }
}

SpineRecord SpineSampler::sample(State x0, const SpineConfig& config, Rng& rng) const {
  if (x0 >= motion_.size()) throw std::out_of_range("spine: initial state out of range");
  if (!(config.horizon >= 0.0)) throw std::invalid_argument("spine: horizon must be nonnegative");
  for (std::size_t i = 0; i < config.checkpoints.size(); ++i) {
    const double c = config.checkpoints[i];
    if (c < 0.0 || c > config.horizon) throw std::invalid_argument("spine: checkpoint outside [0, horizon]");
    if (i > 0 && c < config.checkpoints[i - 1]) throw std::invalid_argument("spine: checkpoints not sorted");
  }

  SpineRecord record;
  record.x0 = x0;
  record.horizon = config.horizon;
  record.checkpoints = config.checkpoints;
  record.replicate = config.replicate;
  record.spine_path.initial_state = x0;
  record.spine_path.end_time = config.horizon;

  State x = x0;
  double t = 0.0;
  for (;;) {
    const double exit = spine_motion_.exit_rate(x);
    const double fission = fission_rate_[x];
    const double total = exit + fission;
    if (total <= 0.0) break;
    t += rng.exponential(total);
    if (t > config.horizon) break;
    if (rng.uniform() * total < fission) {
      const auto r = static_cast<std::uint32_t>(biased_[x].sample(rng));
      const auto child = static_cast<std::uint32_t>(rng.below(r));
      record.fissions.push_back({t, x, r, child, {}});
      continue;
    }
    double pick = rng.uniform() * exit;
    State to = x;
    for (State y = 0; y < spine_motion_.size(); ++y) {
      const double q = spine_motion_.rate(x, y);
      if (q <= 0.0) continue;
      to = y;
      if (pick < q) break;
      pick -= q;
    }
    x = to;
    record.spine_path.jumps.push_back({t, x});
  }

  if (config.simulate_subtrees) grow_subtrees(record, config, derive_seed(config.master_seed, config.replicate));
  return record;
}

void SpineSampler::grow_subtrees(SpineRecord& record, const SpineConfig& config, std::uint64_t stream_seed) const {
  record.subtrees_simulated = true;
  record.status = SimStatus::kCompleted;
  double mass = 1.0;
  for (std::size_t i = 0; i < record.fissions.size(); ++i) {
    SpineFission& fission = record.fissions[i];
    fission.subtrees.clear();
    mass /= static_cast<double>(fission.offspring);
    const std::uint64_t fission_seed = derive_seed(stream_seed, i);

    SimConfig sim;
    sim.start_time = fission.time;
    sim.horizon = config.horizon;
    for (double c : config.checkpoints)
      if (c >= fission.time) sim.checkpoints.push_back(c);
    sim.population_cap = config.population_cap;
    sim.master_seed = config.master_seed;
    sim.replicate = config.replicate;
    sim.initial_mass = mass;
    sim.record_events = config.record_subtree_events;
    sim.record_particles = config.record_subtree_particles;
    const State start[] = {fission.state};

    for (std::uint32_t j = 0; j < fission.offspring; ++j) {
      if (j == fission.spine_child) continue;
      Rng rng(derive_seed(fission_seed, j));
      SimResult run = simulate(motion_, law_, start, sim, rng);
      if (run.status == SimStatus::kOverflow) record.status = SimStatus::kOverflow;
      fission.subtrees.push_back(
          {j, fission.time, fission.state, mass, run.status, std::move(run.snapshots), std::move(run.log)});
    }
  }
}

SpineRecord SpineSampler::resample_subtrees(const SpineRecord& record, const SpineConfig& config,
                                            std::uint64_t seed) const {
  SpineRecord copy = record;
  SpineConfig cfg = config;
  cfg.horizon = record.horizon;
  cfg.checkpoints = record.checkpoints;
  grow_subtrees(copy, cfg, seed);
  return copy;
}

SpineRecord simulate_spine(const MotionModel& motion, const BranchingLaw& law, const SpectralTriple& triple,
                           State x0, const SpineConfig& config, Rng& rng) {
  return SpineSampler(motion, law, triple).sample(x0, config, rng);
}

double unit_mass_identity(const SpineRecord& record, double t) {
  if (t > record.horizon) throw std::invalid_argument("unit_mass_identity: t beyond the record's horizon");
  require_subtrees(record, t);
  double spine_mass = 1.0;
  double total = 0.0;
  for (const SpineFission& fission : record.fissions) {
    if (fission.time > t) break;
    spine_mass /= static_cast<double>(fission.offspring);
    for (const Subtree& subtree : fission.subtrees) {
      const PointMeasure& snap = require_snapshot(subtree, t);
      if (snap.particles.empty() && snap.total() > 0)
        throw std::logic_error("unit_mass_identity: subtree particles were not recorded");
      for (const Particle& p : snap.particles) total += p.mass;
    }
  }
  return total + spine_mass;
}

PointMeasure reconstructed_population(const SpineRecord& record, double t, std::size_t states) {
  require_subtrees(record, t);
  PointMeasure pm;
  pm.time = t;
  pm.counts.assign(states, 0);
  pm.counts.at(record.spine_state_at(t)) += 1;
  for (const SpineFission& fission : record.fissions) {
    if (fission.time > t) break;
    for (const Subtree& subtree : fission.subtrees) {
      const PointMeasure& snap = require_snapshot(subtree, t);
      for (std::size_t s = 0; s < states; ++s) pm.counts[s] += snap.counts.at(s);
    }
  }
  return pm;
}

double decomposition_rhs(const SpineRecord& record, const SpectralTriple& triple, double t) {
  double rhs = std::exp(-triple.lambda1 * t) * phi_at(triple, record.spine_state_at(t));
  for (const SpineFission& fission : record.fissions) {
    if (fission.time > t) break;
    rhs += (fission.offspring - 1.0) * phi_at(triple, fission.state) * std::exp(-triple.lambda1 * fission.time);
  }
  return rhs;
}

SpineObservables spine_observables(const SpineRecord& record, const SpectralTriple& triple, double t) {
  const auto states = static_cast<std::size_t>(triple.phi.size());
  const PointMeasure pop = reconstructed_population(record, t, states);
  double phi_sum = 0.0;
  for (std::size_t s = 0; s < states; ++s)
    phi_sum += static_cast<double>(pop.counts[s]) * phi_at(triple, static_cast<State>(s));
  SpineObservables obs;
  obs.martingale = std::exp(-triple.lambda1 * t) * phi_sum / phi_at(triple, record.x0);
  obs.decomposition_rhs = decomposition_rhs(record, triple, t);
  obs.unit_mass = unit_mass_identity(record, t);
  return obs;
}

EstimateComparison spine_decomposition_check(std::span<const SpineRecord> records, const SpectralTriple& triple,
                                             double t, std::optional<double> oracle) {
  std::vector<double> lhs, rhs;
  EstimateComparison out;
  for (const SpineRecord& record : records) {
    if (t > record.horizon) throw ExperimentError("spine_decomposition_check: t beyond a record's horizon");
    if (record.status == SimStatus::kOverflow) {
      ++out.excluded;
      continue;
    }
    const auto states = static_cast<std::size_t>(triple.phi.size());
    const PointMeasure pop = reconstructed_population(record, t, states);
    double phi_sum = 0.0;
    for (std::size_t s = 0; s < states; ++s)
      phi_sum += static_cast<double>(pop.counts[s]) * phi_at(triple, static_cast<State>(s));
    lhs.push_back(std::exp(-triple.lambda1 * t) * phi_sum);  // phi(x0) M_t(phi)
    rhs.push_back(decomposition_rhs(record, triple, t));
  }
  if (lhs.empty()) throw ExperimentError("spine_decomposition_check: no usable records");
  out.n = lhs.size();
  out.mean_a = stats::mean(lhs);
  out.se_a = stats::standard_error(lhs);
  out.mean_b = stats::mean(rhs);
  out.se_b = stats::standard_error(rhs);
  out.z_difference = paired_z(lhs, rhs);
  out.pass = std::abs(out.z_difference) < stats::kZThreshold;
  if (oracle) {
    out.oracle = oracle;
    out.z_a_oracle = stats::z_score(out.mean_a, out.se_a, *oracle);
    out.z_b_oracle = stats::z_score(out.mean_b, out.se_b, *oracle);
    out.pass = out.pass && std::abs(out.z_a_oracle) < stats::kZThreshold &&
               std::abs(out.z_b_oracle) < stats::kZThreshold;
  }
  return out;
}

EstimateComparison nested_decomposition_check(const SpineSampler& sampler, const SpineRecord& skeleton,
                                              const SpineConfig& config, double t, std::size_t inner,
                                              std::uint64_t seed) {
  if (inner < 2) throw std::invalid_argument("nested_decomposition_check: need at least 2 inner replicates");
  const SpectralTriple& triple = sampler.triple();
  const auto states = static_cast<std::size_t>(triple.phi.size());
  std::vector<double> lhs;
  EstimateComparison out;
  for (std::size_t k = 0; k < inner; ++k) {
    const SpineRecord redraw = sampler.resample_subtrees(skeleton, config, derive_seed(seed, k));
    if (redraw.status == SimStatus::kOverflow) {
      ++out.excluded;
      continue;
    }
    const PointMeasure pop = reconstructed_population(redraw, t, states);
    double phi_sum = 0.0;
    for (std::size_t s = 0; s < states; ++s)
      phi_sum += static_cast<double>(pop.counts[s]) * phi_at(triple, static_cast<State>(s));
    lhs.push_back(std::exp(-triple.lambda1 * t) * phi_sum);
  }
  if (lhs.size() < 2) throw ExperimentError("nested_decomposition_check: too many overflowed redraws");
  out.n = lhs.size();
  out.mean_a = stats::mean(lhs);
  out.se_a = stats::standard_error(lhs);
  out.mean_b = decomposition_rhs(skeleton, triple, t);
  out.z_difference = stats::z_difference(out.mean_a, out.se_a, out.mean_b, 0.0);
  out.pass = std::abs(out.z_difference) < stats::kZThreshold;
  return out;
}

std::vector<SpineRecord> sample_spines(const SpineSampler& sampler, State x0, const SpineConfig& config,
                                       std::size_t replicates, unsigned threads) {
  std::vector<SpineRecord> records(replicates);
  parallel_for(replicates, threads, [&](std::size_t i) {
    SpineConfig cfg = config;
    cfg.replicate = i;
    Rng rng = Rng::for_replicate(config.master_seed, i);
    records[i] = sampler.sample(x0, cfg, rng);
  });
  return records;
}

EstimateComparison measure_change_check(const MotionModel& motion, const BranchingLaw& law,
                                        const SpectralTriple& triple, State x0, double t,
                                        const PopulationFunctional& g, const MeasureChangeConfig& config,
                                        std::optional<double> oracle) {
  const std::size_t n = config.replicates;
  if (n < 2) throw std::invalid_argument("measure_change_check: need at least 2 replicates");
  const double phi0 = phi_at(triple, x0);
  const double decay = std::exp(-triple.lambda1 * t);
  const auto states = motion.size();
  std::vector<double> phi(states);
  for (State s = 0; s < states; ++s) phi[s] = phi_at(triple, s);

  // P side: forward runs weighted by M_t(phi).
  const std::uint64_t p_seed = derive_seed(config.master_seed, 0);
  std::vector<double> p_values(n);
  std::vector<char> p_overflow(n, 0);
  parallel_for(n, config.threads, [&](std::size_t i) {
    SimConfig sim;
    sim.horizon = t;
    sim.checkpoints = {t};
    sim.population_cap = config.population_cap;
    sim.master_seed = p_seed;
    sim.replicate = i;
    sim.record_events = false;
    sim.record_particles = false;
    Rng rng = Rng::for_replicate(p_seed, i);
    const State start[] = {x0};
    const SimResult run = simulate(motion, law, start, sim, rng);
    if (run.status == SimStatus::kOverflow) {
      p_overflow[i] = 1;
      return;
    }
    const PointMeasure& snap = run.snapshots.back();
    p_values[i] = decay * observable(snap, phi) / phi0 * g(snap);
  });

  // Q side: spine reconstructions.
  const SpineSampler sampler(motion, law, triple);
  SpineConfig spine;
  spine.horizon = t;
  spine.checkpoints = {t};
  spine.population_cap = config.population_cap;
  spine.master_seed = derive_seed(config.master_seed, 1);
  spine.record_subtree_particles = false;
  const std::vector<SpineRecord> records = sample_spines(sampler, x0, spine, n, config.threads);

  std::vector<double> a, b;
  std::size_t p_excluded = 0, q_excluded = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p_overflow[i])
      ++p_excluded;
    else
      a.push_back(p_values[i]);
    if (records[i].status == SimStatus::kOverflow)
      ++q_excluded;
    else
      b.push_back(g(reconstructed_population(records[i], t, states)));
  }
  const double limit = config.max_overflow_fraction * static_cast<double>(n);
  if (static_cast<double>(p_excluded) > limit || static_cast<double>(q_excluded) > limit)
    throw ExperimentError("measure_change_check: overflow contamination above " +
                          std::to_string(config.max_overflow_fraction * 100.0) + "% of replicates");

  EstimateComparison out;
  out.n = n;
  out.excluded = p_excluded + q_excluded;
  out.mean_a = stats::mean(a);
  out.se_a = stats::standard_error(a);
  out.mean_b = stats::mean(b);
  out.se_b = stats::standard_error(b);
  out.z_difference = stats::z_difference(out.mean_a, out.se_a, out.mean_b, out.se_b);
  out.pass = std::abs(out.z_difference) < stats::kZThreshold;
  if (oracle) {
    out.oracle = oracle;
    out.z_a_oracle = stats::z_score(out.mean_a, out.se_a, *oracle);
    out.z_b_oracle = stats::z_score(out.mean_b, out.se_b, *oracle);
    out.pass = out.pass && std::abs(out.z_a_oracle) < stats::kZThreshold &&
               std::abs(out.z_b_oracle) < stats::kZThreshold;
  }
  return out;
}

stats::ChiSquaredResult fission_count_test(std::span<const SpineRecord> records, double t, double poisson_mean) {
  std::vector<std::uint64_t> observed;
  for (const SpineRecord& r : records) {
    const std::size_t k = r.fissions_by(t);
    if (k >= observed.size()) observed.resize(k + 1, 0);
    ++observed[k];
  }
  std::vector<double> probs(observed.size());
  for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = stats::poisson_pmf(k, poisson_mean);
  return stats::chi_squared_gof(observed, probs);
}

stats::ChiSquaredResult spine_offspring_test(std::span<const SpineRecord> records, const SpineSampler& sampler,
                                             State state) {
  const auto pmf = sampler.biased_offspring(state).pmf();
  std::vector<std::uint64_t> observed(pmf.size(), 0);
  for (const SpineRecord& r : records)
    for (const SpineFission& f : r.fissions)
      if (f.state == state) ++observed.at(f.offspring);
  return stats::chi_squared_gof(observed, pmf);
}

OccupancyCheck spine_occupancy_check(std::span<const SpineRecord> records, const SpectralTriple& triple,
                                     std::span<const double> weights, double t) {
  const auto states = static_cast<std::size_t>(triple.phi.size());
  if (records.empty()) throw ExperimentError("spine_occupancy_check: no records");
  OccupancyCheck out;
  out.pass = true;
  std::vector<double> indicator(records.size());
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t i = 0; i < records.size(); ++i)
      indicator[i] = records[i].spine_state_at(t) == s ? 1.0 : 0.0;
    const auto e = static_cast<Eigen::Index>(s);
    const double expected = triple.phi(e) * triple.phi_tilde(e) * weights[s];
    out.observed.push_back(stats::mean(indicator));
    out.se.push_back(stats::standard_error(indicator));
    out.expected.push_back(expected);
    out.z.push_back(stats::z_score(out.observed.back(), out.se.back(), expected));
    out.pass = out.pass && std::abs(out.z.back()) < stats::kZThreshold;
  }
  return out;
}

}  // namespace huntbranch
