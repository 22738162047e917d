#include "huntbranch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "huntbranch/errors.hpp"
#include "huntbranch/parallel.hpp"

namespace huntbranch {

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

bool shrinking(double before, double after) { return after < before || (after == 0.0 && before == 0.0); }

}  // namespace

EnsembleResult run_ensemble(const MotionModel& motion, const BranchingLaw& law, const SpectralTriple& triple,
                            State x0, std::span<const double> f, const EnsembleConfig& config) {
  const std::size_t states = motion.size();
  if (f.size() != states) throw std::invalid_argument("run_ensemble: f has wrong length");
  if (config.checkpoints.empty()) throw std::invalid_argument("run_ensemble: no checkpoints");
  if (config.replicates == 0) throw std::invalid_argument("run_ensemble: no replicates");
  if (x0 >= states) throw std::out_of_range("run_ensemble: x0 out of range");

  EnsembleResult result;
  result.x0 = x0;
  result.checkpoints = config.checkpoints;
  result.lambda1 = triple.lambda1;
  result.phi = to_std(triple.phi);
  result.weights.assign(motion.weights().begin(), motion.weights().end());
  result.f.assign(f.begin(), f.end());
  result.replicates.resize(config.replicates);

  SimConfig base;
  base.horizon = config.checkpoints.back();
  base.checkpoints = config.checkpoints;
  base.population_cap = config.population_cap;
  base.master_seed = config.master_seed;
  base.record_events = false;
  base.record_particles = false;

  parallel_for(config.replicates, config.threads, [&](std::size_t i) {
    SimConfig sim = base;
    sim.replicate = i;
    Rng rng = Rng::for_replicate(config.master_seed, i);
    const State start[] = {x0};
    SimResult run = simulate(motion, law, start, sim, rng);
    ReplicateOutcome& out = result.replicates[i];
    out.status = run.status;
    const auto path = martingale_path(run.snapshots, triple, f);
    for (const MartingalePoint& p : path) {
      out.w.push_back(p.w);
      out.u.push_back(p.u);
    }
    for (PointMeasure& snap : run.snapshots) out.counts.push_back(std::move(snap.counts));
    out.extinct = run.status == SimStatus::kCompleted && !out.counts.empty() &&
                  std::all_of(out.counts.back().begin(), out.counts.back().end(),
                              [](std::uint64_t c) { return c == 0; });
  });

  for (const ReplicateOutcome& r : result.replicates) {
    if (r.status == SimStatus::kOverflow)
      ++result.n_overflow;
    else
      ++result.n_accepted;
    if (r.extinct) ++result.n_extinct;
  }
  if (result.n_accepted == 0) throw ExperimentError("run_ensemble: every replicate overflowed the population cap");

  std::vector<double> w;
  for (std::size_t k = 0; k < config.checkpoints.size(); ++k) {
    w.clear();
    for (const ReplicateOutcome& r : result.replicates)
      if (r.status == SimStatus::kCompleted) w.push_back(r.w[k]);
    result.summaries.push_back({config.checkpoints[k], stats::summarize(w), result.n_accepted, result.n_overflow});
  }
  return result;
}

MartingaleReport verify_martingale(const EnsembleResult& ensemble) {
  MartingaleReport report;
  report.target = ensemble.phi.at(ensemble.x0);
  report.refused = static_cast<double>(ensemble.n_overflow) >
                   kMaxExcludedFraction * static_cast<double>(ensemble.replicates.size());
  report.pass = !report.refused;
  for (const CheckpointSummary& s : ensemble.summaries) {
    report.times.push_back(s.time);
    report.means.push_back(s.w.mean);
    report.ses.push_back(s.w.se);
    report.z.push_back(stats::z_score(s.w.mean, s.w.se, report.target));
    report.pass = report.pass && std::abs(report.z.back()) < stats::kZThreshold;
  }
  return report;
}

SllnVerdict verify_slln(const EnsembleResult& ensemble, const SpectralTriple& triple, std::span<const double> f,
                        double tolerance, const std::optional<IUFit>& iu) {
  const std::size_t states = ensemble.phi.size();
  if (f.size() != states) throw std::invalid_argument("verify_slln: f has wrong length");
  if (!(tolerance > 0.0)) throw std::invalid_argument("verify_slln: tolerance must be positive");
  SllnVerdict verdict;
  verdict.tolerance = tolerance;
  for (std::size_t s = 0; s < states; ++s)
    verdict.target += triple.phi_tilde(static_cast<Eigen::Index>(s)) * f[s] * ensemble.weights[s];

  for (std::size_t k = 0; k < ensemble.checkpoints.size(); ++k) {
    std::vector<double> ratios;
    for (const ReplicateOutcome& r : ensemble.replicates) {
      if (r.status != SimStatus::kCompleted || !(r.w[k] > 0.0)) continue;
      double f_sum = 0.0;
      for (std::size_t s = 0; s < states; ++s) f_sum += static_cast<double>(r.counts[k][s]) * f[s];
      // exp(-lambda1 t) cancels against W_t.
      double phi_sum = 0.0;
      for (std::size_t s = 0; s < states; ++s) phi_sum += static_cast<double>(r.counts[k][s]) * ensemble.phi[s];
      ratios.push_back(f_sum / phi_sum);
    }
    verdict.times.push_back(ensemble.checkpoints[k]);
    verdict.n_used.push_back(ratios.size());
    if (ratios.empty()) {
      verdict.medians.push_back(NAN);
      verdict.q25.push_back(NAN);
      verdict.q75.push_back(NAN);
      continue;
    }
    verdict.medians.push_back(stats::median(ratios));
    verdict.q25.push_back(stats::quantile(ratios, 0.25));
    verdict.q75.push_back(stats::quantile(ratios, 0.75));
  }
  if (verdict.n_used.back() < kMinSurvivors)
    throw ExperimentError("verify_slln: only " + std::to_string(verdict.n_used.back()) +
                          " surviving replicates at the terminal checkpoint");

  const std::size_t last = verdict.times.size() - 1;
  verdict.median_within_tolerance = std::abs(verdict.medians[last] - verdict.target) <= tolerance;
  verdict.iqr_shrinking = true;
  const std::size_t first = last >= 2 ? last - 2 : 0;
  for (std::size_t k = first; k < last; ++k)
    verdict.iqr_shrinking = verdict.iqr_shrinking && shrinking(verdict.q75[k] - verdict.q25[k],
                                                               verdict.q75[k + 1] - verdict.q25[k + 1]);
  verdict.pass = verdict.median_within_tolerance && verdict.iqr_shrinking;
  if (iu) {
    verdict.horizon_adequate = iu->c * std::exp(-iu->nu * verdict.times[last]) < tolerance / 10.0;
    verdict.pass = verdict.pass && *verdict.horizon_adequate;
  }
  return verdict;
}

RatioLimitReport verify_ratio_limit(const EnsembleResult& ensemble, const FeynmanKacOperator& op,
                                    std::span<const State> subset) {
  const std::size_t states = op.size();
  if (subset.empty()) throw std::invalid_argument("verify_ratio_limit: B is empty");
  std::vector<double> indicator(states, 0.0);
  for (State s : subset) {
    if (s >= states) throw std::out_of_range("verify_ratio_limit: state in B out of range");
    indicator[s] = 1.0;
  }
  RatioLimitReport report;
  report.subset.assign(subset.begin(), subset.end());
  const double phi0 = ensemble.phi.at(ensemble.x0);
  std::size_t usable = 0;
  for (const ReplicateOutcome& r : ensemble.replicates)
    if (r.status == SimStatus::kCompleted && r.w.back() > 0.0) ++usable;
  if (usable < kMinSurvivors)
    throw ExperimentError("verify_ratio_limit: only " + std::to_string(usable) + " surviving replicates");

  for (std::size_t k = 0; k < ensemble.checkpoints.size(); ++k) {
    const double t = ensemble.checkpoints[k];
    const double expected = op.expected_observable(ensemble.x0, indicator, t);
    std::vector<double> deviations;
    for (const ReplicateOutcome& r : ensemble.replicates) {
      if (r.status != SimStatus::kCompleted) continue;
      double in_b = 0.0;
      for (State s : subset) in_b += static_cast<double>(r.counts[k][s]);
      deviations.push_back(std::abs(in_b / expected - r.w[k] / phi0));
    }
    report.times.push_back(t);
    report.expected_counts.push_back(expected);
    report.mean_abs_deviation.push_back(stats::mean(deviations));
    report.max_abs_deviation.push_back(*std::max_element(deviations.begin(), deviations.end()));
  }
  const std::size_t last = report.times.size() - 1;
  report.decreasing_tail = true;
  for (std::size_t k = last >= 2 ? last - 2 : 0; k < last; ++k)
    report.decreasing_tail = report.decreasing_tail &&
                             shrinking(report.mean_abs_deviation[k], report.mean_abs_deviation[k + 1]);
  return report;
}

double expected_truncated_fissions(const FeynmanKacOperator& op, const BranchingLaw& law, State x0, double horizon) {
  const auto n = static_cast<Eigen::Index>(op.size());
  // exp(T [[M, v], [0, 0]]) carries int_0^T exp(sM) v ds in its last column.
  Matrix augmented = Matrix::Zero(n + 1, n + 1);
  augmented.topLeftCorner(n, n) = op.matrix();
  for (Eigen::Index y = 0; y < n; ++y) {
    const auto s = static_cast<State>(y);
    augmented(y, n) = law.beta(s) * law.offspring(s).untruncated_tail_mass();
  }
  return expm(horizon * augmented)(x0, n);
}

namespace {

LawTrack run_track(const MotionModel& motion, const BranchingLaw& law, const DichotomyConfig& config,
                   std::uint64_t seed) {
  const FeynmanKacOperator op = build_operator(motion, law);
  const SpectralTriple triple = principal_triple(op);
  const std::vector<double> ones(motion.size(), 1.0);
  EnsembleConfig ec;
  ec.checkpoints = config.checkpoints;
  ec.replicates = config.replicates;
  ec.master_seed = seed;
  ec.population_cap = config.population_cap;
  ec.threads = config.threads;
  const EnsembleResult ensemble = run_ensemble(motion, law, triple, config.x0, ones, ec);
  LawTrack track;
  track.lambda1 = triple.lambda1;
  track.phi_x0 = ensemble.phi[config.x0];
  track.summaries = ensemble.summaries;
  track.n_overflow = ensemble.n_overflow;
  for (const CheckpointSummary& s : ensemble.summaries)
    track.z_mean.push_back(stats::z_score(s.w.mean, s.w.se, track.phi_x0));
  return track;
}

}  // namespace

DichotomyReport dichotomy_experiment(const MotionModel& motion, const BranchingLaw& heavy_law,
                                     const BranchingLaw& control_law, const DichotomyConfig& config) {
  if (config.checkpoints.size() < 2) throw std::invalid_argument("dichotomy_experiment: need >= 2 checkpoints");
  DichotomyReport report;

  const FeynmanKacOperator heavy_op = build_operator(motion, heavy_law);
  const SpectralTriple heavy_triple = principal_triple(heavy_op);
  const LlogLReport heavy_l = l_functional(heavy_law, to_std(heavy_triple.phi));
  bool divergent = false;
  for (State x = 0; x < heavy_law.size(); ++x) {
    if (heavy_law.beta(x) > 0.0 && heavy_l.states[x].divergent) divergent = true;
    report.heavy_block_ratio = std::max(report.heavy_block_ratio, heavy_l.states[x].block_ratio);
  }
  if (!divergent) throw std::invalid_argument("dichotomy_experiment: heavy law is not flagged LlogL-divergent");

  const FeynmanKacOperator control_op = build_operator(motion, control_law);
  const SpectralTriple control_triple = principal_triple(control_op);
  const LlogLReport control_l = l_functional(control_law, to_std(control_triple.phi));
  for (const StateLlogL& s : control_l.states)
    if (s.divergent) throw std::invalid_argument("dichotomy_experiment: control law must satisfy LlogL");

  const double horizon = config.checkpoints.back();
  report.expected_truncated_fissions = expected_truncated_fissions(heavy_op, heavy_law, config.x0, horizon);
  if (report.expected_truncated_fissions >= config.truncation_threshold) {
    report.verdict = Verdict::kRefused;
    report.reason = "truncation visible at this horizon: expected " +
                    std::to_string(report.expected_truncated_fissions) +
                    " fissions beyond kmax; raise kmax or shorten the horizon";
    return report;
  }

  report.heavy = run_track(motion, heavy_law, config, derive_seed(config.master_seed, 0));
  report.control = run_track(motion, control_law, config, derive_seed(config.master_seed, 1));
  const double limit = kMaxExcludedFraction * static_cast<double>(config.replicates);
  if (static_cast<double>(report.heavy.n_overflow) > limit || static_cast<double>(report.control.n_overflow) > limit) {
    report.verdict = Verdict::kRefused;
    report.reason = "more than 20% of replicates overflowed the population cap";
    return report;
  }

  const auto& hs = report.heavy.summaries;
  const auto& cs = report.control.summaries;
  const std::size_t last = cs.size() - 1;
  const double control_median = cs[last].w.median;
  report.control_in_range = control_median > config.median_low && control_median < config.median_high;
  report.control_stable =
      std::abs(control_median - cs[last - 1].w.median) <= config.stability_tolerance * control_median;
  report.heavy_decreasing = true;
  for (std::size_t k = 1; k < hs.size(); ++k)
    report.heavy_decreasing = report.heavy_decreasing && hs[k].w.median < hs[k - 1].w.median;
  report.means_consistent = true;
  for (double z : report.heavy.z_mean) report.means_consistent = report.means_consistent && std::abs(z) < stats::kZThreshold;
  for (double z : report.control.z_mean) report.means_consistent = report.means_consistent && std::abs(z) < stats::kZThreshold;

  const bool ok = report.control_in_range && report.control_stable && report.heavy_decreasing && report.means_consistent;
  report.verdict = ok ? Verdict::kPass : Verdict::kFail;
  if (!ok) {
    std::string failed;
    auto note = [&](bool gate, const char* name) {
      if (gate) return;
      if (!failed.empty()) failed += ", ";
      failed += name;
    };
    note(report.control_in_range, "control median out of range");
    note(report.control_stable, "control median not stable");
    note(report.heavy_decreasing, "heavy median not strictly decreasing");
    note(report.means_consistent, "ensemble mean not within 4 SE of phi(x0)");
    report.reason = failed;
  }
  return report;
}

}  // namespace huntbranch
