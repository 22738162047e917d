#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "huntbranch/fixtures.hpp"
#include "huntbranch/forward_sim.hpp"
#include "huntbranch/parallel.hpp"
#include "huntbranch/spectral.hpp"
#include "huntbranch/stats.hpp"
#include "test_support.hpp"

using namespace huntbranch;
using huntbranch::testing::binary;
using huntbranch::testing::two_state;

namespace {

SimConfig config(std::vector<double> checkpoints, std::uint64_t replicate = 0) {
  SimConfig c;
  c.checkpoints = std::move(checkpoints);
  c.horizon = c.checkpoints.back();
  c.replicate = replicate;
  return c;
}

SimResult run(const Fixture& f, std::vector<State> initial, const SimConfig& c, std::uint64_t seed) {
  Rng rng = Rng::for_replicate(seed, c.replicate);
  return simulate(f.motion, f.law, initial, c, rng);
}

// Ensemble of <f, X_t> per checkpoint.
std::vector<std::vector<double>> ensemble(const MotionModel& motion, const BranchingLaw& law,
                                          std::vector<State> initial, std::vector<double> checkpoints,
                                          std::span<const double> f, std::size_t n, std::uint64_t seed) {
  std::vector<std::vector<double>> values(checkpoints.size(), std::vector<double>(n));
  parallel_for(n, 0, [&](std::size_t i) {
    SimConfig c = config(checkpoints, i);
    c.record_events = false;
    c.record_particles = false;
    Rng rng = Rng::for_replicate(seed, i);
    const SimResult r = simulate(motion, law, initial, c, rng);
    for (std::size_t k = 0; k < checkpoints.size(); ++k) values[k][i] = observable(r.snapshots[k], f);
  });
  return values;
}

MotionModel killed3() {
  Matrix q(3, 3);
  q << 0, 1, 0.5, 2, 0, 1, 0, 1, 0;
  return build_motion({1.0, 2.0, 0.5}, q, {0.3, 0.0, 0.7});
}

}  // namespace

TEST(Simulate, ZeroHorizon) {
  const Fixture f = load_fixture("asym3");
  const SimResult r = run(f, {0, 2, 2}, config({0.0}), 1);
  ASSERT_EQ(r.snapshots.size(), 1u);
  EXPECT_EQ(r.snapshots[0].counts, (std::vector<std::uint64_t>{1, 0, 2}));
  EXPECT_TRUE(r.log.events.empty());
}

TEST(Simulate, NoBranchingConservesCount) {
  const MotionModel m = two_state(3.0);
  const BranchingLaw law = binary({0.0, 0.0});
  Rng rng(4);
  const SimResult r = simulate(m, law, std::vector<State>{0, 1, 1}, config({0.5, 1.0, 5.0}), rng);
  for (const PointMeasure& s : r.snapshots) EXPECT_EQ(s.total(), 3u);
  for (const Event& e : r.log.events) EXPECT_EQ(e.kind, EventKind::kJump);
}

TEST(Simulate, YuleMeanAtFive) {
  const Fixture f = load_fixture("yule2");
  const std::vector<double> ones{1.0, 1.0};
  const auto values = ensemble(f.motion, f.law, {0}, {5.0}, ones, 10000, 21);
  EXPECT_LT(std::abs(stats::z_score(stats::mean(values[0]), stats::standard_error(values[0]), std::exp(5.0))),
            stats::kZThreshold);
}

TEST(Simulate, FirstMomentIdentity) {
  const MotionModel motion = killed3();
  const BranchingLaw law = BranchingLaw::uniform(
      {1.0, 0.4, 0.8}, huntbranch::testing::finite_law({0, 0, 0.6, 0.3, 0.1}));
  const FeynmanKacOperator op = build_operator(motion, law);
  const SpectralTriple triple = principal_triple(op);
  const std::vector<double> checkpoints{0.5, 1.0, 3.0};
  std::vector<std::vector<double>> fs{{1, 1, 1}, {triple.phi(0), triple.phi(1), triple.phi(2)}, {0, 1, 0}};
  for (const auto& f : fs) {
    const auto values = ensemble(motion, law, {2}, checkpoints, f, 4000, 22);
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
      const double expected = op.expected_observable(2, f, checkpoints[k]);
      EXPECT_LT(std::abs(stats::z_score(stats::mean(values[k]), stats::standard_error(values[k]), expected)),
                stats::kZThreshold)
          << "t=" << checkpoints[k];
    }
  }
}

TEST(Simulate, BranchingProperty) {
  const Fixture f = load_fixture("asym3");
  const std::vector<double> ones{1, 1, 1};
  const auto both = ensemble(f.motion, f.law, {0, 2}, {1.5}, ones, 6000, 31)[0];
  const auto a = ensemble(f.motion, f.law, {0}, {1.5}, ones, 6000, 32)[0];
  const auto b = ensemble(f.motion, f.law, {2}, {1.5}, ones, 6000, 33)[0];
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
  EXPECT_LT(std::abs(stats::z_difference(stats::mean(both), stats::standard_error(both), stats::mean(sum),
                                         stats::standard_error(sum))),
            stats::kZThreshold);
  // Variances: compare squared deviations around the common analytic mean.
  const FeynmanKacOperator op = build_operator(f.motion, f.law);
  const double mu = op.expected_observable(0, ones, 1.5) + op.expected_observable(2, ones, 1.5);
  auto sq = [&](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back((x - mu) * (x - mu));
    return out;
  };
  const auto s1 = sq(both), s2 = sq(sum);
  EXPECT_LT(std::abs(stats::z_difference(stats::mean(s1), stats::standard_error(s1), stats::mean(s2),
                                         stats::standard_error(s2))),
            stats::kZThreshold);
}

TEST(Simulate, EventLogInvariants) {
  const MotionModel motion = killed3();
  const BranchingLaw law = BranchingLaw::uniform({1.0, 0.4, 0.8}, huntbranch::testing::finite_law({0, 0, 0.6, 0.3, 0.1}));
  Rng rng(5);
  const SimResult r = simulate(motion, law, std::vector<State>{0}, config({1.0, 2.0, 3.0}), rng);
  double last = 0.0;
  std::set<std::uint64_t> alive{0};
  std::uint64_t next_birth = 1;
  for (const Event& e : r.log.events) {
    EXPECT_GE(e.time, last);
    last = e.time;
    ASSERT_TRUE(alive.count(e.particle.birth_order));
    if (e.kind == EventKind::kFission) {
      EXPECT_GE(e.offspring, 2u);
      EXPECT_EQ(e.from, e.to);
      EXPECT_EQ(e.first_child, next_birth);
      alive.erase(e.particle.birth_order);
      for (std::uint32_t c = 0; c < e.offspring; ++c) alive.insert(e.first_child + c);
      next_birth += e.offspring;
    } else if (e.kind == EventKind::kKilling) {
      alive.erase(e.particle.birth_order);
    }
  }
  const PointMeasure& final_snap = r.snapshots.back();
  EXPECT_EQ(final_snap.total(), alive.size());
  std::set<std::uint64_t> recorded;
  for (const Particle& p : final_snap.particles) {
    EXPECT_LT(p.state, 3u);
    recorded.insert(p.id.birth_order);
  }
  EXPECT_EQ(recorded, alive);
}

TEST(Simulate, ReproducibleEventLog) {
  const Fixture f = load_fixture("asym3");
  const SimResult a = run(f, {1}, config({1.0, 2.0}, 7), 99);
  const SimResult b = run(f, {1}, config({1.0, 2.0}, 7), 99);
  ASSERT_EQ(a.log.events.size(), b.log.events.size());
  for (std::size_t i = 0; i < a.log.events.size(); ++i) {
    EXPECT_EQ(a.log.events[i].time, b.log.events[i].time);
    EXPECT_EQ(a.log.events[i].particle, b.log.events[i].particle);
    EXPECT_EQ(a.log.events[i].to, b.log.events[i].to);
  }
}

TEST(Simulate, OverflowIsReported) {
  const Fixture f = load_fixture("yule2");
  SimConfig c = config({1.0, 20.0});
  c.population_cap = 500;
  const SimResult r = run(f, {0}, c, 3);
  EXPECT_EQ(r.status, SimStatus::kOverflow);
  EXPECT_LT(r.end_time, 20.0);
  EXPECT_LE(r.snapshots.size(), 2u);
}

TEST(Simulate, InvalidInputs) {
  const Fixture f = load_fixture("yule2");
  Rng rng(1);
  EXPECT_THROW(simulate(f.motion, f.law, std::vector<State>{}, config({1.0}), rng), std::invalid_argument);
  EXPECT_THROW(simulate(f.motion, f.law, std::vector<State>{5}, config({1.0}), rng), std::out_of_range);
  SimConfig unsorted = config({2.0, 1.0});
  unsorted.horizon = 2.0;
  EXPECT_THROW(simulate(f.motion, f.law, std::vector<State>{0}, unsorted, rng), std::invalid_argument);
}

TEST(Observable, Examples) {
  PointMeasure empty{0.0, {0, 0}, {}};
  EXPECT_EQ(observable(empty, std::vector<double>{1.0, 2.0}), 0.0);
  PointMeasure three{1.0, {2, 1}, {}};
  EXPECT_EQ(observable(three, std::vector<double>{1.0, 1.0}), 3.0);
  const Fixture f = load_fixture("yule2");
  const SpectralTriple t = principal_triple(build_operator(f.motion, f.law));
  EXPECT_NEAR(observable(three, std::vector<double>{t.phi(0), t.phi(1)}), 3.0, 1e-12);
}

TEST(MartingalePath, InitialValueAndYuleFlatness) {
  const Fixture f = load_fixture("asym3");
  const SpectralTriple t = principal_triple(build_operator(f.motion, f.law));
  const SimResult r = run(f, {1}, config({0.0}), 1);
  const auto path = martingale_path(r.snapshots, t, std::vector<double>{1, 1, 1});
  EXPECT_DOUBLE_EQ(path[0].w, t.phi(1));

  const Fixture y = load_fixture("yule2");
  const SpectralTriple ty = principal_triple(build_operator(y.motion, y.law));
  const std::vector<double> phi{ty.phi(0), ty.phi(1)};
  const auto values = ensemble(y.motion, y.law, {0}, {1.0, 2.0, 3.0}, phi, 10000, 41);
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> w = values[k];
    for (double& v : w) v *= std::exp(-ty.lambda1 * (k + 1.0));
    EXPECT_LT(std::abs(stats::z_score(stats::mean(w), stats::standard_error(w), 1.0)), stats::kZThreshold);
  }
}

TEST(MartingalePath, IndicatorRatioNearHalf) {
  const Fixture y = load_fixture("yule2");
  const SpectralTriple t = principal_triple(build_operator(y.motion, y.law));
  std::vector<double> ratios;
  for (std::uint64_t i = 0; i < 200; ++i) {
    SimConfig c = config({6.0}, i);
    c.record_events = false;
    c.record_particles = false;
    const SimResult r = run(y, {0}, c, 51);
    const auto p = martingale_path(r.snapshots, t, std::vector<double>{1.0, 0.0});
    ratios.push_back(p[0].u / p[0].w);
  }
  EXPECT_NEAR(stats::median(ratios), 0.5, 0.05);
}
