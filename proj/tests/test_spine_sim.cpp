#include <gtest/gtest.h>

#include <cmath>

#include "huntbranch/errors.hpp"
#include "huntbranch/fixtures.hpp"
#include "huntbranch/spine_sim.hpp"
#include "test_support.hpp"

using namespace huntbranch;

namespace {

struct SpineModel {
  Fixture fixture;
  SpectralTriple triple;
  SpineSampler sampler;

  explicit SpineModel(const std::string& id)
      : fixture(load_fixture(id)),
        triple(principal_triple(build_operator(fixture.motion, fixture.law))),
        sampler(fixture.motion, fixture.law, triple) {}
};

SpineConfig spine_config(std::vector<double> checkpoints, std::uint64_t seed, bool subtrees = true) {
  SpineConfig c;
  c.checkpoints = std::move(checkpoints);
  c.horizon = c.checkpoints.back();
  c.master_seed = seed;
  c.simulate_subtrees = subtrees;
  return c;
}

MotionModel killed3() {
  Matrix q(3, 3);
  q << 0, 1, 0.5, 2, 0, 1, 0, 1, 0;
  return build_motion({1.0, 2.0, 0.5}, q, {0.3, 0.0, 0.7});
}

}  // namespace

TEST(SimulateSpine, NoBranchingMeansNoFissions) {
  const MotionModel motion = killed3();
  const BranchingLaw law = huntbranch::testing::binary({0.0, 0.0, 0.0});
  const SpectralTriple triple = principal_triple(build_operator(motion, law));
  Rng rng(1);
  const SpineRecord r = simulate_spine(motion, law, triple, 0, spine_config({5.0}, 1), rng);
  EXPECT_TRUE(r.fissions.empty());
  EXPECT_FALSE(r.spine_path.killed);
}

TEST(SimulateSpine, RecordInvariants) {
  const SpineModel s("asym3");
  const auto records = sample_spines(s.sampler, 0, spine_config({1.0, 2.0}, 2), 300, 0);
  for (const SpineRecord& r : records) {
    double last = 0.0;
    for (const SpineFission& f : r.fissions) {
      EXPECT_GT(f.time, last);
      EXPECT_LE(f.time, 2.0);
      last = f.time;
      EXPECT_EQ(f.offspring, 2u);
      EXPECT_LT(f.spine_child, f.offspring);
      EXPECT_EQ(f.subtrees.size(), f.offspring - 1);
      EXPECT_EQ(f.state, r.spine_state_at(f.time));
      for (const Subtree& sub : f.subtrees) {
        EXPECT_EQ(sub.birth_time, f.time);
        EXPECT_EQ(sub.birth_state, f.state);
      }
    }
  }
}

TEST(SimulateSpine, Yule2FissionCountPoisson) {
  const SpineModel s("yule2");
  const auto records = sample_spines(s.sampler, 0, spine_config({2.0}, 3, false), 10000, 0);
  std::vector<double> counts;
  for (const SpineRecord& r : records) counts.push_back(static_cast<double>(r.fissions_by(2.0)));
  EXPECT_LT(std::abs(stats::z_score(stats::mean(counts), stats::standard_error(counts), 4.0)), stats::kZThreshold);
  EXPECT_GT(fission_count_test(records, 2.0, 4.0).p_value, 1e-3);
}

TEST(SimulateSpine, SizeBiasedOffspring) {
  const MotionModel motion = huntbranch::testing::two_state();
  const BranchingLaw law = BranchingLaw::uniform({1.0, 1.0}, huntbranch::testing::finite_law({0, 0, 0.5, 0.3, 0.2}));
  const SpectralTriple triple = principal_triple(build_operator(motion, law));
  const SpineSampler sampler(motion, law, triple);
  EXPECT_NEAR(sampler.biased_offspring(0).prob(2), 1.0 / 2.7, 1e-14);
  const auto records = sample_spines(sampler, 0, spine_config({2.0}, 4, false), 4000, 0);
  EXPECT_GT(spine_offspring_test(records, sampler, 0).p_value, 1e-3);
  EXPECT_GT(spine_offspring_test(records, sampler, 1).p_value, 1e-3);
}

TEST(SimulateSpine, SpineChildUniform) {
  const MotionModel motion = huntbranch::testing::two_state();
  const BranchingLaw law = BranchingLaw::uniform({1.0, 1.0}, huntbranch::testing::finite_law({0, 0, 0, 0, 1}));
  const SpectralTriple triple = principal_triple(build_operator(motion, law));
  const SpineSampler sampler(motion, law, triple);
  const auto records = sample_spines(sampler, 0, spine_config({1.0}, 5, false), 3000, 0);
  std::vector<std::uint64_t> counts(4, 0);
  for (const SpineRecord& r : records)
    for (const SpineFission& f : r.fissions) ++counts[f.spine_child];
  EXPECT_GT(stats::chi_squared_gof(counts, std::vector<double>(4, 0.25)).p_value, 1e-3);
}

TEST(UnitMass, HoldsOnEveryRealization) {
  const SpineModel s("asym3");
  const std::vector<double> checkpoints{0.5, 1.0, 1.5, 2.0, 2.5};
  const auto records = sample_spines(s.sampler, 1, spine_config(checkpoints, 6), 300, 0);
  for (const SpineRecord& r : records)
    for (double t : checkpoints) EXPECT_NEAR(unit_mass_identity(r, t), 1.0, 1e-12);
}

TEST(UnitMass, HandEnumeration) {
  SpineRecord r;
  r.horizon = 2.0;
  r.checkpoints = {0.5, 2.0};
  r.subtrees_simulated = true;
  SpineFission f;
  f.time = 1.0;
  f.offspring = 3;
  for (std::uint32_t c = 0; c < 2; ++c) {
    Subtree sub;
    sub.birth_time = 1.0;
    sub.founder_mass = 1.0 / 3.0;
    PointMeasure snap{2.0, {1}, {Particle{0, {0, c}, 1.0 / 3.0}}};
    sub.snapshots = {snap};
    f.subtrees.push_back(sub);
  }
  r.fissions = {f};
  EXPECT_EQ(unit_mass_identity(r, 0.5), 1.0);
  EXPECT_NEAR(unit_mass_identity(r, 2.0), 1.0, 1e-15);
}

TEST(Decomposition, TimeZeroExact) {
  const SpineModel s("asym3");
  const auto records = sample_spines(s.sampler, 2, spine_config({0.0, 1.0}, 7), 50, 0);
  for (const SpineRecord& r : records) {
    const SpineObservables obs = spine_observables(r, s.triple, 0.0);
    EXPECT_NEAR(obs.martingale, 1.0, 1e-15);
    EXPECT_NEAR(obs.decomposition_rhs, s.triple.phi(2), 1e-15);
  }
}

TEST(Decomposition, Yule2AtOne) {
  const SpineModel s("yule2");
  const auto records = sample_spines(s.sampler, 0, spine_config({1.0}, 8), 10000, 0);
  const EstimateComparison c = spine_decomposition_check(records, s.triple, 1.0, 2.0 - std::exp(-1.0));
  EXPECT_TRUE(c.pass) << c.mean_a << " " << c.mean_b << " z=" << c.z_difference;
}

TEST(Decomposition, NoBranchingMatchesHTransform) {
  const MotionModel motion = killed3();
  const BranchingLaw law = huntbranch::testing::binary({0.0, 0.0, 0.0});
  const FeynmanKacOperator op = build_operator(motion, law);
  const SpectralTriple triple = principal_triple(op);
  const SpineSampler sampler(motion, law, triple);
  const double t = 1.5;
  const auto records = sample_spines(sampler, 0, spine_config({t}, 9), 20000, 0);
  const Matrix p = h_transformed_density(op, triple, t);
  double oracle = 0.0;
  for (State y = 0; y < 3; ++y) oracle += p(0, y) * motion.weight(y) * triple.phi(y);
  oracle *= std::exp(-triple.lambda1 * t);
  EXPECT_TRUE(spine_decomposition_check(records, triple, t, oracle).pass);
}

TEST(Decomposition, NestedSpotCheck) {
  const SpineModel s("asym3");
  const SpineConfig cfg = spine_config({1.0}, 10);
  Rng rng(10);
  const SpineRecord skeleton = s.sampler.sample(0, cfg, rng);
  EXPECT_TRUE(nested_decomposition_check(s.sampler, skeleton, cfg, 1.0, 400, 11).pass);
}

TEST(MeasureChange, ConstantFunctional) {
  const SpineModel s("asym3");
  MeasureChangeConfig cfg;
  cfg.replicates = 2000;
  cfg.master_seed = 12;
  const EstimateComparison c =
      measure_change_check(s.fixture.motion, s.fixture.law, s.triple, 0, 1.0, [](const PointMeasure&) { return 1.0; },
                           cfg, 1.0);
  EXPECT_NEAR(c.mean_b, 1.0, 1e-15);
  EXPECT_TRUE(c.pass);
}

TEST(MeasureChange, Yule2Total) {
  const SpineModel s("yule2");
  MeasureChangeConfig cfg;
  cfg.replicates = 10000;
  cfg.master_seed = 13;
  const EstimateComparison c = measure_change_check(
      s.fixture.motion, s.fixture.law, s.triple, 0, 1.0,
      [](const PointMeasure& x) { return static_cast<double>(x.total()); }, cfg, 2.0 * std::exp(1.0) - 1.0);
  EXPECT_TRUE(c.pass) << c.mean_a << " " << c.mean_b;
}

TEST(MeasureChange, Yule2AtLeastTwo) {
  const SpineModel s("yule2");
  MeasureChangeConfig cfg;
  cfg.replicates = 10000;
  cfg.master_seed = 14;
  const double t = 0.3;
  const EstimateComparison c = measure_change_check(
      s.fixture.motion, s.fixture.law, s.triple, 0, t, [](const PointMeasure& x) { return x.total() >= 2 ? 1.0 : 0.0; },
      cfg, 1.0 - std::exp(-2.0 * t));
  EXPECT_TRUE(c.pass) << c.mean_a << " " << c.mean_b;
}

TEST(Occupancy, Yule2StationaryAtTen) {
  const SpineModel s("yule2");
  const auto records = sample_spines(s.sampler, 0, spine_config({10.0}, 15, false), 10000, 0);
  EXPECT_TRUE(spine_occupancy_check(records, s.triple, s.fixture.motion.weights(), 10.0).pass);
}

TEST(Occupancy, Asym3Stationary) {
  const SpineModel s("asym3");
  const auto records = sample_spines(s.sampler, 2, spine_config({12.0}, 16, false), 10000, 0);
  const OccupancyCheck c = spine_occupancy_check(records, s.triple, s.fixture.motion.weights(), 12.0);
  EXPECT_TRUE(c.pass);
}

TEST(Reproducibility, ThreadCountDoesNotMatter) {
  const SpineModel s("asym3");
  const auto a = sample_spines(s.sampler, 0, spine_config({1.0, 2.0}, 17), 64, 1);
  const auto b = sample_spines(s.sampler, 0, spine_config({1.0, 2.0}, 17), 64, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].fissions.size(), b[i].fissions.size());
    for (std::size_t k = 0; k < a[i].fissions.size(); ++k) EXPECT_EQ(a[i].fissions[k].time, b[i].fissions[k].time);
    EXPECT_EQ(reconstructed_population(a[i], 2.0, 3).counts, reconstructed_population(b[i], 2.0, 3).counts);
  }
}
