#include <gtest/gtest.h>

#include <cmath>

#include "huntbranch/errors.hpp"
#include "huntbranch/motion.hpp"
#include "huntbranch/stats.hpp"
#include "test_support.hpp"

using namespace huntbranch;
using huntbranch::testing::two_state;

namespace {

MotionModel asym3_motion() {
  Matrix q(3, 3);
  q << 0, 1, 0, 2, 0, 1, 0, 1, 0;
  return build_motion({1.0, 2.0, 0.5}, q, {0.0, 0.0, 0.0});
}

MotionModel killed3() {
  Matrix q(3, 3);
  q << 0, 1, 0.5, 2, 0, 1, 0, 1, 0;
  return build_motion({1.0, 2.0, 0.5}, q, {0.3, 0.0, 0.7});
}

}  // namespace

TEST(BuildMotion, SymmetricChainIsIrreducible) {
  const MotionModel m = two_state();
  EXPECT_TRUE(m.irreducible());
  EXPECT_TRUE(m.conservative());
  EXPECT_DOUBLE_EQ(m.generator()(0, 0), -1.0);
}

TEST(BuildMotion, AbsorbingStateFlagged) {
  Matrix q(2, 2);
  q << 0, 1, 0, 0;
  const MotionModel m = build_motion({1.0, 1.0}, q, {0.0, 0.0});
  EXPECT_FALSE(m.irreducible());
}

TEST(BuildMotion, Errors) {
  Matrix q(2, 2);
  q << 0, 1, 1, 0;
  EXPECT_THROW(build_motion({1.0, 0.0}, q, {0.0, 0.0}), ModelError);
  EXPECT_THROW(build_motion({1.0, -1.0}, q, {0.0, 0.0}), ModelError);
  Matrix neg(2, 2);
  neg << 0, -1, 1, 0;
  EXPECT_THROW(build_motion({1.0, 1.0}, neg, {0.0, 0.0}), ModelError);
  EXPECT_THROW(build_motion({1.0, 1.0}, q, {0.0, -0.1}), ModelError);
  EXPECT_THROW(build_motion({}, Matrix(0, 0), {}), ModelError);
  EXPECT_THROW(build_motion({1.0, 1.0, 1.0}, q, {0.0, 0.0}), ModelError);
}

TEST(BuildMotion, DiagonalIgnored) {
  Matrix q(2, 2);
  q << 5, 1, 1, -3;
  EXPECT_DOUBLE_EQ(build_motion({1.0, 1.0}, q, {0.0, 0.0}).exit_rate(0), 1.0);
}

TEST(TransitionDensity, TwoStateClosedForm) {
  EXPECT_NEAR(transition_density(two_state(), 1.0, 0, 0), 0.5 * (1.0 + std::exp(-2.0)), 1e-13);
  EXPECT_NEAR(transition_density(two_state(), 1.0, 0, 0), 0.567668, 1e-6);
}

TEST(TransitionDensity, VanishesOffDiagonalAtZero) {
  EXPECT_LT(transition_density(two_state(), 1e-12, 0, 1), 1e-11);
}

TEST(TransitionDensity, RejectsNonPositiveTime) {
  EXPECT_THROW(transition_density(two_state(), 0.0, 0, 0), std::invalid_argument);
  EXPECT_THROW(transition_density(two_state(), -1.0, 0, 1), std::invalid_argument);
}

TEST(TransitionDensity, WeightsDivideOut) {
  const MotionModel m = asym3_motion();
  const Matrix p = transition_matrix(m, 0.7);
  for (State x = 0; x < 3; ++x)
    for (State y = 0; y < 3; ++y) EXPECT_NEAR(transition_density(m, 0.7, x, y) * m.weight(y), p(x, y), 1e-15);
}

TEST(Semigroup, ChapmanKolmogorov) {
  Rng rng(5);
  for (const MotionModel& m : {asym3_motion(), killed3(), grid_diffusion(8, 0.1)}) {
    for (int trial = 0; trial < 10; ++trial) {
      const double s = 2.0 * rng.uniform() + 1e-3, t = 2.0 * rng.uniform() + 1e-3;
      const Matrix ps = density_matrix(m, s), pt = density_matrix(m, t), pst = density_matrix(m, s + t);
      Matrix composed = Matrix::Zero(m.size(), m.size());
      for (State z = 0; z < m.size(); ++z) composed += ps.col(z) * pt.row(z) * m.weight(z);
      EXPECT_LT((composed - pst).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Semigroup, ConservativeRowsSumToOne) {
  for (const MotionModel& m : {asym3_motion(), grid_diffusion(12, 0.05)})
    for (double t : {0.1, 1.0, 10.0}) {
      const Vector rows = transition_matrix(m, t).rowwise().sum();
      EXPECT_LT((rows.array() - 1.0).abs().maxCoeff(), 1e-10);
    }
}

TEST(Semigroup, KilledMassDecreases) {
  const MotionModel m = killed3();
  EXPECT_FALSE(m.conservative());
  Vector previous = Vector::Ones(3);
  for (double t : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const Vector rows = transition_matrix(m, t).rowwise().sum();
    for (int x = 0; x < 3; ++x) EXPECT_LT(rows(x), previous(x));
    previous = rows;
  }
}

TEST(Semigroup, DualityIdentity) {
  Rng rng(9);
  const MotionModel m = killed3();
  for (int trial = 0; trial < 5; ++trial) {
    Vector f(3), g(3);
    for (int i = 0; i < 3; ++i) {
      f(i) = rng.uniform() - 0.3;
      g(i) = rng.uniform() + 0.2;
    }
    const double t = 0.1 + 3.0 * rng.uniform();
    const Vector ptg = apply_semigroup(m, t, g), pf = apply_dual_semigroup(m, t, f);
    double lhs = 0.0, rhs = 0.0;
    for (State x = 0; x < 3; ++x) {
      lhs += f(x) * ptg(x) * m.weight(x);
      rhs += g(x) * pf(x) * m.weight(x);
    }
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Semigroup, StationaryDistribution) {
  const MotionModel m = asym3_motion();
  const Vector pi = stationary_distribution(m);
  EXPECT_NEAR(pi.sum(), 1.0, 1e-12);
  EXPECT_LT((pi.transpose() * m.generator()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GridDiffusion, ReflectingNearestNeighbour) {
  const MotionModel g = grid_diffusion(5, 0.5);
  EXPECT_TRUE(g.irreducible());
  EXPECT_TRUE(g.conservative());
  EXPECT_DOUBLE_EQ(g.rate(0, 1), 0.5 * 16.0);
  EXPECT_DOUBLE_EQ(g.rate(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(g.exit_rate(2), 2.0 * 0.5 * 16.0);
}

TEST(SamplePath, ZeroHorizon) {
  Rng rng(1);
  const Trajectory path = sample_path(two_state(), 1, 0.0, rng);
  EXPECT_TRUE(path.jumps.empty());
  EXPECT_EQ(path.final_state(), 1u);
  EXPECT_FALSE(path.killed);
}

TEST(SamplePath, Invariants) {
  Rng rng(2);
  const MotionModel m = killed3();
  for (int i = 0; i < 2000; ++i) {
    const Trajectory path = sample_path(m, 0, 3.0, rng);
    double last = 0.0;
    for (const Jump& j : path.jumps) {
      ASSERT_GT(j.time, last);
      ASSERT_LE(j.time, 3.0);
      last = j.time;
    }
    if (path.killed) {
      ASSERT_TRUE(path.kill_time.has_value());
      ASSERT_GE(*path.kill_time, last);
      ASSERT_LE(*path.kill_time, 3.0);
    }
  }
}

TEST(SamplePath, KillingTimeLaw) {
  const MotionModel m = build_motion({1.0}, Matrix::Zero(1, 1), {1.0});
  Rng rng(3);
  std::vector<double> killed(100000);
  for (double& k : killed) k = sample_path(m, 0, 1.0, rng).killed ? 1.0 : 0.0;
  EXPECT_LT(std::abs(stats::z_score(stats::mean(killed), stats::standard_error(killed), 1.0 - std::exp(-1.0))),
            stats::kZThreshold);
}

TEST(SamplePath, OccupancyMatchesDensity) {
  Rng rng(4);
  std::vector<double> at0(100000);
  for (double& v : at0) v = sample_path(two_state(), 0, 1.0, rng).final_state() == 0 ? 1.0 : 0.0;
  const double expected = transition_density(two_state(), 1.0, 0, 0);
  EXPECT_LT(std::abs(stats::z_score(stats::mean(at0), stats::standard_error(at0), expected)), stats::kZThreshold);
}

TEST(SamplePath, EndStateChiSquared) {
  const MotionModel m = killed3();
  const Matrix p = transition_matrix(m, 1.3);
  Rng rng(6);
  std::vector<std::uint64_t> counts(4, 0);
  for (int i = 0; i < 100000; ++i) {
    const Trajectory path = sample_path(m, 1, 1.3, rng);
    ++counts[path.killed ? 3 : path.final_state()];
  }
  std::vector<double> probs{p(1, 0), p(1, 1), p(1, 2), 1.0 - p.row(1).sum()};
  EXPECT_GT(stats::chi_squared_gof(counts, probs).p_value, 1e-3);
}

TEST(SamplePath, StateAt) {
  Trajectory path;
  path.initial_state = 0;
  path.jumps = {{0.5, 1}, {1.2, 2}};
  path.end_time = 2.0;
  EXPECT_EQ(path.state_at(0.2), 0u);
  EXPECT_EQ(path.state_at(0.5), 1u);
  EXPECT_EQ(path.state_at(1.9), 2u);
}
