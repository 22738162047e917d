#include <gtest/gtest.h>

#include <cmath>

#include "huntbranch/stats.hpp"

using namespace huntbranch::stats;

TEST(Stats, MeanAndStandardError) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(mean(x), 2.5);
  EXPECT_NEAR(standard_error(x), std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
}

TEST(Stats, QuantileType7) {
  const std::vector<double> x{4, 1, 3, 2, 5};
  EXPECT_DOUBLE_EQ(median(x), 3.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.25), 2.0);
  EXPECT_DOUBLE_EQ(quantile(x, 0.1), 1.4);
  EXPECT_DOUBLE_EQ(quantile(x, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(median(std::vector<double>{1, 2}), 1.5);
}

TEST(Stats, ZScores) {
  EXPECT_NEAR(z_score(1.2, 0.1, 1.0), 2.0, 1e-12);
  EXPECT_EQ(z_score(1.0, 0.0, 1.0), 0.0);
  EXPECT_NEAR(z_difference(1.0, 0.3, 0.5, 0.4), 1.0, 1e-12);
}

TEST(Stats, ChiSquaredSurvival) {
  // Reference values from the chi-squared table.
  EXPECT_NEAR(chi_squared_sf(3.841458820694124, 1), 0.05, 1e-12);
  EXPECT_NEAR(chi_squared_sf(9.487729036781154, 4), 0.05, 1e-12);
}

TEST(Stats, ChiSquaredPoolsSmallBins) {
  const std::vector<std::uint64_t> observed{50, 30, 15, 4, 1};
  const std::vector<double> p{0.5, 0.3, 0.15, 0.04, 0.01};
  const ChiSquaredResult r = chi_squared_gof(observed, p);
  EXPECT_EQ(r.bins, 4u);
  EXPECT_EQ(r.degrees_of_freedom, 3u);
  EXPECT_NEAR(r.statistic, 0.0, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(Stats, PoissonPmf) {
  EXPECT_NEAR(poisson_pmf(0, 4.0), std::exp(-4.0), 1e-16);
  EXPECT_NEAR(poisson_pmf(3, 4.0), std::exp(-4.0) * 64.0 / 6.0, 1e-15);
}
