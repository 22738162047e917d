#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace huntbranch::stats {

/// Acceptance threshold for every z-statistic in this project.
inline constexpr double kZThreshold = 4.0;

double mean(std::span<const double> x);
/// Standard error of the mean: sample standard deviation / sqrt(n).
double standard_error(std::span<const double> x);
/// Linear-interpolation quantile (Hyndman-Fan type 7), 0 <= q <= 1.
double quantile(std::span<const double> x, double q);
double median(std::span<const double> x);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};
Summary summarize(std::span<const double> x);

/// (a - b) / sqrt(se_a^2 + se_b^2); 0 when both are exact and equal.
double z_difference(double mean_a, double se_a, double mean_b, double se_b);
/// (estimate - target) / se; 0 when se == 0 and estimate == target.
double z_score(double estimate, double se, double target);

struct ChiSquaredResult {
  double statistic = 0.0;
  std::size_t degrees_of_freedom = 0;
  double p_value = 1.0;
  std::size_t bins = 0;
};

/// Goodness of fit of observed category counts to probabilities. Adjacent
/// categories are pooled from the right until every expected count is at
/// least `min_expected`; any probability mass not covered by `probabilities`
/// goes into the last pooled bin.
ChiSquaredResult chi_squared_gof(std::span<const std::uint64_t> observed, std::span<const double> probabilities,
                                 double min_expected = 5.0);

/// Upper tail of the chi-squared distribution.
double chi_squared_sf(double statistic, double dof);

double poisson_pmf(std::uint64_t k, double mean);

}  // namespace huntbranch::stats
