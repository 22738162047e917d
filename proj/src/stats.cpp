#include "huntbranch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

namespace huntbranch::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double standard_error(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  const double n = static_cast<double>(x.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0,1]");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

Summary summarize(std::span<const double> x) {
  Summary s;
  s.n = x.size();
  if (x.empty()) return s;
  s.mean = mean(x);
  s.se = standard_error(x);
  s.median = median(x);
  s.q25 = quantile(x, 0.25);
  s.q75 = quantile(x, 0.75);
  return s;
}

double z_difference(double mean_a, double se_a, double mean_b, double se_b) {
  const double se = std::hypot(se_a, se_b);
  if (se == 0.0) return mean_a == mean_b ? 0.0 : std::copysign(INFINITY, mean_a - mean_b);
  return (mean_a - mean_b) / se;
}

double z_score(double estimate, double se, double target) { return z_difference(estimate, se, target, 0.0); }

double chi_squared_sf(double statistic, double dof) {
  if (dof <= 0.0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, statistic / 2.0);
}

ChiSquaredResult chi_squared_gof(std::span<const std::uint64_t> observed, std::span<const double> probabilities,
                                 double min_expected) {
  if (observed.size() != probabilities.size())
    throw std::invalid_argument("chi_squared_gof: observed and probabilities differ in length");
  const double n = static_cast<double>(std::accumulate(observed.begin(), observed.end(), std::uint64_t{0}));
  if (n == 0.0) throw std::invalid_argument("chi_squared_gof: no observations");
  const double covered = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);

  // Pool from the right; the uncovered mass starts in the rightmost bin.
  std::vector<double> exp_bins, obs_bins;
  double e_acc = std::max(0.0, 1.0 - covered) * n;
  double o_acc = 0.0;
  for (std::size_t i = observed.size(); i-- > 0;) {
    e_acc += probabilities[i] * n;
    o_acc += static_cast<double>(observed[i]);
    if (e_acc >= min_expected) {
      exp_bins.push_back(e_acc);
      obs_bins.push_back(o_acc);
      e_acc = o_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp_bins.empty()) {
      exp_bins.push_back(e_acc);
      obs_bins.push_back(o_acc);
    } else {
      exp_bins.back() += e_acc;
      obs_bins.back() += o_acc;
    }
  }
  ChiSquaredResult r;
  r.bins = exp_bins.size();
  for (std::size_t i = 0; i < exp_bins.size(); ++i) {
    const double d = obs_bins[i] - exp_bins[i];
    r.statistic += exp_bins[i] > 0.0 ? d * d / exp_bins[i] : (obs_bins[i] > 0.0 ? INFINITY : 0.0);
  }
  r.degrees_of_freedom = r.bins > 0 ? r.bins - 1 : 0;
  r.p_value = chi_squared_sf(r.statistic, static_cast<double>(r.degrees_of_freedom));
  return r;
}

double poisson_pmf(std::uint64_t k, double mean) {
  if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
  const double kd = static_cast<double>(k);
  return std::exp(kd * std::log(mean) - mean - std::lgamma(kd + 1.0));
}

}  // namespace huntbranch::stats
