#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace mdspde::stats {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased sample variance
  std::size_t count = 0;

  [[nodiscard]] double se_mean() const {
    return count > 1 ? std::sqrt(variance / static_cast<double>(count)) : 0.0;
  }
  /// Standard error of the sample variance under a Gaussian model.
  [[nodiscard]] double se_variance() const {
    return count > 1 ? variance * std::sqrt(2.0 / static_cast<double>(count - 1)) : 0.0;
  }
};

/// Two-pass mean and unbiased variance.
Moments moments(std::span<const double> xs);

/// Weighted mean and (population-style) weighted variance.
Moments weighted_moments(std::span<const double> xs, std::span<const double> ws);

/// Effective sample size of a stationary series via Geyer's initial positive
/// sequence estimator of the integrated autocorrelation time.
double effective_sample_size(std::span<const double> xs);

double normal_cdf(double z);
/// Two-sided p-value of a standard normal statistic.
double two_sided_p(double z);

}  // namespace mdspde::stats
