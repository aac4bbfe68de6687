#include "mdspde/stats.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace mdspde::stats {

Moments moments(std::span<const double> xs) {
  Moments m;
  m.count = xs.size();
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.variance = ss / static_cast<double>(xs.size() - 1);
  }
  return m;
}

Moments weighted_moments(std::span<const double> xs, std::span<const double> ws) {
  if (xs.size() != ws.size()) throw std::invalid_argument("weighted_moments: size mismatch");
  Moments m;
  m.count = xs.size();
  double wsum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    wsum += ws[i];
    m.mean += ws[i] * xs[i];
  }
  if (wsum <= 0.0) return m;
  m.mean /= wsum;
  for (std::size_t i = 0; i < xs.size(); ++i) m.variance += ws[i] * (xs[i] - m.mean) * (xs[i] - m.mean);
  m.variance /= wsum;
  return m;
}

double effective_sample_size(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(xs.begin(), xs.end());
  for (double& v : c) v -= mean;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (c0 <= 0.0) return static_cast<double>(n);
  // Sum consecutive pairs Gamma_k = rho_{2k} + rho_{2k+1} while positive and
  // monotonically non-increasing.
  double tau = -1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    tau += 2.0 * pair;
    prev = pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace mdspde::stats
