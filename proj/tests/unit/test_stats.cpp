#include <catch2/catch_amalgamated.hpp>

#include <mdspde/rng.hpp>
#include <mdspde/stats.hpp>

#include <cmath>
#include <vector>

using namespace mdspde;
using namespace mdspde::stats;
using Catch::Approx;

TEST_CASE("moments") {
  const std::vector<double> xs{1, 2, 3, 4};
  const Moments m = moments(xs);
  CHECK(m.mean == Approx(2.5));
  CHECK(m.variance == Approx(5.0 / 3.0));
  CHECK(m.count == 4);
  const std::vector<double> ws{1, 1, 1, 1};
  const Moments w = weighted_moments(xs, ws);
  CHECK(w.mean == Approx(2.5));
  CHECK(w.variance == Approx(1.25));
  // Weights act as multiplicities.
  const std::vector<double> ys{1, 3};
  const std::vector<double> vs{3, 1};
  const std::vector<double> rep{1, 1, 1, 3};
  CHECK(weighted_moments(ys, vs).mean == Approx(moments(rep).mean));
  CHECK(weighted_moments(ys, vs).variance == Approx(0.75));
}

TEST_CASE("normal cdf and p-values") {
  CHECK(normal_cdf(0.0) == Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == Approx(0.975));
  CHECK(normal_cdf(-3.2905267314918945) == Approx(5e-4).epsilon(1e-8));
  CHECK(two_sided_p(2.5758293035489004) == Approx(0.01));
}

TEST_CASE("effective sample size of AR(1) series") {
  // For an AR(1) with coefficient phi, n / ESS -> (1 + phi) / (1 - phi).
  const NormalStream s(3, 0, Stream::SlowNoise);
  const int n = 200000;
  for (double phi : {0.0, 0.5, 0.9}) {
    std::vector<double> xs(n);
    double z[1];
    double x = 0.0;
    for (int i = 0; i < n; ++i) {
      s.fill(static_cast<std::uint64_t>(i), z);
      x = phi * x + std::sqrt(1 - phi * phi) * z[0];
      xs[i] = x;
    }
    const double expect = n * (1 - phi) / (1 + phi);
    CHECK(effective_sample_size(xs) == Approx(expect).epsilon(0.1));
  }
}
