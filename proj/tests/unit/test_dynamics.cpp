#include <catch2/catch_amalgamated.hpp>

#include <mdspde/dynamics.hpp>
#include <mdspde/stats.hpp>

#include <cmath>
#include <numbers>

using namespace mdspde;
using Catch::Approx;

namespace {

DomainSpec pi_domain() { return {std::numbers::pi, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0}; }

ModelSpec make(ReactionSpec f, ReactionSpec g, int n = 4) {
  return ModelSpec(pi_domain(), n, f, g, DiffusionSpec::constant(1.0));
}

RegimeParams with_delta(double eps, double delta) {
  RegimeOverrides o;
  o.delta = delta;
  return RegimeParams::make(eps, Regime::R1, 0.0, o);
}

SimulationOptions quiet() {
  SimulationOptions o;
  o.noise_off = true;
  return o;
}

}  // namespace

TEST_CASE("regime scales") {
  const auto r1 = RegimeParams::make(0.01, Regime::R1);
  CHECK(r1.delta == Approx(1e-3));
  CHECK(r1.h == Approx(std::pow(0.01, -0.25)));
  CHECK(r1.Delta_occ == Approx(std::pow(0.01, 0.25)));
  CHECK(r1.c_eps == Approx(0.1));
  CHECK(r1.eta_scale() == Approx(std::pow(0.01, 0.25)));
  CHECK(r1.gamma == 0.0);
  const auto r2 = RegimeParams::make(0.04, Regime::R2, 0.5);
  CHECK(r2.delta == Approx(0.25 * 0.04));
  CHECK_THROWS_AS(RegimeParams::make(0.04, Regime::R2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(RegimeParams::make(0.0, Regime::R1), std::invalid_argument);
  CHECK(parse_regime("r2") == Regime::R2);
  CHECK_THROWS_AS(parse_regime("R3"), std::invalid_argument);
}

TEST_CASE("deterministic limits of the slow-fast system") {
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  const auto regime = with_delta(0.05, 0.01);
  const PathBundle b = simulate_slow_fast(m, regime, ControlSpec::zero(), Field::unit(m.slow(), 0),
                                          Field::unit(m.fast(), 0), 1.0, 1e-3, 0, quiet());
  for (std::size_t i = 0; i < b.times.size(); i += 100) {
    CHECK((*b.X)(static_cast<Eigen::Index>(i), 0) == Approx(std::exp(-b.times[i])).epsilon(1e-12));
    CHECK(b.X->row(static_cast<Eigen::Index>(i)).tail(3).norm() == 0.0);
  }
  CHECK(std::abs((*b.Y)(b.Y->rows() - 1, 0)) < 1e-12);
}

TEST_CASE("step guard") {
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  const auto regime = with_delta(0.05, 0.01);
  CHECK_THROWS_AS(simulate_slow_fast(m, regime, ControlSpec::zero(), Field::zero(m.slow()), Field::zero(m.fast()),
                                     1.0, 2e-3, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(uniform_grid(1.0, 0.3), std::invalid_argument);
}

TEST_CASE("OU variance of the slow component") {
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  const auto regime = RegimeParams::make(0.05, Regime::R1);
  const int paths = 10000;
  std::vector<double> xs(paths);
  for (int p = 0; p < paths; ++p) {
    SimulationOptions o;
    o.path = static_cast<std::uint64_t>(p);
    const PathBundle b = simulate_slow_fast(m, regime, ControlSpec::zero(), Field::zero(m.slow()),
                                            Field::zero(m.fast()), 1.0, 1e-3, 99, o);
    xs[p] = (*b.X)(b.X->rows() - 1, 0);
  }
  const auto mo = stats::moments(xs);
  const double expect = 0.05 * (1 - std::exp(-2.0)) / 2.0;
  CHECK(expect == Approx(0.021617).epsilon(1e-4));
  CHECK(std::abs(mo.variance - expect) <= 3.0 * mo.se_variance());
  CHECK(std::abs(mo.mean) <= 3.0 * mo.se_mean());
}

TEST_CASE("linear model matches the per-mode covariance ODE") {
  // dX = (-a X + b Y) dt + sqrt(eps) dW1,  dY = -(a/delta) Y dt + delta^{-1/2} dW2.
  const double b = 0.3;
  const double eps = 0.1;
  const ModelSpec m = make(ReactionSpec::linear_y(b), ReactionSpec::zero(), 2);
  const auto regime = RegimeParams::make(eps, Regime::R1);
  const double dt = 1.0 / 1280.0;
  const int paths = 3000;
  std::vector<double> xx(paths), yy(paths), xy(paths);
  for (int p = 0; p < paths; ++p) {
    SimulationOptions o;
    o.path = static_cast<std::uint64_t>(p);
    const PathBundle bb = simulate_slow_fast(m, regime, ControlSpec::zero(), Field::zero(m.slow()),
                                             Field::zero(m.fast()), 1.0, dt, 5, o);
    const double x = (*bb.X)(bb.X->rows() - 1, 0);
    const double y = (*bb.Y)(bb.Y->rows() - 1, 0);
    xx[p] = x * x;
    yy[p] = y * y;
    xy[p] = x * y;
  }
  // RK4 on P' = M P + P M^T + D for mode 1 (a = 1).
  const double a = 1.0;
  const double al = a / regime.delta;
  double pxx = 0, pxy = 0, pyy = 0;
  auto rhs = [&](double Pxx, double Pxy, double Pyy, double& dxx, double& dxy, double& dyy) {
    dxx = -2 * a * Pxx + 2 * b * Pxy + eps;
    dxy = -(a + al) * Pxy + b * Pyy;
    dyy = -2 * al * Pyy + 1.0 / regime.delta;
  };
  const int M = 200000;
  const double h = 1.0 / M;
  for (int i = 0; i < M; ++i) {
    double k1[3], k2[3], k3[3], k4[3];
    rhs(pxx, pxy, pyy, k1[0], k1[1], k1[2]);
    rhs(pxx + h / 2 * k1[0], pxy + h / 2 * k1[1], pyy + h / 2 * k1[2], k2[0], k2[1], k2[2]);
    rhs(pxx + h / 2 * k2[0], pxy + h / 2 * k2[1], pyy + h / 2 * k2[2], k3[0], k3[1], k3[2]);
    rhs(pxx + h * k3[0], pxy + h * k3[1], pyy + h * k3[2], k4[0], k4[1], k4[2]);
    pxx += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
    pxy += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    pyy += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
  }
  for (const auto& [samples, expect] : {std::pair{&xx, pxx}, std::pair{&yy, pyy}, std::pair{&xy, pxy}}) {
    const auto mo = stats::moments(*samples);
    CHECK(std::abs(mo.mean - expect) <= 3.0 * mo.se_mean());
  }
}

TEST_CASE("bitwise reproducibility and exact noise scaling") {
  const ModelSpec m = make(ReactionSpec::tanh_sum(0.5, 0.3), ReactionSpec::tanh_y_damped(0.2));
  const auto r = with_delta(0.05, 0.01);
  const Field x0 = Field::unit(m.slow(), 0);
  const Field y0 = Field::zero(m.fast());
  const PathBundle a = simulate_slow_fast(m, r, ControlSpec::zero(), x0, y0, 0.2, 1e-3, 3);
  const PathBundle b = simulate_slow_fast(m, r, ControlSpec::zero(), x0, y0, 0.2, 1e-3, 3);
  CHECK(*a.X == *b.X);
  CHECK(*a.Y == *b.Y);

  // Pure noise, one step: the slow increment scales with sqrt(eps).
  const ModelSpec z = make(ReactionSpec::zero(), ReactionSpec::zero());
  const PathBundle e1 = simulate_slow_fast(z, with_delta(0.05, 0.01), ControlSpec::zero(), Field::zero(z.slow()),
                                           y0, 1e-3, 1e-3, 8);
  const PathBundle e2 = simulate_slow_fast(z, with_delta(0.10, 0.01), ControlSpec::zero(), Field::zero(z.slow()),
                                           y0, 1e-3, 1e-3, 8);
  CHECK((e2.X->row(1) - std::sqrt(2.0) * e1.X->row(1)).norm() <= 1e-15);
}

TEST_CASE("control energy accounting and cap") {
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  const auto r = with_delta(0.05, 0.01);
  auto law = [&](double) {
    return ControlValue{2.0 * Eigen::VectorXd::Unit(4, 0), Eigen::VectorXd::Zero(4)};
  };
  const PathBundle free = simulate_slow_fast(m, r, ControlSpec::open_loop(law), Field::zero(m.slow()),
                                             Field::zero(m.fast()), 1.0, 1e-3, 1, quiet());
  CHECK(free.control_energy == Approx(4.0));
  CHECK_FALSE(free.energy_cap_hit);
  // The noise-off controlled slow mode solves x' = -x + sqrt(eps) h 2. The
  // shift is weighted by the noise factor, not the drift factor: O(dt^2) per step.
  const double drive = r.eta_scale() * 2.0;
  CHECK((*free.X)(free.X->rows() - 1, 0) == Approx(drive * (1 - std::exp(-1.0))).epsilon(1e-6));

  const PathBundle capped = simulate_slow_fast(m, r, ControlSpec::open_loop(law, 1.0), Field::zero(m.slow()),
                                               Field::zero(m.fast()), 1.0, 1e-3, 1, quiet());
  CHECK(capped.energy_cap_hit);
  CHECK(capped.control_energy <= 1.0 + 1e-12);
  CHECK(capped.control_energy == Approx(1.0));
}

TEST_CASE("frozen fast process") {
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  const Field x = Field::zero(m.slow());
  SimulationOptions q;
  q.noise_off = true;
  const PathBundle det = simulate_frozen_fast(m, x, Field::unit(m.fast(), 0), 2.0, 0.01, 0, q);
  for (std::size_t i = 0; i < det.times.size(); i += 20) {
    CHECK((*det.Y)(static_cast<Eigen::Index>(i), 0) == Approx(std::exp(-det.times[i])).epsilon(1e-12));
  }
  // Stationary moments from many short independent runs.
  const int paths = 4000;
  std::vector<double> y1(paths), y2(paths);
  for (int p = 0; p < paths; ++p) {
    SimulationOptions o;
    o.path = static_cast<std::uint64_t>(p);
    const PathBundle b = simulate_frozen_fast(m, x, Field::zero(m.fast()), 8.0, 0.1, 12, o);
    y1[p] = (*b.Y)(b.Y->rows() - 1, 0);
    y2[p] = (*b.Y)(b.Y->rows() - 1, 1);
  }
  const auto m1 = stats::moments(y1);
  const auto m2 = stats::moments(y2);
  CHECK(std::abs(m1.mean) <= 3 * m1.se_mean());
  CHECK(std::abs(m2.mean) <= 3 * m2.se_mean());
  CHECK(std::abs(m1.variance - 0.5) <= 3 * m1.se_variance());
  CHECK(std::abs(m2.variance - 0.125) <= 3 * m2.se_variance());
}

TEST_CASE("first variation") {
  SECTION("g = 0 gives the semigroup") {
    const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
    const Field x = Field::zero(m.slow());
    const PathBundle y = simulate_frozen_fast(m, x, Field::zero(m.fast()), 1.0, 0.01, 4);
    const PathBundle z = simulate_first_variation(m, x, y, Field::unit(m.fast(), 0), 0.01);
    for (std::size_t i = 0; i < z.times.size(); ++i) {
      CHECK((*z.Z)(static_cast<Eigen::Index>(i), 0) == Approx(std::exp(-z.times[i])).epsilon(1e-12));
    }
    CHECK_THROWS_AS(simulate_first_variation(m, x, y, Field::unit(m.fast(), 0), 0.02), std::invalid_argument);
  }
  SECTION("step halving converges at first order") {
    const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::tanh_y_damped(0.2));
    const Field x = Field::unit(m.slow(), 0);
    Field y0 = Field::zero(m.fast());
    y0.coeffs << 1.5, -0.7, 0.3, 0.1;
    Field v = Field::zero(m.fast());
    v.coeffs << 1.0, 0.5, -0.25, 0.125;
    SimulationOptions q;
    q.noise_off = true;
    std::vector<Eigen::VectorXd> z1;
    for (double dt : {0.01, 0.005, 0.0025}) {
      const PathBundle y = simulate_frozen_fast(m, x, y0, 1.0, dt, 0, q);
      const PathBundle z = simulate_first_variation(m, x, y, v, dt);
      z1.push_back(z.Z->row(z.Z->rows() - 1).transpose());
    }
    const double d1 = (z1[0] - z1[1]).norm();
    const double d2 = (z1[1] - z1[2]).norm();
    CHECK(d1 < 1e-2);
    CHECK(d1 / d2 == Approx(2.0).margin(0.3));
    // Richardson-extrapolated values agree to higher order.
    const Eigen::VectorXd r1 = 2 * z1[1] - z1[0];
    const Eigen::VectorXd r2 = 2 * z1[2] - z1[1];
    CHECK((r1 - r2).norm() < 0.1 * d2);
  }
}

TEST_CASE("eta scaling") {
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  PathBundle x;
  x.times = uniform_grid(0.1, 0.05);
  x.dt = 0.05;
  x.X = TimeSeries::Zero(3, 4);
  PathBundle xbar = x;
  CHECK(compute_eta(x, xbar, RegimeParams::make(0.04, Regime::R1)).eta->norm() == 0.0);
  x.X->col(0).setConstant(0.1);
  const PathBundle e = compute_eta(x, xbar, RegimeParams::make(0.04, Regime::R1));
  CHECK((*e.eta)(2, 0) == Approx(0.1 / std::sqrt(0.2)));
  CHECK((*e.eta)(2, 0) == Approx(0.22361).margin(1e-5));
  CHECK((*compute_eta(x, xbar, RegimeParams::make(0.0016, Regime::R1)).eta)(1, 0) == Approx(0.5));
  PathBundle shorter = xbar;
  shorter.times = uniform_grid(0.05, 0.05);
  shorter.X = TimeSeries::Zero(2, 4);
  CHECK_THROWS_AS(compute_eta(x, shorter, RegimeParams::make(0.04, Regime::R1)), std::invalid_argument);
}
