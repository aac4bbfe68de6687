#include <catch2/catch_amalgamated.hpp>

#include <mdspde/occupation.hpp>

#include <cmath>
#include <numbers>

using namespace mdspde;
using Catch::Approx;

namespace {

ModelSpec lin() {
  const DomainSpec d{std::numbers::pi, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0};
  return ModelSpec(d, 4, ReactionSpec::linear_y(0.3), ReactionSpec::zero(), DiffusionSpec::constant(1.0));
}

PathBundle uncontrolled(const ModelSpec& m, const RegimeParams& r, double T, double dt, std::uint64_t seed) {
  return simulate_slow_fast(m, r, ControlSpec::zero(), Field::zero(m.slow()), Field::zero(m.fast()), T, dt, seed);
}

}  // namespace

TEST_CASE("occupation measure bookkeeping") {
  const ModelSpec m = lin();
  const RegimeParams r = RegimeParams::make(0.01, Regime::R1);
  const double dt = 1e-4;
  const PathBundle b = uncontrolled(m, r, 0.6, dt, 1);
  const OccupationMeasure occ = build_occupation(b, r);

  CHECK(occ.Delta == Approx(std::pow(0.01, 0.25)));
  CHECK(std::abs(occ.Delta_eff - occ.Delta) <= 0.5 * dt);
  CHECK(occ.T == Approx(0.6 - occ.Delta_eff).margin(1e-9));
  CHECK(occ.cells.size() <= 1'000'000u);
  CHECK(occ.ks > 1);
  CHECK(occ.u1 == nullptr);
  CHECK(occ.u2 == nullptr);
  CHECK(occ.total_weight() == Approx(occ.T).epsilon(1e-9));
  for (double t : {0.0, 0.05, 0.1, 0.2, 0.28}) {
    const double w = occ.time_marginal(t);
    CHECK(w >= t - dt);
    CHECK(w <= t + dt + 1e-9);
  }
  bool inside = true;
  for (const auto& c : occ.cells) {
    inside = inside && c.s_index >= c.t_index &&
             c.s_index < c.t_index + static_cast<std::size_t>(occ.window_steps);
  }
  CHECK(inside);

  // Cell aggregation preserves the time marginal.
  const OccupationMeasure fine = build_occupation(b, r, 100'000'000);
  CHECK(fine.ks == 1);
  CHECK(fine.total_weight() == Approx(occ.total_weight()).epsilon(1e-9));
  CHECK(fine.time_marginal(0.1) == Approx(occ.time_marginal(0.1)).epsilon(1e-9));
}

TEST_CASE("occupation y-marginal matches the invariant variance") {
  const ModelSpec m = lin();
  const RegimeParams r = RegimeParams::make(0.01, Regime::R1);
  const PathBundle b = uncontrolled(m, r, 0.6, 1e-4, 2);
  const OccupationMeasure occ = build_occupation(b, r);
  double w = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& c : occ.cells) {
    const double y = (*occ.Y)(static_cast<Eigen::Index>(c.s_index), 0);
    w += c.weight;
    s1 += c.weight * y;
    s2 += c.weight * y * y;
  }
  const double mean = s1 / w;
  // Mode one of the fast OU process relaxes at rate 1 / delta; variance 1/2.
  CHECK(std::abs(mean) <= 0.15);
  CHECK(s2 / w - mean * mean == Approx(0.5).margin(0.1));
}

TEST_CASE("occupation argument checks") {
  const ModelSpec m = lin();
  RegimeOverrides o;
  o.Delta = 1.5e-4;
  const RegimeParams narrow = RegimeParams::make(0.01, Regime::R1, 0.0, o);
  const PathBundle b = uncontrolled(m, narrow, 0.05, 1e-4, 3);
  CHECK_THROWS_AS(build_occupation(b, narrow), std::invalid_argument);
  o.Delta = 0.5;
  CHECK_THROWS_AS(build_occupation(b, RegimeParams::make(0.01, Regime::R1, 0.0, o)), std::invalid_argument);
  o.Delta = 0.01;
  const RegimeParams ok = RegimeParams::make(0.01, Regime::R1, 0.0, o);
  CHECK_THROWS_AS(build_occupation(b, ok, 0), std::invalid_argument);
  PathBundle no_y = b;
  no_y.Y.reset();
  CHECK_THROWS_AS(build_occupation(no_y, ok), std::invalid_argument);
}

TEST_CASE("decoupling test on an uncontrolled linear system") {
  const ModelSpec m = lin();
  const RegimeParams r = RegimeParams::make(0.01, Regime::R1);
  const double dt = 1e-4;
  const PathBundle b = uncontrolled(m, r, 1.0, dt, 4);
  const PathBundle xbar = solve_averaged(m, Field::zero(m.slow()), 1.0, dt, InvariantPolicy{}, 4);
  const OccupationMeasure occ = build_occupation(b, r);
  DecouplingOptions opts;
  opts.reference.dt = 0.05;
  const DecouplingReport rep = decoupling_test(occ, m, xbar, r, 4, 4, opts);

  CHECK(rep.diagnostic == Approx(std::pow(0.01, 0.75)).epsilon(1e-9));
  REQUIRE(rep.cells.size() == 16u);
  // Reference law of the linear model: centred with variance 1 / (2 k^2).
  for (const auto& c : rep.cells) {
    CHECK(c.ref_var == Approx(0.5 / ((c.mode + 1.0) * (c.mode + 1.0))).epsilon(0.15));
    CHECK(c.t_hi - c.t_lo == Approx(std::min(occ.Delta_eff, occ.T / 4)).epsilon(1e-9));
    CHECK_FALSE(c.low_ess);
  }
  CHECK(rep.pass_fraction() >= 0.75);
  CHECK(rep.passed() == static_cast<int>(std::lround(rep.pass_fraction() * 16)));

  CHECK_THROWS_AS(decoupling_test(occ, m, xbar, r, 5, 4, opts), std::invalid_argument);
  CHECK_THROWS_AS(decoupling_test(occ, m, xbar, r, 0, 4, opts), std::invalid_argument);
  DecouplingOptions none = opts;
  none.windows = 0;
  CHECK_THROWS_AS(decoupling_test(occ, m, xbar, r, 4, 4, none), std::invalid_argument);
}
