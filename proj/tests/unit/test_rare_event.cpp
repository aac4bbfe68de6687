#include <catch2/catch_amalgamated.hpp>

#include <mdspde/rare_event.hpp>
#include <mdspde/stats.hpp>

#include <cmath>
#include <numbers>

using namespace mdspde;
using Catch::Approx;

namespace {

ModelSpec noise_only() {
  const DomainSpec d{std::numbers::pi, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0};
  return ModelSpec(d, 4, ReactionSpec::zero(), ReactionSpec::zero(), DiffusionSpec::constant(1.0));
}

constexpr double kEps = 0.05;

// eta_1(1) is centred Gaussian with this variance for the noise-only model.
double mode_one_variance() { return std::sqrt(kEps) * (1.0 - std::exp(-2.0)) / 2.0; }

}  // namespace

TEST_CASE("event parsing") {
  const EventSpec a = EventSpec::parse("terminal_mode:2,0.75");
  CHECK(a.kind == EventSpec::Kind::TerminalMode);
  CHECK(a.mode == 1);
  CHECK(a.r == 0.75);
  CHECK(EventSpec::parse(a.to_string()).mode == 1);
  CHECK(EventSpec::parse(a.to_string()).r == 0.75);
  CHECK(EventSpec::parse("sup_norm:1.5").kind == EventSpec::Kind::SupNorm);
  CHECK_FALSE(EventSpec::parse("sup_norm:1.5").terminal_only());
  CHECK(EventSpec::parse("terminal_norm:2").r == 2.0);
  for (const char* bad : {"terminal_mode:0,1", "terminal_mode:1", "terminal_norm:1,2", "sideways:1", "terminal_norm:x"}) {
    CHECK_THROWS_AS(EventSpec::parse(bad), std::invalid_argument);
  }
  Eigen::VectorXd eta(3);
  eta << 3.0, -4.0, 0.0;
  CHECK(EventSpec::terminal_norm(1).statistic(eta) == Approx(5.0));
  CHECK(EventSpec::terminal_mode(1, 1).statistic(eta) == 4.0);
}

TEST_CASE("plain estimator edge cases") {
  const ModelSpec m = noise_only();
  const RegimeParams r = RegimeParams::make(kEps, Regime::R1);
  const Estimate all = estimate_plain(m, r, EventSpec::terminal_mode(0, 0.0), 200, 1.0, 1e-3, 1);
  CHECK(all.p_hat == 1.0);
  CHECK(all.hits == 200u);
  CHECK(all.mean_weight == 1.0);

  const Estimate none = estimate_plain(m, r, EventSpec::terminal_mode(0, 50.0), 200, 1.0, 1e-3, 1);
  CHECK(none.hits == 0u);
  CHECK(none.p_hat == 0.0);
  CHECK(none.ci_upper == Approx(3.0 / 200));
  CHECK(std::isinf(none.relative_error));

  CHECK_THROWS_AS(estimate_plain(m, r, EventSpec::terminal_mode(0, 1.0), 0, 1.0, 1e-3, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_plain(m, r, EventSpec::terminal_mode(4, 1.0), 10, 1.0, 1e-3, 1), std::invalid_argument);
  CHECK_THROWS_AS(estimate_plain(m, r, EventSpec::terminal_mode(0, -1.0), 10, 1.0, 1e-3, 1), std::invalid_argument);
}

TEST_CASE("plain estimator against the Gaussian law") {
  const ModelSpec m = noise_only();
  const RegimeParams r = RegimeParams::make(kEps, Regime::R1);
  const double sd = std::sqrt(mode_one_variance());
  for (double level : {0.5 * sd, 1.5 * sd}) {
    const Estimate e = estimate_plain(m, r, EventSpec::terminal_mode(0, level), 4000, 1.0, 1e-3, 7);
    const double p = 2.0 * (1.0 - stats::normal_cdf(level / sd));
    CHECK(std::abs(e.p_hat - p) <= 3.0 * e.se);
  }
}

TEST_CASE("importance sampling") {
  const ModelSpec m = noise_only();
  const RegimeParams r = RegimeParams::make(kEps, Regime::R1);
  const double sd = std::sqrt(mode_one_variance());
  const double level = 2.5 * sd;
  const EventSpec event = EventSpec::terminal_mode(0, level);
  const std::size_t n = 3000;

  SECTION("zero controls reproduce the plain estimator") {
    const Estimate plain = estimate_plain(m, r, event, n, 1.0, 1e-3, 5);
    const Estimate is = estimate_importance(m, r, event, ControlSpec::zero(), n, 1.0, 1e-3, 5);
    CHECK(is.hits == plain.hits);
    CHECK(is.p_hat == Approx(plain.p_hat).epsilon(1e-12));
    CHECK(is.mean_weight == Approx(1.0).epsilon(1e-12));
  }
  SECTION("optimal controls reduce the second moment") {
    const double p = 2.0 * (1.0 - stats::normal_cdf(2.5));
    const Estimate plain = estimate_plain(m, r, event, n, 1.0, 1e-3, 6);
    const SmoothPath psi = SmoothPath::linear(m.slow(), 1.0, 1e-3, 0, level);
    const Estimate is = estimate_importance(m, r, event, psi, n, 1.0, 1e-3, 6);
    CHECK(std::abs(is.p_hat - p) <= 3.0 * is.se);
    CHECK(is.second_moment < p);  // plain second moment equals p
    CHECK(is.relative_error < plain.relative_error);
    CHECK(is.mean_weight == Approx(1.0).margin(0.15));
    CHECK(is.cap_hits == 0u);
    EstimateOptions one_sided;
    one_sided.symmetric_mixture = false;
    const Estimate half = estimate_importance(m, r, event, psi, n, 1.0, 1e-3, 6, one_sided);
    // Driving one way practically never visits the negative tail, so a finite
    // sample sees only half of the event; the mixture exists for this reason.
    CHECK(std::abs(half.p_hat - 0.5 * p) <= 3.0 * half.se);
  }
  SECTION("reproducible across worker counts") {
    EstimateOptions one;
    one.workers = 1;
    EstimateOptions two;
    two.workers = 2;
    const SmoothPath psi = SmoothPath::linear(m.slow(), 1.0, 1e-3, 0, level);
    const Estimate a = estimate_importance(m, r, event, psi, 200, 1.0, 1e-3, 9, one);
    const Estimate b = estimate_importance(m, r, event, psi, 200, 1.0, 1e-3, 9, two);
    CHECK(a.p_hat == b.p_hat);
    CHECK(a.second_moment == b.second_moment);
  }
}

TEST_CASE("asymptote") {
  const ModelSpec m = noise_only();
  const RegimeParams r = RegimeParams::make(0.01, Regime::R1);
  CHECK(mdp_asymptote(m, r, EventSpec::terminal_mode(0, 0.0)).S == 0.0);
  CHECK_THROWS_AS(mdp_asymptote(m, r, EventSpec::sup_norm(1.0)), std::invalid_argument);
  CHECK_THROWS_AS(mdp_asymptote(m, r, EventSpec::terminal_mode(0, -1.0)), std::invalid_argument);
  CHECK_THROWS_AS(mdp_asymptote(m, r, EventSpec::terminal_mode(4, 1.0)), std::invalid_argument);

  // Linear path c t e_1 in the noise-only model: residual c (1 + t), so S = 7 c^2 / 6,
  // minimized at the boundary c = r.
  AsymptoteConfig cfg;
  cfg.dt = 1e-3;
  const AsymptoteResult a = mdp_asymptote(m, r, EventSpec::terminal_mode(0, 0.8), cfg);
  CHECK(a.c == Approx(0.8).margin(1e-9));
  CHECK(a.S == Approx(7.0 / 6.0 * 0.64).margin(1e-5));
  // The norm event picks the slowest mode, which has the smallest residual.
  const AsymptoteResult b = mdp_asymptote(m, r, EventSpec::terminal_norm(0.8), cfg);
  CHECK(b.mode == 0);
  CHECK(b.S == Approx(a.S).margin(1e-9));
}
