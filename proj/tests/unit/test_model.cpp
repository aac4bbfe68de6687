#include <catch2/catch_amalgamated.hpp>

#include <mdspde/model.hpp>

#include <cmath>
#include <numbers>
#include <random>

using namespace mdspde;
using Catch::Approx;

namespace {

DomainSpec pi_domain() { return {std::numbers::pi, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0}; }

ModelSpec make(ReactionSpec f, ReactionSpec g, DiffusionSpec s = DiffusionSpec::constant(1.0), int n = 8) {
  return ModelSpec(pi_domain(), n, f, g, s);
}

Field random_field(const SpectralBasis& b, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> N;
  Field x = Field::zero(b);
  for (int k = 0; k < b.size(); ++k) x.coeffs[k] = scale * N(rng) / (k + 1.0);
  return x;
}

}  // namespace

TEST_CASE("family parsing round trips") {
  for (const char* text : {"zero", "linear_y(0.3)", "tanh_sum(1,0.3)", "tanh_y_damped(0.2)"}) {
    CHECK(ReactionSpec::parse(ReactionSpec::parse(text).to_string()).to_string() ==
          ReactionSpec::parse(text).to_string());
  }
  CHECK(DiffusionSpec::parse("bounded_sigmoid(0.5,1.5)").upper() == 1.5);
  CHECK_THROWS_AS(ReactionSpec::parse("cubic(1)"), std::invalid_argument);
  CHECK_THROWS_AS(ReactionSpec::parse("linear_y()"), std::invalid_argument);
  CHECK_THROWS_AS(DiffusionSpec::parse("constant(0)"), std::invalid_argument);
  CHECK_THROWS_AS(DiffusionSpec::parse("bounded_sigmoid(2,1)"), std::invalid_argument);
}

TEST_CASE("hypothesis reports") {
  const auto canon = validate_hypotheses(make(ReactionSpec::zero(), ReactionSpec::zero()));
  CHECK(canon.lambda == Approx(1.0));
  CHECK(canon.L_g == 0.0);
  CHECK(canon.ell == Approx(0.5));
  CHECK(canon.omega == Approx(0.5));
  CHECK(canon.pass());

  const auto damped = validate_hypotheses(make(ReactionSpec::zero(), ReactionSpec::tanh_y_damped(0.2)));
  CHECK(damped.L_g == Approx(0.2));
  CHECK(damped.omega == Approx(0.2));
  CHECK(damped.pass());

  const auto bad = validate_hypotheses(make(ReactionSpec::zero(), ReactionSpec::tanh_y_damped(0.4)));
  CHECK(bad.omega == Approx(-0.1));
  CHECK(bad.dissipative);
  CHECK_FALSE(bad.strongly_dissipative);
  CHECK_FALSE(bad.pass());

  CHECK_FALSE(validate_hypotheses(make(ReactionSpec::linear_y(0.3), ReactionSpec::zero())).f_bounded);
}

TEST_CASE("reaction evaluation examples") {
  const ModelSpec lin = make(ReactionSpec::linear_y(0.3), ReactionSpec::zero());
  const Field F = eval_reaction(lin, Reaction::F, Field::zero(lin.slow()), Field::unit(lin.fast(), 0));
  CHECK(F.coeffs[0] == Approx(0.3));
  CHECK(F.coeffs.tail(7).cwiseAbs().maxCoeff() <= 1e-12);

  const ModelSpec th = make(ReactionSpec::tanh_sum(1.0, 0.3), ReactionSpec::zero());
  CHECK(eval_reaction(th, Reaction::F, Field::zero(th.slow()), Field::zero(th.fast())).norm() <= 1e-14);

  // Fine-grid oracle of <tanh(0.5 e_1), e_1>.
  const ModelSpec th0 = make(ReactionSpec::tanh_sum(1.0, 0.0), ReactionSpec::zero(), DiffusionSpec::constant(1.0), 8);
  Field x = Field::zero(th0.slow());
  x.coeffs[0] = 0.5;
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const int M = 10000;
  const double h = std::numbers::pi / M;
  double oracle = 0.0;
  for (int i = 0; i <= M; ++i) {
    const double xi = i * h;
    const double w = (i == 0 || i == M) ? 0.5 : 1.0;
    oracle += w * h * std::tanh(0.5 * c * std::sin(xi)) * c * std::sin(xi);
  }
  // The retained-mode collocation aliases the higher harmonics of tanh.
  const ModelSpec fine = ModelSpec(pi_domain(), 8, ReactionSpec::tanh_sum(1.0, 0.0), ReactionSpec::zero(),
                                   DiffusionSpec::constant(1.0), 2001);
  CHECK(eval_reaction(fine, Reaction::F, x, Field::zero(fine.fast())).coeffs[0] == Approx(oracle).margin(1e-7));
  CHECK(eval_reaction(th0, Reaction::F, x, Field::zero(th0.fast())).coeffs[0] == Approx(oracle).margin(1e-4));
}

TEST_CASE("derivative examples and finite differences") {
  std::mt19937_64 rng(5);
  const ModelSpec lin = make(ReactionSpec::linear_y(0.3), ReactionSpec::zero());
  const Field x = random_field(lin.slow(), rng);
  const Field y = random_field(lin.fast(), rng);
  const Field chi_s = random_field(lin.slow(), rng);
  const Field chi_f = random_field(lin.fast(), rng);
  CHECK(eval_derivative(lin, Derivative::DxF, x, y, chi_s).norm() <= 1e-14);
  CHECK((eval_derivative(lin, Derivative::DyF, x, y, chi_f).coeffs - 0.3 * chi_f.coeffs).norm() <= 1e-12);

  const ModelSpec th = make(ReactionSpec::tanh_sum(1.0, 0.3), ReactionSpec::tanh_y_damped(0.2));
  CHECK((eval_derivative(th, Derivative::DxF, Field::zero(th.slow()), y, chi_s).coeffs - chi_s.coeffs).norm() <= 1e-12);
  CHECK_THROWS_AS(eval_derivative(th, Derivative::DxxF, x, y, chi_s), std::invalid_argument);

  auto fd_error = [&](double h) {
    Field xp = x;
    xp.coeffs += h * chi_s.coeffs;
    const Eigen::VectorXd fd = (eval_reaction(th, Reaction::F, xp, y).coeffs - eval_reaction(th, Reaction::F, x, y).coeffs) / h;
    return (fd - eval_derivative(th, Derivative::DxF, x, y, chi_s).coeffs).norm();
  };
  const double e3 = fd_error(1e-3);
  const double e4 = fd_error(1e-4);
  CHECK(e3 < 1e-2);
  CHECK(e4 < 0.2 * e3);

  // Second derivative against a difference of first derivatives.
  Field xp = x;
  const double h = 1e-5;
  xp.coeffs += h * chi_s.coeffs;
  const Eigen::VectorXd fd2 = (eval_derivative(th, Derivative::DxF, xp, y, chi_s).coeffs -
                               eval_derivative(th, Derivative::DxF, x, y, chi_s).coeffs) / h;
  CHECK((fd2 - eval_derivative(th, Derivative::DxxF, x, y, chi_s, chi_s).coeffs).norm() < 1e-3);
}

TEST_CASE("sigma multiplication") {
  std::mt19937_64 rng(6);
  const ModelSpec one = make(ReactionSpec::zero(), ReactionSpec::zero());
  const ModelSpec two = make(ReactionSpec::zero(), ReactionSpec::zero(), DiffusionSpec::constant(2.0));
  const ModelSpec sig = make(ReactionSpec::zero(), ReactionSpec::zero(), DiffusionSpec::bounded_sigmoid(0.5, 1.5));
  for (int i = 0; i < 1000; ++i) {
    const Field x = random_field(one.slow(), rng, 3.0);
    const Field y = random_field(one.fast(), rng, 3.0);
    const Field u = random_field(one.slow(), rng);
    const Field v = random_field(one.slow(), rng);
    CHECK((apply_sigma(one, x, y, u).coeffs - u.coeffs).norm() <= 1e-13);
    CHECK((apply_sigma(two, x, y, u).coeffs - 2.0 * u.coeffs).norm() <= 1e-13);
    const Field su = apply_sigma(sig, x, y, u);
    CHECK(su.norm() <= 1.5 * u.norm() * (1 + 1e-12));
    CHECK(std::abs(su.coeffs.dot(v.coeffs) - u.coeffs.dot(apply_sigma(sig, x, y, v).coeffs)) <= 1e-10);
  }
}

TEST_CASE("Lipschitz bound and derivative bounds") {
  std::mt19937_64 rng(7);
  const ModelSpec th = make(ReactionSpec::tanh_sum(1.0, 0.3), ReactionSpec::tanh_y_damped(0.2));
  const auto bounds = th.f().bounds();
  for (int i = 0; i < 100; ++i) {
    const Field x1 = random_field(th.slow(), rng, 2.0);
    const Field x2 = random_field(th.slow(), rng, 2.0);
    const Field y = random_field(th.fast(), rng, 2.0);
    const double lhs = (eval_reaction(th, Reaction::F, x1, y).coeffs - eval_reaction(th, Reaction::F, x2, y).coeffs).norm();
    CHECK(lhs <= bounds.dx * (x1.coeffs - x2.coeffs).norm() + 1e-8);
  }
  std::uniform_real_distribution<double> U(-20.0, 20.0);
  for (const ReactionSpec& r : {ReactionSpec::tanh_sum(1.0, 0.3), ReactionSpec::tanh_y_damped(0.2),
                                ReactionSpec::tanh_sum(-0.7, 2.0), ReactionSpec::linear_y(-0.4)}) {
    const auto b = r.bounds();
    for (int i = 0; i < 100000; ++i) {
      const double x = U(rng);
      const double y = U(rng);
      REQUIRE(std::abs(r.dx(x, y)) <= b.dx + 1e-15);
      REQUIRE(std::abs(r.dy(x, y)) <= b.dy + 1e-15);
    }
  }
}

TEST_CASE("model construction validates inputs") {
  CHECK_THROWS_AS(ModelSpec(pi_domain(), 0, ReactionSpec::zero(), ReactionSpec::zero(), DiffusionSpec::constant(1.0)),
                  std::invalid_argument);
  const ModelSpec m = make(ReactionSpec::zero(), ReactionSpec::zero());
  const ModelSpec other(pi_domain(), 4, ReactionSpec::zero(), ReactionSpec::zero(), DiffusionSpec::constant(1.0));
  CHECK_THROWS_AS(eval_reaction(m, Reaction::F, Field::zero(other.slow()), Field::zero(m.fast())), std::invalid_argument);
}
