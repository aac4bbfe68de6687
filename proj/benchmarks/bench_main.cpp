#include <benchmark/benchmark.h>

#include <mdspde/mdspde.hpp>

#include <numbers>
#include <vector>

using namespace mdspde;

namespace {

ModelSpec bnd(int modes) {
  const DomainSpec d{std::numbers::pi, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0};
  return ModelSpec(d, modes, ReactionSpec::tanh_sum(0.5, 0.3), ReactionSpec::tanh_y_damped(0.2),
                   DiffusionSpec::bounded_sigmoid(0.5, 1.5));
}

ModelSpec lin(int modes) {
  const DomainSpec d{std::numbers::pi, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0};
  return ModelSpec(d, modes, ReactionSpec::linear_y(0.3), ReactionSpec::zero(), DiffusionSpec::constant(1.0));
}

void BM_NormalFill(benchmark::State& state) {
  const NormalStream s(1, 0, Stream::SlowNoise);
  std::vector<double> buf(static_cast<std::size_t>(state.range(0)));
  std::uint64_t step = 0;
  for (auto _ : state) {
    s.fill(step++, buf);
    benchmark::DoNotOptimize(buf.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NormalFill)->Arg(16)->Arg(64);

// One exponential-Euler step of the coupled system; cost is dominated by the
// collocation transforms of the nonlinear reaction terms.
void BM_SlowFastStep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ModelSpec m = bnd(n);
  const RegimeParams r = RegimeParams::make(0.05, Regime::R1);
  const SlowFastStepper stepper(m, r, 1e-3);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 0.1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd xi1 = Eigen::VectorXd::Constant(n, 0.01);
  Eigen::VectorXd xi2 = Eigen::VectorXd::Constant(n, -0.01);
  for (auto _ : state) {
    stepper.step(x, y, xi1, xi2);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_SlowFastStep)->Arg(4)->Arg(16)->Arg(64);

void BM_SimulatePath(benchmark::State& state) {
  const ModelSpec m = bnd(16);
  const RegimeParams r = RegimeParams::make(0.05, Regime::R1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_slow_fast(m, r, ControlSpec::zero(), Field::zero(m.slow()),
                                                Field::zero(m.fast()), 0.1, 1e-3, seed++));
  }
}
BENCHMARK(BM_SimulatePath)->Unit(benchmark::kMillisecond);

void BM_SampleInvariant(benchmark::State& state) {
  const ModelSpec m = bnd(16);
  const Field x = Field::unit(m.slow(), 0);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_invariant(m, x, static_cast<int>(state.range(0)), 0.0, 0.0, 0.01, seed++, 4, 1));
  }
}
BENCHMARK(BM_SampleInvariant)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RateFunctional(benchmark::State& state) {
  const ModelSpec m = lin(16);
  const RegimeParams r = RegimeParams::make(0.01, Regime::R1);
  const double dt = 1e-3;
  const PathBundle xbar = solve_averaged(m, Field::zero(m.slow()), 1.0, dt, InvariantPolicy{}, 1);
  const OperatorSchedule ops(m, r, xbar, QPolicy{}, 1);
  const SmoothPath psi = SmoothPath::linear(m.slow(), 1.0, dt, 0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(rate_functional(m, psi, ops).S);
}
BENCHMARK(BM_RateFunctional)->Unit(benchmark::kMillisecond);

void BM_Psi2MonteCarlo(benchmark::State& state) {
  const ModelSpec m = bnd(8);
  const Field x = Field::unit(m.slow(), 0);
  const Field y = Field::zero(m.fast());
  Psi2Options o;
  o.m = 4;
  o.mc_paths = static_cast<int>(state.range(0));
  o.dt = 1e-2;
  o.workers = 1;
  for (auto _ : state) benchmark::DoNotOptimize(psi2_zero_matrix(m, x, y, o, 1).entries.sum());
}
BENCHMARK(BM_Psi2MonteCarlo)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
