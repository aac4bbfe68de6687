#include "mdspde/kolmogorov.hpp"

#include "mdspde/parallel.hpp"
#include "mdspde/rng.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdspde {

namespace {

bool linear_in_y(const ReactionSpec& r) {
  return r.family == ReactionSpec::Family::Zero || r.family == ReactionSpec::Family::LinearY;
}

double trapezoid_weight(std::size_t k, std::size_t steps, double dt) {
  return (k == 0 || k == steps) ? 0.5 * dt : dt;
}

// Quadrature of (D_yF(x, Y) Z)[:m, :m] e^{-c t} along one frozen path.
// Z starts at the first m fast unit vectors and shares the path's noise.
Eigen::MatrixXd psi2_path(const ModelSpec& model, const FrozenFastStepper& stepper,
                          const Eigen::VectorXd& y0, int m, std::size_t steps, double dt,
                          double discount, const NormalStream* noise) {
  const int n = model.modes();
  const auto& grid = model.grid();
  const Eigen::MatrixXd& Bs = grid.synthesis(Component::Slow);
  const Eigen::MatrixXd& Bf = grid.synthesis(Component::Fast);
  const Eigen::VectorXd& xg = stepper.x_grid();
  const auto& f = model.f();
  const double sqrt_dt = std::sqrt(dt);

  Eigen::VectorXd y = y0;
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(n, m);
  Eigen::VectorXd dw = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd d(grid.points());
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t k = 0; k <= steps; ++k) {
    const double w = trapezoid_weight(k, steps, dt) * std::exp(-discount * static_cast<double>(k) * dt);
    const Eigen::VectorXd yg = Bf * y;
    for (Eigen::Index q = 0; q < d.size(); ++q) d[q] = f.dy(xg[q], yg[q]);
    const Eigen::MatrixXd zg = d.asDiagonal() * (Bf * z);
    acc.noalias() += (w * grid.weight()) * (Bs.leftCols(m).transpose() * zg);
    if (k == steps) break;
    stepper.vary(z, y);
    if (noise != nullptr) noise->fill(k, std::span<double>(dw.data(), n), sqrt_dt);
    stepper.step(y, dw);
  }
  return acc;
}

}  // namespace

double Psi2Matrix::operator_norm() const {
  if (entries.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(entries).singularValues()(0);
}

double resolve_t_max(const ModelSpec& model, double t_max) {
  const double ell = model.ell();
  if (t_max <= 0.0) t_max = 10.0 / ell;
  if (t_max * ell < 5.0) {
    throw std::invalid_argument("t_max * ell = " + std::to_string(t_max * ell) +
                                " < 5: quadrature tail not negligible");
  }
  return t_max;
}

Psi2Matrix psi2_zero_matrix(const ModelSpec& model, const Field& x, const Field& y,
                            const Psi2Options& options, std::uint64_t seed) {
  require_basis(x, model.slow(), "psi2_zero_matrix(x)");
  require_basis(y, model.fast(), "psi2_zero_matrix(y)");
  require_dissipative(model, "psi2_zero_matrix");
  const int m = options.m;
  if (m < 1 || m > model.modes()) throw std::invalid_argument("psi2_zero_matrix: m out of range");
  if (options.mc_paths < 1) throw std::invalid_argument("psi2_zero_matrix: mc_paths must be >= 1");
  if (options.discount < 0.0) throw std::invalid_argument("psi2_zero_matrix: negative discount");
  check_step(options.dt, 1.0, "psi2_zero_matrix");

  Psi2Matrix out;
  out.frozen_x = x;
  out.anchor_y = y;
  out.t_max = resolve_t_max(model, options.t_max);
  out.dt = options.dt;
  out.discount = options.discount;
  const double ell = model.ell();
  out.tail_bound = model.f().bounds().dy * std::exp(-ell * out.t_max) / ell;
  out.se = Eigen::MatrixXd::Zero(m, m);

  if (model.f().independent_of_y()) {
    out.entries = Eigen::MatrixXd::Zero(m, m);
    out.deterministic = true;
    out.mc_paths = 0;
    return out;
  }
  const auto steps = static_cast<std::size_t>(std::ceil(out.t_max / options.dt - 1e-9));
  const FrozenFastStepper stepper(model, x.coeffs, options.dt);

  // With constant d_y f and d_y g neither factor depends on the path.
  if (model.f().dy_constant() && model.g().dy_constant()) {
    out.entries = psi2_path(model, stepper, y.coeffs, m, steps, options.dt, options.discount, nullptr);
    out.deterministic = true;
    out.mc_paths = 1;
    return out;
  }

  const auto paths = static_cast<std::size_t>(options.mc_paths);
  std::vector<Eigen::MatrixXd> per_path(paths);
  parallel_for(paths, options.workers, [&](std::size_t p) {
    const NormalStream noise(seed, p, Stream::FrozenNoise);
    per_path[p] = psi2_path(model, stepper, y.coeffs, m, steps, options.dt, options.discount, &noise);
  });
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(m, m);
  for (const auto& v : per_path) {
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const double P = static_cast<double>(paths);
  out.entries = sum / P;
  if (paths > 1) {
    out.se = (((sq.array() - P * out.entries.array().square()) / (P - 1.0)).max(0.0) / P).sqrt().matrix();
  }
  out.mc_paths = options.mc_paths;
  return out;
}

PhiValue phi_eps_value(const ModelSpec& model, const RegimeParams& regime, const Field& x,
                       const Field& y, const Field& chi, int mc_paths, double t_max, double dt,
                       std::uint64_t seed, const InvariantSample* inv) {
  require_basis(x, model.slow(), "phi_eps_value(x)");
  require_basis(y, model.fast(), "phi_eps_value(y)");
  require_basis(chi, model.slow(), "phi_eps_value(chi)");
  require_dissipative(model, "phi_eps_value");
  check_step(dt, 1.0, "phi_eps_value");
  t_max = resolve_t_max(model, t_max);

  PhiValue out;
  if (model.f().independent_of_y()) {
    out.deterministic = true;
    return out;
  }
  const auto steps = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
  const FrozenFastStepper stepper(model, x.coeffs, dt);
  const Eigen::VectorXd& xg = stepper.x_grid();
  const double c = regime.c_eps;
  const int n = model.modes();

  auto integrate = [&](const Eigen::VectorXd& fbar, const NormalStream* noise) {
    Eigen::VectorXd yk = y.coeffs;
    Eigen::VectorXd dw = Eigen::VectorXd::Zero(n);
    const double sqrt_dt = std::sqrt(dt);
    double acc = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) {
      const double w = trapezoid_weight(k, steps, dt) * std::exp(-c * static_cast<double>(k) * dt);
      acc += w * chi.coeffs.dot(model.reaction_f_grid(xg, yk) - fbar);
      if (k == steps) break;
      if (noise != nullptr) noise->fill(k, std::span<double>(dw.data(), n), sqrt_dt);
      stepper.step(yk, dw);
    }
    return acc;
  };

  // f affine and g linear in y: E F(x, Y(t)) = F(x, E Y(t)), E Y follows the
  // noise-free flow and Fbar(x) = F(x, 0).
  if (linear_in_y(model.f()) && linear_in_y(model.g())) {
    const Eigen::VectorXd fbar = model.reaction_f_grid(xg, Eigen::VectorXd::Zero(n));
    out.value = integrate(fbar, nullptr);
    out.deterministic = true;
    return out;
  }
  if (inv == nullptr) throw std::invalid_argument("phi_eps_value: invariant sample required for Fbar");
  if (mc_paths < 1) throw std::invalid_argument("phi_eps_value: mc_paths must be >= 1");
  const Eigen::VectorXd fbar = averaged_drift(model, x, *inv).value.coeffs;
  std::vector<double> vals(static_cast<std::size_t>(mc_paths));
  parallel_for(vals.size(), 0, [&](std::size_t p) {
    const NormalStream noise(seed, p, Stream::FrozenNoise);
    vals[p] = integrate(fbar, &noise);
  });
  double sum = 0.0;
  double sq = 0.0;
  for (double v : vals) {
    sum += v;
    sq += v * v;
  }
  const double P = static_cast<double>(vals.size());
  out.value = sum / P;
  if (vals.size() > 1) out.se = std::sqrt(std::max(0.0, (sq - P * out.value * out.value) / (P - 1.0)) / P);
  return out;
}

std::pair<double, double> psi2_continuity_modulus(const ModelSpec& model, const Field& x1,
                                                  const Field& x2, const Field& y1,
                                                  const Field& y2, const Psi2Options& options,
                                                  std::uint64_t seed) {
  const auto report = validate_hypotheses(model);
  if (!report.strongly_dissipative) {
    throw HypothesisError("psi2_continuity_modulus: requires omega > 0");
  }
  require_basis(x1, model.slow(), "psi2_continuity_modulus(x1)");
  require_basis(x2, model.slow(), "psi2_continuity_modulus(x2)");
  require_basis(y1, model.fast(), "psi2_continuity_modulus(y1)");
  require_basis(y2, model.fast(), "psi2_continuity_modulus(y2)");
  const double dx = (x1.coeffs - x2.coeffs).norm();
  const double dy = (y1.coeffs - y2.coeffs).norm();
  if (dx == 0.0 || dy == 0.0) throw std::invalid_argument("psi2_continuity_modulus: coincident inputs");

  auto spectral = [](const Eigen::MatrixXd& a) {
    return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
  };
  const auto m11 = psi2_zero_matrix(model, x1, y1, options, seed);
  const auto m21 = psi2_zero_matrix(model, x2, y1, options, seed);
  const auto m12 = psi2_zero_matrix(model, x1, y2, options, seed);
  return {spectral(m11.entries - m21.entries) / dx, spectral(m11.entries - m12.entries) / dy};
}

}  // namespace mdspde
