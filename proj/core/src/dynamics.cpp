#include "mdspde/dynamics.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace mdspde {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be positive and finite");
  }
}

std::span<double> as_span(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

std::string_view to_string(Regime r) { return r == Regime::R1 ? "R1" : "R2"; }

Regime parse_regime(std::string_view s) {
  if (s == "R1" || s == "r1" || s == "1") return Regime::R1;
  if (s == "R2" || s == "r2" || s == "2") return Regime::R2;
  throw std::invalid_argument("unknown regime '" + std::string(s) + "' (expected R1 or R2)");
}

RegimeParams RegimeParams::make(double epsilon, Regime regime, double gamma,
                                const RegimeOverrides& overrides) {
  require_positive(epsilon, "epsilon");
  RegimeParams p;
  p.epsilon = epsilon;
  p.regime = regime;
  if (regime == Regime::R2) {
    require_positive(gamma, "gamma (regime R2)");
    p.gamma = gamma;
    p.delta = gamma * gamma * epsilon;
  } else {
    p.gamma = 0.0;
    p.delta = std::pow(epsilon, 1.5);
  }
  p.h = std::pow(epsilon, -0.25);
  p.Delta_occ = std::pow(epsilon, 0.25);
  p.c_eps = std::sqrt(epsilon);
  if (overrides.delta) p.delta = *overrides.delta;
  if (overrides.h) p.h = *overrides.h;
  if (overrides.Delta) p.Delta_occ = *overrides.Delta;
  if (overrides.c) p.c_eps = *overrides.c;
  require_positive(p.delta, "delta");
  require_positive(p.h, "h");
  require_positive(p.Delta_occ, "Delta");
  if (!(p.c_eps >= 0.0)) throw std::invalid_argument("c must be non-negative");
  return p;
}

double RegimeParams::eta_scale() const { return std::sqrt(epsilon) * h; }

ControlSpec ControlSpec::open_loop(std::function<ControlValue(double)> path, double cap) {
  if (!path) throw std::invalid_argument("ControlSpec::open_loop: empty path");
  ControlSpec c;
  c.kind = Kind::OpenLoop;
  c.law = [p = std::move(path)](double t, const Eigen::VectorXd&) { return p(t); };
  c.energy_cap = cap;
  c.y_independent = true;
  return c;
}

ControlSpec ControlSpec::feedback(Law law, double cap) {
  if (!law) throw std::invalid_argument("ControlSpec::feedback: empty law");
  ControlSpec c;
  c.kind = Kind::Feedback;
  c.law = std::move(law);
  c.energy_cap = cap;
  return c;
}

ControlValue ControlSpec::evaluate(double t, const Eigen::VectorXd& y, int n_slow, int n_fast) const {
  if (kind == Kind::Zero) return {Eigen::VectorXd::Zero(n_slow), Eigen::VectorXd::Zero(n_fast)};
  ControlValue v = law(t, y);
  if (v.u1.size() == 0) v.u1 = Eigen::VectorXd::Zero(n_slow);
  if (v.u2.size() == 0) v.u2 = Eigen::VectorXd::Zero(n_fast);
  if (v.u1.size() != n_slow || v.u2.size() != n_fast) {
    throw std::invalid_argument("ControlSpec: control dimension does not match the model");
  }
  return v;
}

bool PathBundle::same_grid(const PathBundle& other) const {
  if (times.size() != other.times.size() || dt != other.dt) return false;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] != other.times[i]) return false;
  }
  return true;
}

std::vector<double> uniform_grid(double T, double dt) {
  require_positive(T, "T");
  require_positive(dt, "dt");
  const double ratio = T / dt;
  const auto n = static_cast<long long>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-8 * std::max(1.0, ratio)) {
    throw std::invalid_argument("T must be an integer multiple of dt");
  }
  std::vector<double> t(static_cast<std::size_t>(n) + 1);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * dt;
  return t;
}

void check_step(double dt, double delta, std::string_view who) {
  require_positive(dt, "dt");
  if (dt > delta / 10.0 * (1.0 + 1e-12)) {
    throw std::invalid_argument(std::string(who) + ": dt = " + std::to_string(dt) +
                                " exceeds delta / 10 = " + std::to_string(delta / 10.0));
  }
}

SlowFastStepper::SlowFastStepper(const ModelSpec& model, const RegimeParams& regime, double dt)
    : model_(&model),
      dt_(dt),
      sqrt_eps_(std::sqrt(regime.epsilon)),
      inv_delta_(1.0 / regime.delta),
      inv_sqrt_delta_(1.0 / std::sqrt(regime.delta)),
      slow_(model.slow().eigenvalues(), dt),
      fast_(model.fast().eigenvalues() / regime.delta, dt) {}

void SlowFastStepper::step(Eigen::VectorXd& x, Eigen::VectorXd& y, const Eigen::VectorXd& xi1,
                           const Eigen::VectorXd& xi2) const {
  const Eigen::VectorXd F = model_->reaction_f(x, y);
  const Eigen::VectorXd G = model_->reaction_g(x, y);
  const Eigen::VectorXd noise = model_->sigma_apply(x, y, xi1);
  x = (slow_.decay * x.array() + slow_.drift * (dt_ * F.array()) +
       sqrt_eps_ * slow_.noise * noise.array())
          .matrix();
  y = (fast_.decay * y.array() + fast_.drift * ((dt_ * inv_delta_) * G.array()) +
       inv_sqrt_delta_ * fast_.noise * xi2.array())
          .matrix();
}

FrozenFastStepper::FrozenFastStepper(const ModelSpec& model, const Eigen::VectorXd& x, double dt)
    : model_(&model),
      dt_(dt),
      x_grid_(model.grid().to_grid(Component::Slow, x)),
      factors_(model.fast().eigenvalues(), dt),
      linear_g_(model.g().dy_constant()) {
  if (linear_g_) {
    dyg_const_ = model.dyg_matrix_grid(x_grid_, Eigen::VectorXd::Zero(model.fast().size()));
  }
}

void FrozenFastStepper::step(Eigen::VectorXd& y, const Eigen::VectorXd& dw) const {
  const Eigen::VectorXd G = model_->reaction_g_grid(x_grid_, y);
  y = (factors_.decay * y.array() + factors_.drift * (dt_ * G.array()) + factors_.noise * dw.array())
          .matrix();
}

void FrozenFastStepper::vary(Eigen::MatrixXd& z, const Eigen::VectorXd& y) const {
  Eigen::MatrixXd dz = linear_g_ ? Eigen::MatrixXd(dyg_const_ * z)
                                 : Eigen::MatrixXd(model_->dyg_matrix_grid(x_grid_, y) * z);
  z = (factors_.decay.matrix().asDiagonal() * z) +
      (factors_.drift.matrix().asDiagonal() * (dt_ * dz));
}

PathBundle simulate_slow_fast(const ModelSpec& model, const RegimeParams& regime,
                              const ControlSpec& control, const Field& x0, const Field& y0,
                              double T, double dt, std::uint64_t seed,
                              const SimulationOptions& options) {
  require_basis(x0, model.slow(), "simulate_slow_fast(x0)");
  require_basis(y0, model.fast(), "simulate_slow_fast(y0)");
  check_step(dt, regime.delta, "simulate_slow_fast");
  if (!(control.energy_cap >= 0.0)) throw std::invalid_argument("energy cap must be non-negative");

  PathBundle out;
  out.times = uniform_grid(T, dt);
  out.dt = dt;
  out.seed = seed;
  out.noise_off = options.noise_off;
  const auto steps = out.steps();
  const int n = model.modes();
  const bool controlled = control.kind != ControlSpec::Kind::Zero;

  TimeSeries X(steps + 1, n);
  TimeSeries Y(steps + 1, n);
  TimeSeries U1;
  TimeSeries U2;
  if (controlled) {
    U1.setZero(steps + 1, n);
    U2.setZero(steps + 1, n);
  }

  const SlowFastStepper stepper(model, regime, dt);
  const NormalStream slow_noise(seed, options.path, Stream::SlowNoise);
  const NormalStream fast_noise(seed, options.path, Stream::FastNoise);
  const double sqrt_dt = std::sqrt(dt);

  Eigen::VectorXd x = x0.coeffs;
  Eigen::VectorXd y = y0.coeffs;
  Eigen::VectorXd xi1 = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd xi2 = Eigen::VectorXd::Zero(n);
  X.row(0) = x.transpose();
  Y.row(0) = y.transpose();

  // Energy is the left Riemann sum of |u|^2 dt, which is also the quadratic
  // term of the discrete Girsanov density. Clipping keeps it <= cap.
  double energy = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (options.noise_off) {
      xi1.setZero();
      xi2.setZero();
    } else {
      slow_noise.fill(k, as_span(xi1), sqrt_dt);
      fast_noise.fill(k, as_span(xi2), sqrt_dt);
    }
    if (controlled) {
      ControlValue u = control.evaluate(out.times[k], y, n, n);
      const double e = u.u1.squaredNorm() + u.u2.squaredNorm();
      if (energy + dt * e > control.energy_cap) {
        const double room = std::max(0.0, control.energy_cap - energy);
        const double s = e > 0.0 ? std::sqrt(std::min(1.0, room / (dt * e))) : 0.0;
        u.u1 *= s;
        u.u2 *= s;
        out.energy_cap_hit = true;
        energy = control.energy_cap;
      } else {
        energy += dt * e;
      }
      U1.row(k) = u.u1.transpose();
      U2.row(k) = u.u2.transpose();
      xi1 += (regime.h * dt) * u.u1;
      xi2 += (regime.h * dt) * u.u2;
    }
    stepper.step(x, y, xi1, xi2);
    X.row(k + 1) = x.transpose();
    Y.row(k + 1) = y.transpose();
  }
  if (controlled && steps > 0) {
    U1.row(steps) = U1.row(steps - 1);
    U2.row(steps) = U2.row(steps - 1);
  }

  out.X = std::move(X);
  out.Y = std::move(Y);
  if (controlled) {
    out.u1 = std::move(U1);
    out.u2 = std::move(U2);
  }
  out.control_energy = energy;
  return out;
}

PathBundle simulate_frozen_fast(const ModelSpec& model, const Field& x, const Field& y0, double T,
                                double dt, std::uint64_t seed, const SimulationOptions& options) {
  require_basis(x, model.slow(), "simulate_frozen_fast(x)");
  require_basis(y0, model.fast(), "simulate_frozen_fast(y0)");
  check_step(dt, 1.0, "simulate_frozen_fast");

  PathBundle out;
  out.times = uniform_grid(T, dt);
  out.dt = dt;
  out.seed = seed;
  out.noise_off = options.noise_off;
  const auto steps = out.steps();
  const int n = model.modes();

  const FrozenFastStepper stepper(model, x.coeffs, dt);
  const NormalStream noise(seed, options.path, Stream::FrozenNoise);
  const double sqrt_dt = std::sqrt(dt);

  TimeSeries Y(steps + 1, n);
  Eigen::VectorXd y = y0.coeffs;
  Eigen::VectorXd dw = Eigen::VectorXd::Zero(n);
  Y.row(0) = y.transpose();
  for (std::size_t k = 0; k < steps; ++k) {
    if (!options.noise_off) noise.fill(k, as_span(dw), sqrt_dt);
    stepper.step(y, dw);
    Y.row(k + 1) = y.transpose();
  }
  out.Y = std::move(Y);
  return out;
}

PathBundle simulate_first_variation(const ModelSpec& model, const Field& x,
                                    const PathBundle& y_path, const Field& v, double dt) {
  require_basis(x, model.slow(), "simulate_first_variation(x)");
  require_basis(v, model.fast(), "simulate_first_variation(v)");
  if (!y_path.Y) throw std::invalid_argument("simulate_first_variation: bundle has no Y path");
  if (std::abs(y_path.dt - dt) > 1e-15 * std::max(1.0, dt)) {
    throw std::invalid_argument("simulate_first_variation: dt differs from the fast path grid");
  }
  check_step(dt, 1.0, "simulate_first_variation");

  const auto steps = y_path.steps();
  const int n = model.modes();
  const FrozenFastStepper stepper(model, x.coeffs, dt);

  PathBundle out;
  out.times = y_path.times;
  out.dt = dt;
  out.seed = y_path.seed;
  out.noise_off = y_path.noise_off;
  TimeSeries Z(steps + 1, n);
  Eigen::MatrixXd z = v.coeffs;
  Z.row(0) = z.transpose();
  for (std::size_t k = 0; k < steps; ++k) {
    stepper.vary(z, y_path.Y->row(static_cast<Eigen::Index>(k)).transpose());
    Z.row(k + 1) = z.transpose();
  }
  out.Z = std::move(Z);
  return out;
}

PathBundle compute_eta(const PathBundle& x_path, const PathBundle& xbar_path,
                       const RegimeParams& regime) {
  if (!x_path.X || !xbar_path.X) throw std::invalid_argument("compute_eta: bundles need X paths");
  if (!x_path.same_grid(xbar_path)) throw std::invalid_argument("compute_eta: time grids differ");
  if (x_path.X->cols() != xbar_path.X->cols()) {
    throw std::invalid_argument("compute_eta: mode counts differ");
  }
  PathBundle out;
  out.times = x_path.times;
  out.dt = x_path.dt;
  out.seed = x_path.seed;
  out.noise_off = x_path.noise_off;
  out.eta = TimeSeries((*x_path.X - *xbar_path.X) / regime.eta_scale());
  return out;
}

}  // namespace mdspde
