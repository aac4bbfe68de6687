#pragma once

#include "mdspde/model.hpp"
#include "mdspde/rng.hpp"
#include "mdspde/spectral.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

namespace mdspde {

using TimeSeries = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Regime { R1, R2 };
std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);

/// Explicit values that replace the default scale relations.
struct RegimeOverrides {
  std::optional<double> delta;
  std::optional<double> h;
  std::optional<double> Delta;
  std::optional<double> c;
};

/// Scale parameters of one asymptotic regime at a fixed epsilon.
///
/// Defaults: R1 delta = eps^{3/2}; R2 delta = gamma^2 eps; h = eps^{-1/4};
/// occupation window Delta = eps^{1/4}; Kolmogorov discount c = sqrt(eps).
struct RegimeParams {
  double epsilon = 0.0;
  Regime regime = Regime::R1;
  double gamma = 0.0;  ///< forced to 0 in R1
  double delta = 0.0;
  double h = 0.0;
  double Delta_occ = 0.0;
  double c_eps = 0.0;

  static RegimeParams make(double epsilon, Regime regime, double gamma = 0.0,
                           const RegimeOverrides& overrides = {});

  /// Normalization sqrt(eps) h of the moderate-deviation process.
  [[nodiscard]] double eta_scale() const;
};

/// Pair of control directions: u1 on the slow basis, u2 on the fast basis.
struct ControlValue {
  Eigen::VectorXd u1;
  Eigen::VectorXd u2;
};

/// Control process fed to the controlled system.
///
/// Feedback laws are evaluated at (t, Y(t)). The energy cap N clips the
/// running left-point sum of |u|^2 dt; once reached, the remaining control
/// is zeroed and the bundle records the breach.
struct ControlSpec {
  enum class Kind { Zero, OpenLoop, Feedback };
  using Law = std::function<ControlValue(double t, const Eigen::VectorXd& y)>;

  Kind kind = Kind::Zero;
  Law law;
  double energy_cap = std::numeric_limits<double>::infinity();
  bool y_independent = false;  ///< law ignores its y argument

  static ControlSpec zero() { return {}; }
  static ControlSpec open_loop(std::function<ControlValue(double)> path,
                               double cap = std::numeric_limits<double>::infinity());
  /// Feedback law. Mark `y_independent` when the law ignores y so that
  /// averages over the invariant law can use a single evaluation.
  static ControlSpec feedback(Law law, double cap = std::numeric_limits<double>::infinity());

  [[nodiscard]] ControlValue evaluate(double t, const Eigen::VectorXd& y, int n_slow, int n_fast) const;
};

/// Trajectories on one shared uniform time grid. Rows are time points,
/// columns are mode coefficients.
struct PathBundle {
  std::vector<double> times;
  double dt = 0.0;
  std::optional<TimeSeries> X;
  std::optional<TimeSeries> Y;
  std::optional<TimeSeries> eta;
  std::optional<TimeSeries> Z;
  std::optional<TimeSeries> u1;
  std::optional<TimeSeries> u2;
  std::uint64_t seed = 0;
  bool noise_off = false;
  double control_energy = 0.0;
  bool energy_cap_hit = false;

  [[nodiscard]] std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
  [[nodiscard]] double horizon() const { return times.empty() ? 0.0 : times.back(); }
  /// True when both bundles use the same time grid.
  [[nodiscard]] bool same_grid(const PathBundle& other) const;
};

std::vector<double> uniform_grid(double T, double dt);

/// One exponential-Euler step of the (controlled) slow-fast system.
///
/// Linear parts use the exact factors exp(-a dt) and exp(-a dt / delta).
/// Noise enters through the exact per-mode Ornstein-Uhlenbeck variance, and
/// the control is a shift of the Brownian increment by h u dt, so the scheme
/// stays exactly Girsanov-compatible on the truncated system.
class SlowFastStepper {
 public:
  SlowFastStepper(const ModelSpec& model, const RegimeParams& regime, double dt);

  /// Advances (x, y) by dt. `xi1`, `xi2` are the shifted increments
  /// dW + h u dt of the slow and fast noise.
  void step(Eigen::VectorXd& x, Eigen::VectorXd& y, const Eigen::VectorXd& xi1,
            const Eigen::VectorXd& xi2) const;

  [[nodiscard]] double dt() const { return dt_; }

 private:
  const ModelSpec* model_;
  double dt_;
  double sqrt_eps_;
  double inv_delta_;
  double inv_sqrt_delta_;
  ExponentialFactors slow_;
  ExponentialFactors fast_;
};

/// Fast process with the slow component frozen at x, in its natural time.
class FrozenFastStepper {
 public:
  FrozenFastStepper(const ModelSpec& model, const Eigen::VectorXd& x, double dt);

  void step(Eigen::VectorXd& y, const Eigen::VectorXd& dw) const;
  /// First-variation update Z <- e Z + phi dt D_yG(x, y) Z (columns are directions).
  void vary(Eigen::MatrixXd& z, const Eigen::VectorXd& y) const;

  [[nodiscard]] const Eigen::VectorXd& x_grid() const { return x_grid_; }
  [[nodiscard]] double dt() const { return dt_; }

 private:
  const ModelSpec* model_;
  double dt_;
  Eigen::VectorXd x_grid_;
  ExponentialFactors factors_;
  bool linear_g_;
  Eigen::MatrixXd dyg_const_;
};

/// Guard shared by the integrators: dt <= delta / 10.
void check_step(double dt, double delta, std::string_view who);

struct SimulationOptions {
  bool noise_off = false;
  std::uint64_t path = 0;  ///< path index inside the seed's stream family
};

PathBundle simulate_slow_fast(const ModelSpec& model, const RegimeParams& regime,
                              const ControlSpec& control, const Field& x0, const Field& y0,
                              double T, double dt, std::uint64_t seed,
                              const SimulationOptions& options = {});

PathBundle simulate_frozen_fast(const ModelSpec& model, const Field& x, const Field& y0, double T,
                                double dt, std::uint64_t seed, const SimulationOptions& options = {});

/// Z^v(t) = D_y Y^{x,y}(t) v driven by the realized fast path in `y_path`.
PathBundle simulate_first_variation(const ModelSpec& model, const Field& x,
                                    const PathBundle& y_path, const Field& v, double dt);

/// eta(t) = (X(t) - Xbar(t)) / (sqrt(eps) h).
PathBundle compute_eta(const PathBundle& x_path, const PathBundle& xbar_path,
                       const RegimeParams& regime);

}  // namespace mdspde
