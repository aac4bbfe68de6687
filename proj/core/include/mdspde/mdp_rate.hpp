#pragma once

#include "mdspde/averaging.hpp"
#include "mdspde/dynamics.hpp"
#include "mdspde/kolmogorov.hpp"
#include "mdspde/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

namespace mdspde {

/// How Q is evaluated along an averaged trajectory.
struct QPolicy {
  int m = 0;             ///< block size; 0 uses every retained mode
  double refresh = 0.1;  ///< Q(Xbar(t)) recomputed every `refresh` time units
  InvariantPolicy invariant;
  Psi2Options psi2;      ///< its `m` is overwritten by the block size
};

/// Diffusion operator of the limit equation on the leading m-mode block.
struct QMatrix {
  Regime regime = Regime::R1;
  Field x;
  Eigen::MatrixXd entries;
  Eigen::MatrixXd se;
  double min_eigenvalue = 0.0;
  double min_eigenvalue_se = 0.0;
  Eigen::MatrixXd inverse;
  Eigen::MatrixXd inv_sqrt;
  /// Per-sample pieces: Sigma(x, y_i) on the slow basis and the Psi2 block.
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<Eigen::MatrixXd> psi;
  bool y_independent = false;

  [[nodiscard]] int size() const { return static_cast<int>(entries.rows()); }
};

/// True when Sigma and Psi2 do not depend on y, so Q needs a single evaluation.
bool q_is_y_independent(const ModelSpec& model, const RegimeParams& regime);

/// Q = mean over samples of Gram(sigma^2) + gamma^2 Psi Psi^T on the m-mode block.
///
/// Gram(sigma^2) is the Galerkin matrix of multiplication by sigma(x, y)^2,
/// which equals Sigma Sigma^* restricted to the block. `inv` may be null when
/// `q_is_y_independent` holds.
QMatrix q_matrix(const ModelSpec& model, const RegimeParams& regime, const Field& x,
                 const InvariantSample* inv, int m, const Psi2Options& psi2, std::uint64_t seed);

/// Path psi(t) on a uniform grid; psi(0) = 0.
struct SmoothPath {
  std::vector<double> times;
  TimeSeries values;  ///< rows are times, columns slow coefficients
  BasisTag basis;

  [[nodiscard]] double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  [[nodiscard]] double horizon() const { return times.empty() ? 0.0 : times.back(); }
  /// psi(t) = slope * t * e_{mode+1}.
  static SmoothPath linear(const SpectralBasis& slow, double T, double dt, int mode, double slope);
  static SmoothPath from(const SpectralBasis& slow, std::vector<double> times, TimeSeries values);
  void validate() const;
};

/// Q and the averaged Jacobian frozen at the refresh times of an averaged path.
class OperatorSchedule {
 public:
  struct Entry {
    double t = 0.0;
    Field x;
    std::shared_ptr<const InvariantSample> samples;  ///< null when Q is y-independent
    QMatrix q;
  };

  OperatorSchedule(const ModelSpec& model, const RegimeParams& regime, const PathBundle& xbar,
                   const QPolicy& policy, std::uint64_t seed);

  [[nodiscard]] const Entry& at(double t) const;
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
  [[nodiscard]] const PathBundle& xbar() const { return xbar_; }
  [[nodiscard]] const RegimeParams& regime() const { return regime_; }
  [[nodiscard]] const QPolicy& policy() const { return policy_; }
  [[nodiscard]] int block() const { return m_; }
  [[nodiscard]] bool y_independent() const { return y_independent_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  /// Xbar(t), linearly interpolated.
  [[nodiscard]] Eigen::VectorXd xbar_at(double t) const;
  /// Averaged D_xF at Xbar(t).
  [[nodiscard]] Eigen::MatrixXd dxf_at(double t) const;

 private:
  const ModelSpec* model_;
  RegimeParams regime_;
  PathBundle xbar_;
  QPolicy policy_;
  std::uint64_t seed_;
  int m_ = 0;
  bool y_independent_ = false;
  std::vector<Entry> entries_;
};

struct RatePoint {
  double t = 0.0;
  double residual_norm = 0.0;  ///< |Q^{-1/2} r(t)|
  double kappa = 0.0;          ///< |r(t)|
};

struct RateReport {
  Regime regime = Regime::R1;
  double S = 0.0;
  std::vector<RatePoint> per_t;
};

/// r(t) = d_t psi - A psi - Dbar_x F(Xbar(t)) psi on the psi grid (rows = times).
TimeSeries rate_residual(const ModelSpec& model, const SmoothPath& psi, const OperatorSchedule& ops);

RateReport rate_functional(const ModelSpec& model, const SmoothPath& psi, const OperatorSchedule& ops);

/// Feedback controls v1 = Sigma^* Q^{-1} r, v2 = gamma Psi^* Q^{-1} r.
ControlSpec optimal_controls(const ModelSpec& model, const SmoothPath& psi,
                             const OperatorSchedule& ops);

/// 1/2 int int (|v1|^2 + |v2|^2) dmu^{Xbar(t)} dt, trapezoid on the xbar grid.
double control_cost(const ModelSpec& model, const ControlSpec& controls, const OperatorSchedule& ops);

struct LimitSolution {
  SmoothPath psi;
  double mild_residual = 0.0;  ///< sup_t |psi(t) - int_0^t S(t-s) Xi(s) ds|
};

/// Exponential-Euler solution of the controlled limit equation with the
/// control term averaged over mu^{Xbar(t)}.
LimitSolution solve_limit_equation(const ModelSpec& model, const ControlSpec& controls,
                                   const OperatorSchedule& ops, double T, double dt);

}  // namespace mdspde
