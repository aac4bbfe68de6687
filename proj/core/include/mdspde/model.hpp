#pragma once

#include "mdspde/spectral.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

namespace mdspde {

/// Closed catalog of scalar reaction functions r(x, y), homogeneous in xi.
///
///   zero             r = 0
///   linear_y(b)      r = b y                    (unbounded; admitted for oracle tests)
///   tanh_sum(a, b)   r = a tanh(x) + b tanh(y)
///   tanh_y_damped(k) r = -k tanh(y)
///
/// New families extend the enum together with `value`/derivative switches
/// and the analytic bounds in `bounds()`.
struct ReactionSpec {
  enum class Family { Zero, LinearY, TanhSum, TanhYDamped };

  struct Bounds {
    double dx = 0.0;   ///< sup |d_x r|
    double dy = 0.0;   ///< sup |d_y r|
    double d2 = 0.0;   ///< sup over all second partials
    double d3 = 0.0;   ///< sup over all third partials
    bool bounded = true;  ///< r itself bounded (C_b^2 in the strict sense)
  };

  Family family = Family::Zero;
  double p1 = 0.0;
  double p2 = 0.0;

  static ReactionSpec zero() { return {}; }
  static ReactionSpec linear_y(double b) { return {Family::LinearY, b, 0.0}; }
  static ReactionSpec tanh_sum(double alpha, double beta) { return {Family::TanhSum, alpha, beta}; }
  static ReactionSpec tanh_y_damped(double kappa) { return {Family::TanhYDamped, kappa, 0.0}; }
  /// Parses "zero", "linear_y(0.3)", "tanh_sum(1,0.3)", "tanh_y_damped(0.2)".
  static ReactionSpec parse(const std::string& text);
  [[nodiscard]] std::string to_string() const;

  [[nodiscard]] double value(double x, double y) const;
  [[nodiscard]] double dx(double x, double y) const;
  [[nodiscard]] double dy(double x, double y) const;
  [[nodiscard]] double dxx(double x, double y) const;
  [[nodiscard]] Bounds bounds() const;

  /// r does not depend on y at all.
  [[nodiscard]] bool independent_of_y() const;
  /// d_x r does not depend on y.
  [[nodiscard]] bool dx_independent_of_y() const;
  /// d_y r is a constant (r affine in y with y-free slope).
  [[nodiscard]] bool dy_constant() const;
};

/// Diffusion coefficient sigma(x, y) with 0 < c1 <= sigma <= c2.
///
///   constant(c)             sigma = c
///   bounded_sigmoid(c1, c2) sigma = c1 + (c2 - c1) / (1 + exp(-(x + y)))
struct DiffusionSpec {
  enum class Family { Constant, BoundedSigmoid };

  Family family = Family::Constant;
  double c1 = 1.0;
  double c2 = 1.0;

  static DiffusionSpec constant(double c) { return {Family::Constant, c, c}; }
  static DiffusionSpec bounded_sigmoid(double lo, double hi) {
    return {Family::BoundedSigmoid, lo, hi};
  }
  static DiffusionSpec parse(const std::string& text);
  [[nodiscard]] std::string to_string() const;

  [[nodiscard]] double value(double x, double y) const;
  [[nodiscard]] double lower() const { return c1; }
  [[nodiscard]] double upper() const { return c2; }
  [[nodiscard]] double lipschitz() const;
  [[nodiscard]] bool is_constant() const { return family == Family::Constant; }
};

/// Full slow-fast model: domain, both eigenbases, reactions and diffusion.
class ModelSpec {
 public:
  ModelSpec(const DomainSpec& domain, int modes, ReactionSpec f, ReactionSpec g,
            DiffusionSpec sigma, int quad_points = 0);

  [[nodiscard]] const DomainSpec& domain() const { return domain_; }
  [[nodiscard]] const SpectralBasis& slow() const { return slow_; }
  [[nodiscard]] const SpectralBasis& fast() const { return fast_; }
  [[nodiscard]] const SpectralBasis& basis(Component c) const {
    return c == Component::Slow ? slow_ : fast_;
  }
  [[nodiscard]] const ReactionSpec& f() const { return f_; }
  [[nodiscard]] const ReactionSpec& g() const { return g_; }
  [[nodiscard]] const DiffusionSpec& sigma() const { return sigma_; }
  [[nodiscard]] const Collocation& grid() const { return *grid_; }
  [[nodiscard]] int modes() const { return slow_.size(); }
  [[nodiscard]] int quad_points() const { return grid_->points(); }

  /// (lambda - L_g) / 2.
  [[nodiscard]] double ell() const;

  // Coefficient-level kernels used by the integrators. All vectors are
  // coefficient vectors on the basis implied by the name.
  [[nodiscard]] Eigen::VectorXd reaction_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  [[nodiscard]] Eigen::VectorXd reaction_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  /// F(x, y) with the slow argument given directly as grid values.
  [[nodiscard]] Eigen::VectorXd reaction_f_grid(const Eigen::VectorXd& x_grid,
                                                const Eigen::VectorXd& y) const;
  /// G(x, y) with the slow argument given directly as grid values.
  [[nodiscard]] Eigen::VectorXd reaction_g_grid(const Eigen::VectorXd& x_grid,
                                                const Eigen::VectorXd& y) const;
  [[nodiscard]] Eigen::VectorXd sigma_apply(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& u) const;
  /// Galerkin matrices of the Gateaux derivatives / multiplication operators.
  [[nodiscard]] Eigen::MatrixXd sigma_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  [[nodiscard]] Eigen::MatrixXd dxf_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  [[nodiscard]] Eigen::MatrixXd dyf_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;
  [[nodiscard]] Eigen::MatrixXd dyg_matrix_grid(const Eigen::VectorXd& x_grid,
                                                const Eigen::VectorXd& y) const;

 private:
  DomainSpec domain_;
  SpectralBasis slow_;
  SpectralBasis fast_;
  ReactionSpec f_;
  ReactionSpec g_;
  DiffusionSpec sigma_;
  std::shared_ptr<const Collocation> grid_;
};

/// Derived constants and pass/fail flags of the structural assumptions.
struct HypothesisReport {
  double lambda = 0.0;    ///< smallest fast eigenvalue
  double L_g = 0.0;       ///< sup |d_y g|
  double ell = 0.0;       ///< (lambda - L_g) / 2
  double omega = 0.0;     ///< (lambda - 3 L_g) / 2
  double sigma_lower = 0.0;
  double sigma_upper = 0.0;
  double L_sigma = 0.0;
  ReactionSpec::Bounds f_bounds;
  ReactionSpec::Bounds g_bounds;

  bool dissipative = false;         ///< L_g < lambda
  bool strongly_dissipative = false;  ///< omega > 0
  bool sigma_bounded = false;       ///< 0 < c1 <= c2
  bool f_bounded = false;           ///< informational; linear families are unbounded
  bool g_bounded = false;

  [[nodiscard]] bool pass() const { return dissipative && strongly_dissipative && sigma_bounded; }
};

HypothesisReport validate_hypotheses(const ModelSpec& model);

/// Raised when an operation needs a structural assumption the model violates.
struct HypothesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Reaction { F, G };
enum class Derivative { DxF, DyF, DxG, DyG, DxxF };

/// Pseudo-spectral Nemytskii evaluation; F lands on the slow basis, G on the fast one.
Field eval_reaction(const ModelSpec& model, Reaction which, const Field& x, const Field& y);

/// Gateaux derivative applied to `chi` (and `chi2` for the second derivative DxxF).
Field eval_derivative(const ModelSpec& model, Derivative which, const Field& x, const Field& y,
                      const Field& chi, const std::optional<Field>& chi2 = std::nullopt);

/// Sigma(x, y) u as a multiplication operator on the slow basis.
Field apply_sigma(const ModelSpec& model, const Field& x, const Field& y, const Field& u);

}  // namespace mdspde
