#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>

namespace mdspde {

enum class Boundary { Dirichlet, Neumann };
enum class Component { Slow = 1, Fast = 2 };
enum class BasisKind { Sine, Cosine };

std::string_view to_string(Boundary b);
std::string_view to_string(Component c);
Boundary parse_boundary(std::string_view s);

/// Interval (0, length) with the boundary conditions of both components.
///
/// The elliptic operators are -c_i d^2/dxi^2. `fast_mass` shifts the fast
/// operator by a positive constant so that a Neumann fast component keeps a
/// strictly positive spectrum.
struct DomainSpec {
  double length = 0.0;
  Boundary bc_slow = Boundary::Dirichlet;
  Boundary bc_fast = Boundary::Dirichlet;
  double diffusivity_slow = 1.0;
  double diffusivity_fast = 1.0;
  double fast_mass = 0.0;
};

/// Value identity of a basis; two fields are compatible iff their tags match.
struct BasisTag {
  Component component = Component::Slow;
  BasisKind kind = BasisKind::Sine;
  int size = 0;
  double length = 0.0;
  double diffusivity = 1.0;
  double mass = 0.0;

  bool operator==(const BasisTag&) const = default;
};

/// Closed-form eigenpairs of one elliptic operator, truncated to `size()` modes.
///
/// Mode index 0 is the first basis function e_1. Sine modes are
/// sqrt(2/L) sin(k pi xi / L), k >= 1; cosine modes are 1/sqrt(L) followed by
/// sqrt(2/L) cos(k pi xi / L).
class SpectralBasis {
 public:
  SpectralBasis() = default;
  SpectralBasis(BasisTag tag, Eigen::VectorXd eigenvalues);

  [[nodiscard]] const BasisTag& tag() const { return tag_; }
  [[nodiscard]] Component component() const { return tag_.component; }
  [[nodiscard]] BasisKind kind() const { return tag_.kind; }
  [[nodiscard]] int size() const { return tag_.size; }
  [[nodiscard]] double length() const { return tag_.length; }
  [[nodiscard]] const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  [[nodiscard]] double eigenvalue(int k) const { return eigenvalues_[k]; }
  /// Smallest eigenvalue; for the fast operator this is the dissipativity constant.
  [[nodiscard]] double lambda() const { return eigenvalues_[0]; }
  /// Uniform bound on |e_k(xi)| over all modes.
  [[nodiscard]] double sup_norm_bound() const { return sup_norm_bound_; }

  /// Pointwise value of basis function `k` at `xi`.
  [[nodiscard]] double eval(int k, double xi) const;

 private:
  BasisTag tag_{};
  Eigen::VectorXd eigenvalues_;
  double sup_norm_bound_ = 0.0;
};

/// Coefficient vector of an L^2(0, L) function in a given eigenbasis.
struct Field {
  Eigen::VectorXd coeffs;
  BasisTag basis;

  [[nodiscard]] static Field zero(const SpectralBasis& b);
  /// Basis vector e_{k+1} (mode index k, zero based).
  [[nodiscard]] static Field unit(const SpectralBasis& b, int k);
  [[nodiscard]] static Field from(const SpectralBasis& b, Eigen::VectorXd coeffs);

  [[nodiscard]] int size() const { return static_cast<int>(coeffs.size()); }
  /// L^2 norm; equals the Euclidean norm of the coefficients.
  [[nodiscard]] double norm() const { return coeffs.norm(); }
};

/// Throws std::invalid_argument when `f` does not live on `b`.
void require_basis(const Field& f, const SpectralBasis& b, std::string_view what);

SpectralBasis build_basis(const DomainSpec& domain, Component component, int n);

/// S(t)x: coefficient k scaled by exp(-a_k t).
Field apply_semigroup(const SpectralBasis& basis, double t, const Field& x);

/// (sum_k a_k^theta x_k^2)^{1/2}; theta = 0 is the L^2 norm.
double sobolev_norm(const SpectralBasis& basis, double theta, const Field& x);

/// Orthogonal projection onto the first m modes.
Field project_modes(const Field& x, int m);

/// Per-mode factors of the exponential integrator for step h and rate a:
/// decay = exp(-a h), drift = (1 - exp(-a h)) / (a h), noise = sqrt((1 - exp(-2 a h)) / (2 a h)).
struct ExponentialFactors {
  Eigen::ArrayXd decay;
  Eigen::ArrayXd drift;
  Eigen::ArrayXd noise;

  ExponentialFactors() = default;
  ExponentialFactors(const Eigen::VectorXd& rates, double h);
};

/// Uniform midpoint collocation grid shared by both bases.
///
/// Synthesis maps coefficients to grid values, analysis applies the midpoint
/// quadrature inner product against each basis function. Products of two
/// retained modes are integrated exactly when the grid has at least 2n + 1
/// points.
class Collocation {
 public:
  Collocation() = default;
  Collocation(const SpectralBasis& slow, const SpectralBasis& fast, int points);

  [[nodiscard]] int points() const { return static_cast<int>(xi_.size()); }
  [[nodiscard]] const Eigen::VectorXd& nodes() const { return xi_; }
  [[nodiscard]] double weight() const { return weight_; }
  [[nodiscard]] const Eigen::MatrixXd& synthesis(Component c) const {
    return c == Component::Slow ? synth_slow_ : synth_fast_;
  }

  [[nodiscard]] Eigen::VectorXd to_grid(Component c, const Eigen::VectorXd& coeffs) const {
    return synthesis(c) * coeffs;
  }
  [[nodiscard]] Eigen::VectorXd analyze(Component c, const Eigen::VectorXd& values) const {
    return weight_ * (synthesis(c).transpose() * values);
  }
  /// Galerkin matrix of the multiplication operator by grid values `d`,
  /// mapping coefficients on `in` to coefficients on `out`.
  [[nodiscard]] Eigen::MatrixXd multiplication(Component out, Component in,
                                               const Eigen::VectorXd& d) const;

 private:
  Eigen::VectorXd xi_;
  double weight_ = 0.0;
  Eigen::MatrixXd synth_slow_;
  Eigen::MatrixXd synth_fast_;
};

}  // namespace mdspde
