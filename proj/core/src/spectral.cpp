#include "mdspde/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mdspde {

std::string_view to_string(Boundary b) {
  return b == Boundary::Dirichlet ? "dirichlet" : "neumann";
}

std::string_view to_string(Component c) { return c == Component::Slow ? "slow" : "fast"; }

Boundary parse_boundary(std::string_view s) {
  if (s == "dirichlet" || s == "Dirichlet") return Boundary::Dirichlet;
  if (s == "neumann" || s == "Neumann") return Boundary::Neumann;
  throw std::invalid_argument("unknown boundary condition '" + std::string(s) + "'");
}

SpectralBasis::SpectralBasis(BasisTag tag, Eigen::VectorXd eigenvalues)
    : tag_(tag), eigenvalues_(std::move(eigenvalues)) {
  sup_norm_bound_ = std::sqrt(2.0 / tag_.length);
}

double SpectralBasis::eval(int k, double xi) const {
  const double L = tag_.length;
  if (tag_.kind == BasisKind::Sine) {
    return std::sqrt(2.0 / L) * std::sin((k + 1) * std::numbers::pi * xi / L);
  }
  if (k == 0) return 1.0 / std::sqrt(L);
  return std::sqrt(2.0 / L) * std::cos(k * std::numbers::pi * xi / L);
}

Field Field::zero(const SpectralBasis& b) {
  return Field{Eigen::VectorXd::Zero(b.size()), b.tag()};
}

Field Field::unit(const SpectralBasis& b, int k) {
  if (k < 0 || k >= b.size()) throw std::out_of_range("mode index out of range");
  Field f = zero(b);
  f.coeffs[k] = 1.0;
  return f;
}

Field Field::from(const SpectralBasis& b, Eigen::VectorXd coeffs) {
  if (coeffs.size() != b.size()) {
    throw std::invalid_argument("coefficient count does not match basis size");
  }
  return Field{std::move(coeffs), b.tag()};
}

void require_basis(const Field& f, const SpectralBasis& b, std::string_view what) {
  if (!(f.basis == b.tag()) || f.coeffs.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": field is not on the " +
                                std::string(to_string(b.component())) + " basis");
  }
}

SpectralBasis build_basis(const DomainSpec& domain, Component component, int n) {
  if (n <= 0) throw std::invalid_argument("build_basis: mode count must be positive");
  if (!(domain.length > 0.0)) throw std::invalid_argument("build_basis: length must be positive");

  const bool slow = component == Component::Slow;
  const Boundary bc = slow ? domain.bc_slow : domain.bc_fast;
  const double c = slow ? domain.diffusivity_slow : domain.diffusivity_fast;
  const double mass = slow ? 0.0 : domain.fast_mass;
  if (!(c > 0.0)) throw std::invalid_argument("build_basis: diffusivity must be positive");

  BasisTag tag{component, bc == Boundary::Dirichlet ? BasisKind::Sine : BasisKind::Cosine, n,
               domain.length, c, mass};
  Eigen::VectorXd eig(n);
  const double w = std::numbers::pi / domain.length;
  for (int k = 0; k < n; ++k) {
    const double wave = (bc == Boundary::Dirichlet ? (k + 1) : k) * w;
    eig[k] = c * wave * wave + mass;
  }
  if (!slow && !(eig[0] > 0.0)) {
    throw std::invalid_argument(
        "build_basis: fast operator must be strictly dissipative (smallest eigenvalue > 0); "
        "add a positive fast_mass for Neumann boundaries");
  }
  return SpectralBasis(tag, std::move(eig));
}

Field apply_semigroup(const SpectralBasis& basis, double t, const Field& x) {
  if (t < 0.0) throw std::invalid_argument("apply_semigroup: t must be non-negative");
  require_basis(x, basis, "apply_semigroup");
  Field out = x;
  out.coeffs.array() *= (-basis.eigenvalues().array() * t).exp();
  return out;
}

double sobolev_norm(const SpectralBasis& basis, double theta, const Field& x) {
  if (theta < 0.0) throw std::invalid_argument("sobolev_norm: theta must be non-negative");
  require_basis(x, basis, "sobolev_norm");
  if (theta == 0.0) return x.norm();
  const Eigen::ArrayXd w = basis.eigenvalues().array().pow(theta);
  return std::sqrt((w * x.coeffs.array().square()).sum());
}

Field project_modes(const Field& x, int m) {
  if (m < 1 || m > x.size()) throw std::out_of_range("project_modes: m out of range");
  Field out = x;
  out.coeffs.tail(x.size() - m).setZero();
  return out;
}

ExponentialFactors::ExponentialFactors(const Eigen::VectorXd& rates, double h) {
  const auto n = rates.size();
  decay.resize(n);
  drift.resize(n);
  noise.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double z = rates[k] * h;
    decay[k] = std::exp(-z);
    if (z < 1e-12) {
      drift[k] = 1.0;
      noise[k] = 1.0;
    } else {
      drift[k] = -std::expm1(-z) / z;
      noise[k] = std::sqrt(-std::expm1(-2.0 * z) / (2.0 * z));
    }
  }
}

Collocation::Collocation(const SpectralBasis& slow, const SpectralBasis& fast, int points) {
  const int nmax = std::max(slow.size(), fast.size());
  if (points < 2 * nmax + 1) {
    throw std::invalid_argument("collocation grid needs at least 2n+1 points");
  }
  if (slow.length() != fast.length()) {
    throw std::invalid_argument("slow and fast bases must share the domain length");
  }
  const double L = slow.length();
  xi_.resize(points);
  for (int j = 0; j < points; ++j) xi_[j] = (j + 0.5) * L / points;
  weight_ = L / points;
  auto fill = [&](const SpectralBasis& b) {
    Eigen::MatrixXd m(points, b.size());
    for (int j = 0; j < points; ++j)
      for (int k = 0; k < b.size(); ++k) m(j, k) = b.eval(k, xi_[j]);
    return m;
  };
  synth_slow_ = fill(slow);
  synth_fast_ = fill(fast);
}

Eigen::MatrixXd Collocation::multiplication(Component out, Component in,
                                            const Eigen::VectorXd& d) const {
  return weight_ * (synthesis(out).transpose() * (d.asDiagonal() * synthesis(in)));
}

}  // namespace mdspde
