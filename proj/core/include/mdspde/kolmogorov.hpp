#pragma once

#include "mdspde/averaging.hpp"
#include "mdspde/dynamics.hpp"
#include "mdspde/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>

namespace mdspde {

/// Settings of the Feynman-Kac quadrature along the frozen fast process.
///
/// t_max <= 0 selects 10/ell. `discount` is the rate c of the e^{-c t}
/// weight; 0 gives the limiting operator.
struct Psi2Options {
  int m = 8;
  int mc_paths = 200;
  double t_max = 0.0;
  double dt = 1e-3;
  double discount = 0.0;
  unsigned workers = 0;
};

/// Galerkin block of the y-derivative of the Kolmogorov solution.
/// entries(k, j) = <Psi e_j, e_k>, rows on the slow basis, columns on the fast one.
struct Psi2Matrix {
  Field frozen_x;
  Field anchor_y;
  Eigen::MatrixXd entries;
  Eigen::MatrixXd se;
  int mc_paths = 0;
  double t_max = 0.0;
  double dt = 0.0;
  double discount = 0.0;
  double tail_bound = 0.0;  ///< |d_y f|_inf e^{-ell t_max} / ell
  bool deterministic = false;

  /// Largest singular value of `entries`.
  [[nodiscard]] double operator_norm() const;
};

/// Resolved horizon; throws if t_max * ell < 5.
double resolve_t_max(const ModelSpec& model, double t_max);

Psi2Matrix psi2_zero_matrix(const ModelSpec& model, const Field& x, const Field& y,
                            const Psi2Options& options, std::uint64_t seed);

struct PhiValue {
  double value = 0.0;
  double se = 0.0;
  bool deterministic = false;
};

/// Discounted Feynman-Kac value of <F(x, Y) - Fbar(x), chi> with c = regime.c_eps.
///
/// `inv` supplies Fbar(x) when the integrand is not available in closed form.
PhiValue phi_eps_value(const ModelSpec& model, const RegimeParams& regime, const Field& x,
                       const Field& y, const Field& chi, int mc_paths, double t_max, double dt,
                       std::uint64_t seed, const InvariantSample* inv = nullptr);

/// Difference quotients (in x, in y) of the Psi2 matrix in spectral norm,
/// evaluated with shared seeds. The x quotient holds y = y1; the y quotient holds x = x1.
std::pair<double, double> psi2_continuity_modulus(const ModelSpec& model, const Field& x1,
                                                  const Field& x2, const Field& y1,
                                                  const Field& y2, const Psi2Options& options,
                                                  std::uint64_t seed);

}  // namespace mdspde
