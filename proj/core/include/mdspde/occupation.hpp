#pragma once

#include "mdspde/averaging.hpp"
#include "mdspde/dynamics.hpp"
#include "mdspde/model.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace mdspde {

/// One weighted atom (u1(s), u2(s), Y(s), t) of the occupation measure.
/// `s_index` addresses the stored rows of the source bundle.
struct OccupationCell {
  double t = 0.0;
  std::size_t t_index = 0;
  std::size_t s_index = 0;
  double weight = 0.0;
};

/// Discretized occupation measure of a controlled trajectory.
///
/// Each grid time t_i (i < T/dt) carries weight dt, spread uniformly over
/// s in [t_i, t_i + Delta). Cells in s are aggregated by `ks` grid points so
/// that at most `max_cells` atoms are stored; the time marginal stays exact.
struct OccupationMeasure {
  double Delta = 0.0;      ///< requested window
  double Delta_eff = 0.0;  ///< D * dt actually used
  double T = 0.0;          ///< horizon: bundle horizon minus Delta_eff
  double dt = 0.0;
  int window_steps = 0;    ///< D
  int ks = 1;
  std::vector<double> times;  ///< source grid
  std::shared_ptr<const TimeSeries> Y;
  std::shared_ptr<const TimeSeries> u1;  ///< null when the bundle is uncontrolled
  std::shared_ptr<const TimeSeries> u2;
  std::vector<OccupationCell> cells;

  [[nodiscard]] double total_weight() const;
  /// Weight of {t' <= t}.
  [[nodiscard]] double time_marginal(double t) const;
};

OccupationMeasure build_occupation(const PathBundle& bundle, const RegimeParams& regime,
                                   std::size_t max_cells = 1'000'000);

struct DecouplingOptions {
  int windows = 4;
  double alpha = 0.01;
  double min_ess = 100.0;
  InvariantPolicy reference{2000, 0.0, 0.0, 0.01, 4, 0.1, true, 1e-3, 0};
};

struct DecouplingCell {
  int mode = 0;
  int window = 0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  double occ_mean = 0.0;
  double occ_var = 0.0;
  double ess = 0.0;
  double ref_mean = 0.0;
  double ref_var = 0.0;
  double z_mean = 0.0;
  double z_var = 0.0;
  bool low_ess = false;
  bool pass = false;
};

struct DecouplingReport {
  std::vector<DecouplingCell> cells;
  double diagnostic = 0.0;  ///< delta h^2 / Delta
  [[nodiscard]] int passed() const;
  [[nodiscard]] double pass_fraction() const;
};

/// Two-sample z-tests (mean and variance) per mode and time window between
/// the occupation y-marginal and fresh samples of mu^{Xbar(t_mid)}.
///
/// Windows have width min(Delta, T/4) and are centred at (2w + 1) T / (2W).
DecouplingReport decoupling_test(const OccupationMeasure& occ, const ModelSpec& model,
                                 const PathBundle& xbar, const RegimeParams& regime,
                                 int modes_checked, std::uint64_t seed,
                                 const DecouplingOptions& options = {});

}  // namespace mdspde
