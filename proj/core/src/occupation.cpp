#include "mdspde/occupation.hpp"

#include "mdspde/parallel.hpp"
#include "mdspde/rng.hpp"
#include "mdspde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mdspde {

double OccupationMeasure::total_weight() const {
  double s = 0.0;
  for (const auto& c : cells) s += c.weight;
  return s;
}

double OccupationMeasure::time_marginal(double t) const {
  double s = 0.0;
  for (const auto& c : cells) {
    if (c.t <= t + 1e-12) s += c.weight;
  }
  return s;
}

OccupationMeasure build_occupation(const PathBundle& bundle, const RegimeParams& regime,
                                   std::size_t max_cells) {
  if (!bundle.Y) throw std::invalid_argument("build_occupation: bundle has no Y path");
  const double dt = bundle.dt;
  const double Delta = regime.Delta_occ;
  if (Delta < 2.0 * dt) throw std::invalid_argument("build_occupation: Delta < 2 dt");
  const auto N = static_cast<long long>(bundle.steps());
  const auto D = static_cast<long long>(std::llround(Delta / dt));
  if (D >= N) throw std::invalid_argument("build_occupation: Delta exceeds the bundle horizon");
  if (max_cells == 0) throw std::invalid_argument("build_occupation: max_cells must be positive");

  OccupationMeasure occ;
  occ.Delta = Delta;
  occ.window_steps = static_cast<int>(D);
  occ.Delta_eff = static_cast<double>(D) * dt;
  occ.dt = dt;
  const long long n_occ = N - D;
  occ.T = static_cast<double>(n_occ) * dt;
  occ.times = bundle.times;
  occ.Y = std::make_shared<const TimeSeries>(*bundle.Y);
  if (bundle.u1) occ.u1 = std::make_shared<const TimeSeries>(*bundle.u1);
  if (bundle.u2) occ.u2 = std::make_shared<const TimeSeries>(*bundle.u2);

  const auto total = static_cast<std::size_t>(n_occ) * static_cast<std::size_t>(D);
  occ.ks = static_cast<int>(std::min<long long>(D, static_cast<long long>((total + max_cells - 1) / max_cells)));
  const long long ks = occ.ks;
  const double unit = dt * dt / occ.Delta_eff;
  occ.cells.reserve(static_cast<std::size_t>(n_occ * ((D + ks - 1) / ks)));
  for (long long i = 0; i < n_occ; ++i) {
    for (long long j = 0; j < D; j += ks) {
      const long long len = std::min(ks, D - j);
      occ.cells.push_back({bundle.times[static_cast<std::size_t>(i)], static_cast<std::size_t>(i),
                           static_cast<std::size_t>(i + j), static_cast<double>(len) * unit});
    }
  }
  return occ;
}

int DecouplingReport::passed() const {
  return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.pass; }));
}

double DecouplingReport::pass_fraction() const {
  return cells.empty() ? 0.0 : static_cast<double>(passed()) / static_cast<double>(cells.size());
}

DecouplingReport decoupling_test(const OccupationMeasure& occ, const ModelSpec& model,
                                 const PathBundle& xbar, const RegimeParams& regime,
                                 int modes_checked, std::uint64_t seed,
                                 const DecouplingOptions& options) {
  if (!xbar.X) throw std::invalid_argument("decoupling_test: xbar bundle has no X path");
  if (modes_checked < 1 || modes_checked > model.modes()) {
    throw std::invalid_argument("decoupling_test: modes_checked out of range");
  }
  if (options.windows < 1) throw std::invalid_argument("decoupling_test: windows must be >= 1");

  DecouplingReport report;
  report.diagnostic = regime.delta * regime.h * regime.h / occ.Delta;
  const int W = options.windows;
  const double width = std::min(occ.Delta_eff, occ.T / W);

  std::vector<std::vector<DecouplingCell>> per_window(static_cast<std::size_t>(W));
  parallel_for(static_cast<std::size_t>(W), 0, [&](std::size_t w) {
    const double centre = (2.0 * static_cast<double>(w) + 1.0) * occ.T / (2.0 * W);
    const double lo = centre - 0.5 * width;
    const double hi = centre + 0.5 * width;

    // y-marginal of the window: aggregate atom weights per stored s index.
    std::map<std::size_t, double> mass;
    for (const auto& c : occ.cells) {
      if (c.t >= lo - 1e-12 && c.t < hi - 1e-12) mass[c.s_index] += c.weight;
    }

    const auto row = static_cast<Eigen::Index>(std::clamp<long long>(
        std::llround(centre / xbar.dt), 0, static_cast<long long>(xbar.steps())));
    const Field xmid = Field::from(model.slow(), xbar.X->row(row).transpose());
    const InvariantSample ref = sample_invariant(model, xmid, options.reference, derive_seed(seed, w));

    std::vector<double> vals;
    std::vector<double> wts;
    vals.reserve(mass.size());
    wts.reserve(mass.size());
    for (int k = 0; k < modes_checked; ++k) {
      DecouplingCell cell;
      cell.mode = k;
      cell.window = static_cast<int>(w);
      cell.t_lo = lo;
      cell.t_hi = hi;
      vals.clear();
      wts.clear();
      for (const auto& [s, m] : mass) {
        vals.push_back((*occ.Y)(static_cast<Eigen::Index>(s), k));
        wts.push_back(m);
      }
      const auto om = stats::weighted_moments(vals, wts);
      cell.occ_mean = om.mean;
      cell.occ_var = om.variance;
      // Autocorrelation of the sampled series, deflated by the Kish factor of the weights.
      double sw = 0.0;
      double sw2 = 0.0;
      for (double v : wts) {
        sw += v;
        sw2 += v * v;
      }
      const double kish = vals.empty() ? 0.0 : (sw * sw / sw2) / static_cast<double>(vals.size());
      cell.ess = stats::effective_sample_size(vals) * kish;

      std::vector<double> rv(static_cast<std::size_t>(ref.count()));
      for (int i = 0; i < ref.count(); ++i) rv[static_cast<std::size_t>(i)] = ref.samples(i, k);
      const auto rm = stats::moments(rv);
      cell.ref_mean = rm.mean;
      cell.ref_var = rm.variance;

      cell.low_ess = !(cell.ess >= options.min_ess);
      const double ess = std::max(cell.ess, 2.0);
      const double se_mean = std::sqrt(cell.occ_var / ess + rm.se_mean() * rm.se_mean());
      const double se_occ_var = cell.occ_var * std::sqrt(2.0 / (ess - 1.0));
      const double se_var = std::sqrt(se_occ_var * se_occ_var + rm.se_variance() * rm.se_variance());
      cell.z_mean = se_mean > 0.0 ? (cell.occ_mean - cell.ref_mean) / se_mean : 0.0;
      cell.z_var = se_var > 0.0 ? (cell.occ_var - cell.ref_var) / se_var : 0.0;
      cell.pass = !cell.low_ess && stats::two_sided_p(cell.z_mean) > options.alpha &&
                  stats::two_sided_p(cell.z_var) > options.alpha;
      per_window[w].push_back(cell);
    }
  });
  for (auto& v : per_window) {
    for (auto& c : v) report.cells.push_back(c);
  }
  std::stable_sort(report.cells.begin(), report.cells.end(), [](const auto& a, const auto& b) {
    return a.mode != b.mode ? a.mode < b.mode : a.window < b.window;
  });
  return report;
}

}  // namespace mdspde
