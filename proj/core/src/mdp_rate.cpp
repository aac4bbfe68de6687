#include "mdspde/mdp_rate.hpp"

#include "mdspde/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace mdspde {

namespace {

constexpr double kTimeTol = 1e-9;

bool psi_deterministic(const ModelSpec& model) {
  return model.f().independent_of_y() || (model.f().dy_constant() && model.g().dy_constant());
}

// Linear interpolation of the rows of `series` on a uniform grid starting at 0.
Eigen::VectorXd interpolate_row(const TimeSeries& series, double dt, double t) {
  const auto last = series.rows() - 1;
  const double s = std::clamp(t / dt, 0.0, static_cast<double>(last));
  auto i = static_cast<Eigen::Index>(std::floor(s + kTimeTol));
  i = std::min(i, last);
  const double frac = s - static_cast<double>(i);
  if (i == last || frac <= kTimeTol) return series.row(i).transpose();
  return ((1.0 - frac) * series.row(i) + frac * series.row(i + 1)).transpose();
}

// Rows over which the invariant-law average is taken at time t: a single
// zero row when nothing depends on y, otherwise the sampled fast states.
class MuRows {
 public:
  MuRows(const ModelSpec& model, const OperatorSchedule& ops, bool y_free)
      : model_(model), ops_(ops), y_free_(y_free), zero_(TimeSeries::Zero(1, model.fast().size())) {}

  const TimeSeries& at(double t) {
    if (y_free_) return zero_;
    const auto& e = ops_.at(t);
    if (e.samples) return e.samples->samples;
    if (!cache_) {
      cache_ = std::make_unique<InvariantCache>(model_, ops_.policy().invariant,
                                                derive_seed(ops_.seed(), 0x6d75));
    }
    auto it = local_.find(e.t);
    if (it == local_.end()) it = local_.emplace(e.t, cache_->get(e.x)).first;
    return it->second->samples;
  }

 private:
  const ModelSpec& model_;
  const OperatorSchedule& ops_;
  bool y_free_;
  TimeSeries zero_;
  std::unique_ptr<InvariantCache> cache_;
  std::map<double, std::shared_ptr<const InvariantSample>> local_;
};

}  // namespace

bool q_is_y_independent(const ModelSpec& model, const RegimeParams& regime) {
  return model.sigma().is_constant() && (regime.gamma == 0.0 || psi_deterministic(model));
}

QMatrix q_matrix(const ModelSpec& model, const RegimeParams& regime, const Field& x,
                 const InvariantSample* inv, int m, const Psi2Options& psi2, std::uint64_t seed) {
  require_basis(x, model.slow(), "q_matrix(x)");
  const auto report = validate_hypotheses(model);
  if (!report.pass()) throw HypothesisError("q_matrix: model hypotheses fail");
  const int n = model.modes();
  if (m <= 0) m = n;
  if (m > n) throw std::invalid_argument("q_matrix: m exceeds the mode count");

  QMatrix out;
  out.regime = regime.regime;
  out.x = x;
  out.y_independent = q_is_y_independent(model, regime);

  TimeSeries ys;
  if (out.y_independent) {
    ys = TimeSeries::Zero(1, n);
  } else {
    if (inv == nullptr || inv->count() == 0) {
      throw std::invalid_argument("q_matrix: invariant sample required (Q depends on y)");
    }
    ys = inv->samples;
  }
  const double g2 = regime.gamma * regime.gamma;
  const bool with_psi = g2 > 0.0 && !model.f().independent_of_y();
  Psi2Options opts = psi2;
  opts.m = m;

  const auto& grid = model.grid();
  const Eigen::VectorXd xg = grid.to_grid(Component::Slow, x.coeffs);
  const auto count = ys.rows();
  std::vector<Eigen::MatrixXd> pieces(static_cast<std::size_t>(count));
  Eigen::MatrixXd psi_fixed;
  if (with_psi && psi_deterministic(model)) {
    psi_fixed = psi2_zero_matrix(model, x, Field::zero(model.fast()), opts, seed).entries;
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    const Eigen::VectorXd y = ys.row(i).transpose();
    const Eigen::VectorXd yg = grid.to_grid(Component::Fast, y);
    Eigen::VectorXd s2(xg.size());
    for (Eigen::Index q = 0; q < xg.size(); ++q) {
      const double s = model.sigma().value(xg[q], yg[q]);
      s2[q] = s * s;
    }
    Eigen::MatrixXd a = grid.multiplication(Component::Slow, Component::Slow, s2).topLeftCorner(m, m);
    out.sigma.push_back(model.sigma_matrix(x.coeffs, y));
    if (with_psi) {
      Eigen::MatrixXd p = psi_fixed.size() > 0
                              ? psi_fixed
                              : psi2_zero_matrix(model, x, Field::from(model.fast(), y), opts,
                                                 derive_seed(seed, static_cast<std::uint64_t>(i)))
                                    .entries;
      a += g2 * p * p.transpose();
      out.psi.push_back(std::move(p));
    }
    pieces[static_cast<std::size_t>(i)] = std::move(a);
  }

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(m, m);
  for (const auto& a : pieces) {
    sum += a;
    sq += a.cwiseProduct(a);
  }
  const double N = static_cast<double>(count);
  out.entries = sum / N;
  out.entries = 0.5 * (out.entries + out.entries.transpose()).eval();
  out.se = Eigen::MatrixXd::Zero(m, m);
  if (count > 1) {
    out.se = (((sq.array() - N * out.entries.array().square()) / (N - 1.0)).max(0.0) / N).sqrt().matrix();
  }

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.entries);
  const Eigen::VectorXd lam = eig.eigenvalues();
  out.min_eigenvalue = lam[0];
  if (!(out.min_eigenvalue > 0.0)) {
    throw std::runtime_error("q_matrix: Q is not positive definite (min eigenvalue " +
                             std::to_string(out.min_eigenvalue) + ")");
  }
  if (count > 1) {
    // First-order sensitivity of the smallest eigenvalue to each sample.
    const Eigen::VectorXd v = eig.eigenvectors().col(0);
    double s = 0.0;
    double ss = 0.0;
    for (const auto& a : pieces) {
      const double r = v.dot(a * v);
      s += r;
      ss += r * r;
    }
    const double mean = s / N;
    out.min_eigenvalue_se = std::sqrt(std::max(0.0, (ss - N * mean * mean) / (N - 1.0)) / N);
  }
  const Eigen::MatrixXd& V = eig.eigenvectors();
  out.inverse = V * lam.cwiseInverse().asDiagonal() * V.transpose();
  out.inv_sqrt = V * lam.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
  return out;
}

SmoothPath SmoothPath::linear(const SpectralBasis& slow, double T, double dt, int mode, double slope) {
  if (mode < 0 || mode >= slow.size()) throw std::invalid_argument("SmoothPath::linear: mode out of range");
  SmoothPath p;
  p.times = uniform_grid(T, dt);
  p.basis = slow.tag();
  p.values = TimeSeries::Zero(static_cast<Eigen::Index>(p.times.size()), slow.size());
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    p.values(static_cast<Eigen::Index>(k), mode) = slope * p.times[k];
  }
  return p;
}

SmoothPath SmoothPath::from(const SpectralBasis& slow, std::vector<double> times, TimeSeries values) {
  SmoothPath p;
  p.times = std::move(times);
  p.values = std::move(values);
  p.basis = slow.tag();
  p.validate();
  return p;
}

void SmoothPath::validate() const {
  if (times.size() < 2) throw std::invalid_argument("SmoothPath: need at least two time points");
  if (values.rows() != static_cast<Eigen::Index>(times.size()) || values.cols() != basis.size) {
    throw std::invalid_argument("SmoothPath: value matrix shape does not match grid and basis");
  }
  if (values.row(0).cwiseAbs().maxCoeff() > 1e-12) throw std::invalid_argument("SmoothPath: psi(0) != 0");
  const double h = dt();
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (std::abs(times[k] - times[k - 1] - h) > 1e-9 * std::max(1.0, h)) {
      throw std::invalid_argument("SmoothPath: grid is not uniform");
    }
  }
}

OperatorSchedule::OperatorSchedule(const ModelSpec& model, const RegimeParams& regime,
                                   const PathBundle& xbar, const QPolicy& policy, std::uint64_t seed)
    : model_(&model), regime_(regime), xbar_(xbar), policy_(policy), seed_(seed) {
  if (!xbar_.X) throw std::invalid_argument("OperatorSchedule: xbar bundle has no X path");
  m_ = policy.m > 0 ? policy.m : model.modes();
  if (m_ > model.modes()) throw std::invalid_argument("OperatorSchedule: m exceeds the mode count");
  y_independent_ = q_is_y_independent(model, regime);

  if (y_independent_) {
    Entry e;
    e.x = Field::from(model.slow(), xbar_at(0.0));
    e.q = q_matrix(model, regime, e.x, nullptr, m_, policy.psi2, derive_seed(seed, 2));
    entries_.push_back(std::move(e));
    return;
  }
  InvariantCache cache(model, policy.invariant, derive_seed(seed, 1));
  const double T = xbar_.horizon();
  const double step = policy.refresh > 0.0 ? std::max(policy.refresh, xbar_.dt) : xbar_.dt;
  for (std::size_t j = 0;; ++j) {
    const double t = static_cast<double>(j) * step;
    if (t > T + kTimeTol) break;
    Entry e;
    e.t = t;
    e.x = Field::from(model.slow(), xbar_at(t));
    e.samples = cache.get(e.x);
    e.q = q_matrix(model, regime, e.x, e.samples.get(), m_, policy.psi2, derive_seed(seed, 2 + j));
    entries_.push_back(std::move(e));
  }
}

const OperatorSchedule::Entry& OperatorSchedule::at(double t) const {
  auto it = std::upper_bound(entries_.begin(), entries_.end(), t + kTimeTol,
                             [](double v, const Entry& e) { return v < e.t; });
  return it == entries_.begin() ? entries_.front() : *std::prev(it);
}

Eigen::VectorXd OperatorSchedule::xbar_at(double t) const { return interpolate_row(*xbar_.X, xbar_.dt, t); }

Eigen::MatrixXd OperatorSchedule::dxf_at(double t) const {
  const Field x = Field::from(model_->slow(), xbar_at(t));
  return averaged_jacobian_matrix(*model_, x, at(t).samples.get());
}

TimeSeries rate_residual(const ModelSpec& model, const SmoothPath& psi, const OperatorSchedule& ops) {
  psi.validate();
  if (psi.basis != model.slow().tag()) throw std::invalid_argument("rate_residual: psi basis mismatch");
  const auto& xbar = ops.xbar();
  if (psi.times.size() != xbar.times.size() || std::abs(psi.dt() - xbar.dt) > 1e-12 * std::max(1.0, xbar.dt)) {
    throw std::invalid_argument("rate_residual: psi and xbar grids differ");
  }
  const auto K = static_cast<Eigen::Index>(psi.times.size());
  const double dt = psi.dt();
  const Eigen::ArrayXd a = model.slow().eigenvalues().array();
  const bool zero_jac = model.f().family == ReactionSpec::Family::Zero ||
                        model.f().family == ReactionSpec::Family::LinearY;
  TimeSeries r(K, psi.values.cols());
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd d;
    if (k == 0) {
      d = (psi.values.row(1) - psi.values.row(0)).transpose() / dt;
    } else if (k == K - 1) {
      d = (psi.values.row(k) - psi.values.row(k - 1)).transpose() / dt;
    } else {
      d = (psi.values.row(k + 1) - psi.values.row(k - 1)).transpose() / (2.0 * dt);
    }
    const Eigen::VectorXd p = psi.values.row(k).transpose();
    Eigen::VectorXd rk = d + (a * p.array()).matrix();
    if (!zero_jac) rk -= ops.dxf_at(psi.times[static_cast<std::size_t>(k)]) * p;
    r.row(k) = rk.transpose();
  }
  return r;
}

RateReport rate_functional(const ModelSpec& model, const SmoothPath& psi, const OperatorSchedule& ops) {
  const TimeSeries r = rate_residual(model, psi, ops);
  const int m = ops.block();
  RateReport out;
  out.regime = ops.regime().regime;
  const auto K = r.rows();
  const double dt = psi.dt();
  double S = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double t = psi.times[static_cast<std::size_t>(k)];
    const Eigen::VectorXd rk = r.row(k).transpose();
    const Eigen::VectorXd z = ops.at(t).q.inv_sqrt * rk.head(m);
    const double res = z.norm();
    out.per_t.push_back({t, res, rk.norm()});
    S += ((k == 0 || k == K - 1) ? 0.5 : 1.0) * dt * res * res;
  }
  out.S = 0.5 * S;
  return out;
}

ControlSpec optimal_controls(const ModelSpec& model, const SmoothPath& psi, const OperatorSchedule& ops) {
  const TimeSeries r = rate_residual(model, psi, ops);
  const int m = ops.block();
  const int n = model.modes();
  const double gamma = ops.regime().gamma;
  const double dt = psi.dt();
  auto sched = std::make_shared<const OperatorSchedule>(ops);

  auto psi_block = [](const OperatorSchedule::Entry& e, std::size_t i) -> const Eigen::MatrixXd* {
    if (e.q.psi.empty()) return nullptr;
    return &e.q.psi[std::min(i, e.q.psi.size() - 1)];
  };

  if (sched->y_independent()) {
    // Controls are fixed vectors per grid time; tabulate and interpolate.
    const auto K = r.rows();
    auto v1 = std::make_shared<TimeSeries>(K, n);
    auto v2 = std::make_shared<TimeSeries>(TimeSeries::Zero(K, n));
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto& e = sched->at(psi.times[static_cast<std::size_t>(k)]);
      const Eigen::VectorXd w = e.q.inverse * r.row(k).transpose().head(m);
      v1->row(k) = (e.q.sigma.front().leftCols(m) * w).transpose();
      if (const auto* p = psi_block(e, 0); p != nullptr && gamma > 0.0) {
        v2->row(k).head(m) = (gamma * p->transpose() * w).transpose();
      }
    }
    ControlSpec c = ControlSpec::feedback([v1, v2, dt](double t, const Eigen::VectorXd&) {
      return ControlValue{interpolate_row(*v1, dt, t), interpolate_row(*v2, dt, t)};
    });
    c.y_independent = true;
    return c;
  }

  auto rr = std::make_shared<const TimeSeries>(r);
  const ModelSpec* mp = &model;
  const bool fixed_psi = psi_deterministic(model);
  return ControlSpec::feedback([sched, rr, mp, m, n, gamma, dt, fixed_psi](double t, const Eigen::VectorXd& y) {
    const auto& e = sched->at(t);
    const Eigen::VectorXd w = e.q.inverse * interpolate_row(*rr, dt, t).head(m);
    ControlValue v{mp->sigma_matrix(e.x.coeffs, y).leftCols(m) * w, Eigen::VectorXd::Zero(n)};
    if (gamma > 0.0 && !mp->f().independent_of_y()) {
      Eigen::MatrixXd p;
      if (fixed_psi && !e.q.psi.empty()) {
        p = e.q.psi.front();
      } else {
        Psi2Options opts = sched->policy().psi2;
        opts.m = m;
        p = psi2_zero_matrix(*mp, e.x, Field::from(mp->fast(), y), opts, derive_seed(sched->seed(), 7)).entries;
      }
      v.u2.head(m) = gamma * p.transpose() * w;
    }
    return v;
  });
}

double control_cost(const ModelSpec& model, const ControlSpec& controls, const OperatorSchedule& ops) {
  if (controls.kind == ControlSpec::Kind::Zero) return 0.0;
  const auto& times = ops.xbar().times;
  const int n = model.modes();
  MuRows mu(model, ops, controls.y_independent);
  const auto K = times.size();
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const TimeSeries& ys = mu.at(times[k]);
    double e = 0.0;
    for (Eigen::Index i = 0; i < ys.rows(); ++i) {
      const ControlValue v = controls.evaluate(times[k], ys.row(i).transpose(), n, n);
      e += v.u1.squaredNorm() + v.u2.squaredNorm();
    }
    e /= static_cast<double>(ys.rows());
    total += ((k == 0 || k + 1 == K) ? 0.5 : 1.0) * ops.xbar().dt * e;
  }
  return 0.5 * total;
}

LimitSolution solve_limit_equation(const ModelSpec& model, const ControlSpec& controls,
                                   const OperatorSchedule& ops, double T, double dt) {
  LimitSolution out;
  out.psi.times = uniform_grid(T, dt);
  out.psi.basis = model.slow().tag();
  const auto K = out.psi.times.size();
  const int n = model.modes();
  const int m = ops.block();
  const double gamma = ops.regime().gamma;
  out.psi.values = TimeSeries::Zero(static_cast<Eigen::Index>(K), n);

  const bool y_free = ops.y_independent() && controls.y_independent;
  MuRows mu(model, ops, y_free);
  const bool zero_jac = model.f().family == ReactionSpec::Family::Zero ||
                        model.f().family == ReactionSpec::Family::LinearY;
  const bool fixed_psi = psi_deterministic(model);

  // Xi(t, psi) = Dbar_x F psi + int [Sigma u1 + gamma Psi u2] dmu.
  auto xi = [&](double t, const Eigen::VectorXd& p) {
    Eigen::VectorXd out_xi = Eigen::VectorXd::Zero(n);
    if (!zero_jac) out_xi += ops.dxf_at(t) * p;
    if (controls.kind == ControlSpec::Kind::Zero) return out_xi;
    const auto& e = ops.at(t);
    const TimeSeries& ys = mu.at(t);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < ys.rows(); ++i) {
      const Eigen::VectorXd y = ys.row(i).transpose();
      const ControlValue v = controls.evaluate(t, y, n, n);
      acc += model.sigma_apply(e.x.coeffs, y, v.u1);
      if (gamma > 0.0 && !model.f().independent_of_y()) {
        Eigen::MatrixXd P;
        if (!e.q.psi.empty() && (fixed_psi || static_cast<std::size_t>(i) < e.q.psi.size())) {
          P = fixed_psi ? e.q.psi.front() : e.q.psi[static_cast<std::size_t>(i)];
        } else {
          Psi2Options opts = ops.policy().psi2;
          opts.m = m;
          P = psi2_zero_matrix(model, e.x, Field::from(model.fast(), y), opts,
                               derive_seed(ops.seed(), 11 + static_cast<std::uint64_t>(i)))
                  .entries;
        }
        acc.head(m) += gamma * P * v.u2.head(m);
      }
    }
    out_xi += acc / static_cast<double>(ys.rows());
    return out_xi;
  };

  const ExponentialFactors fac(model.slow().eigenvalues(), dt);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd mild = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd xi_prev = xi(0.0, p);
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    p = (fac.decay * p.array() + fac.drift * (dt * xi_prev.array())).matrix();
    const Eigen::VectorXd xi_next = xi(out.psi.times[k + 1], p);
    mild = (fac.decay * mild.array() + 0.5 * dt * (fac.decay * xi_prev.array() + xi_next.array())).matrix();
    out.psi.values.row(static_cast<Eigen::Index>(k + 1)) = p.transpose();
    worst = std::max(worst, (p - mild).norm());
    xi_prev = xi_next;
  }
  out.mild_residual = worst;
  return out;
}

}  // namespace mdspde
