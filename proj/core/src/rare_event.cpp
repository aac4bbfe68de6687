#include "mdspde/rare_event.hpp"

#include "mdspde/parallel.hpp"
#include "mdspde/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <regex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mdspde {

namespace {

struct PathOutcome {
  bool hit = false;
  double log_weight = 0.0;
  bool cap_hit = false;
};

// log cosh(a) without overflow.
double log_cosh(double a) {
  const double b = std::abs(a);
  return b + std::log1p(std::exp(-2.0 * b)) - std::numbers::ln2;
}

void require_hypotheses(const ModelSpec& model, const char* who) {
  if (!validate_hypotheses(model).pass()) throw HypothesisError(std::string(who) + ": model hypotheses fail");
}

Field start_or_zero(const std::optional<Field>& f, const SpectralBasis& b) {
  return f ? *f : Field::zero(b);
}

struct Simulation {
  const ModelSpec& model;
  const RegimeParams& regime;
  const EventSpec& event;
  const ControlSpec& controls;
  const TimeSeries& xbar;
  const std::vector<double>& times;
  Field x0;
  Field y0;
  double dt;
  std::uint64_t seed;
  bool mixture;

  PathOutcome run(std::uint64_t path) const {
    const int n = model.modes();
    const SlowFastStepper stepper(model, regime, dt);
    const NormalStream slow_noise(seed, path, Stream::SlowNoise);
    const NormalStream fast_noise(seed, path, Stream::FastNoise);
    const bool controlled = controls.kind != ControlSpec::Kind::Zero;
    double sign = 1.0;
    if (controlled && mixture) {
      sign = NormalStream(seed, path, Stream::MixtureSign).uniform(0) < 0.5 ? -1.0 : 1.0;
    }
    const double h = regime.h;
    const double scale = 1.0 / regime.eta_scale();
    const double sqrt_dt = std::sqrt(dt);
    const std::size_t steps = times.size() - 1;

    Eigen::VectorXd x = x0.coeffs;
    Eigen::VectorXd y = y0.coeffs;
    Eigen::VectorXd xi1(n);
    Eigen::VectorXd xi2(n);
    double A = 0.0;
    double B = 0.0;
    double energy = 0.0;
    PathOutcome out;
    double stat = event.terminal_only() ? 0.0 : event.statistic((x - xbar.row(0).transpose()) * scale);
    for (std::size_t k = 0; k < steps; ++k) {
      slow_noise.fill(k, std::span<double>(xi1.data(), n), sqrt_dt);
      fast_noise.fill(k, std::span<double>(xi2.data(), n), sqrt_dt);
      if (controlled) {
        ControlValue v = controls.evaluate(times[k], y, n, n);
        double e = v.u1.squaredNorm() + v.u2.squaredNorm();
        if (energy + dt * e > controls.energy_cap) {
          const double room = std::max(0.0, controls.energy_cap - energy);
          const double s = e > 0.0 ? std::sqrt(std::min(1.0, room / (dt * e))) : 0.0;
          v.u1 *= s;
          v.u2 *= s;
          e *= s * s;
          out.cap_hit = true;
        }
        energy += dt * e;
        xi1 += (sign * h * dt) * v.u1;
        xi2 += (sign * h * dt) * v.u2;
        A += h * (v.u1.dot(xi1) + v.u2.dot(xi2));
        B += 0.5 * h * h * e * dt;
      }
      stepper.step(x, y, xi1, xi2);
      if (!event.terminal_only()) {
        const auto row = static_cast<Eigen::Index>(k + 1);
        stat = std::max(stat, event.statistic((x - xbar.row(row).transpose()) * scale));
      }
    }
    if (event.terminal_only()) {
      stat = event.statistic((x - xbar.row(static_cast<Eigen::Index>(steps)).transpose()) * scale);
    }
    out.hit = stat >= event.r;
    if (controlled) out.log_weight = mixture ? B - log_cosh(A) : B - A;
    return out;
  }
};

Estimate run_estimator(const ModelSpec& model, const RegimeParams& regime, const EventSpec& event,
                       const ControlSpec& controls, std::size_t n, double T, double dt,
                       std::uint64_t seed, const EstimateOptions& options, std::string method) {
  if (n == 0) throw std::invalid_argument("estimator: n must be positive");
  if (event.r < 0.0) throw std::invalid_argument("estimator: level r must be non-negative");
  if (event.kind == EventSpec::Kind::TerminalMode && (event.mode < 0 || event.mode >= model.modes())) {
    throw std::invalid_argument("estimator: event mode out of range");
  }
  check_step(dt, regime.delta, "estimator");
  const Field x0 = start_or_zero(options.x0, model.slow());
  const Field y0 = start_or_zero(options.y0, model.fast());
  require_basis(x0, model.slow(), "estimator(x0)");
  require_basis(y0, model.fast(), "estimator(y0)");

  // Xbar once, on the simulation grid.
  const PathBundle xbar = solve_averaged(model, x0, T, dt, options.invariant, derive_seed(seed, 0xa7));
  const Simulation sim{model, regime, event, controls, *xbar.X, xbar.times, x0, y0, dt, seed,
                       options.symmetric_mixture};

  std::vector<PathOutcome> outcomes(n);
  parallel_for(n, options.workers, [&](std::size_t p) { outcomes[p] = sim.run(p); });

  Estimate est;
  est.method = std::move(method);
  est.n_paths = n;
  est.seed = seed;
  double s1 = 0.0;
  double s2 = 0.0;
  double sw = 0.0;
  for (const auto& o : outcomes) {
    const double w = std::exp(o.log_weight);
    sw += w;
    if (o.cap_hit) ++est.cap_hits;
    if (!o.hit) continue;
    ++est.hits;
    s1 += w;
    s2 += w * w;
  }
  const double dn = static_cast<double>(n);
  est.p_hat = s1 / dn;
  est.second_moment = s2 / dn;
  est.mean_weight = sw / dn;
  if (est.p_hat > 0.0) {
    est.relative_error =
        std::sqrt(std::max(0.0, est.second_moment / (est.p_hat * est.p_hat) - 1.0)) / std::sqrt(dn);
    est.se = est.p_hat * est.relative_error;
    est.ci_upper = est.p_hat + 1.6448536269514722 * est.se;
  } else {
    est.relative_error = std::numeric_limits<double>::infinity();
    est.ci_upper = 3.0 / dn;
  }
  return est;
}

}  // namespace

EventSpec EventSpec::parse(const std::string& text) {
  static const std::regex re(R"(^\s*([a-z_]+)\s*:\s*([^,\s]+)\s*(?:,\s*([^,\s]+))?\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw std::invalid_argument("malformed event '" + text + "'");
  const std::string kind = m[1];
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "' in event");
    return v;
  };
  if (kind == "terminal_mode") {
    if (!m[3].matched) throw std::invalid_argument("terminal_mode expects K,R");
    const double k = num(m[2]);
    if (k < 1 || k != std::floor(k)) throw std::invalid_argument("terminal_mode: mode must be a positive integer");
    return terminal_mode(static_cast<int>(k) - 1, num(m[3]));
  }
  if (m[3].matched) throw std::invalid_argument(kind + " expects a single level");
  if (kind == "terminal_norm") return terminal_norm(num(m[2]));
  if (kind == "sup_norm") return sup_norm(num(m[2]));
  throw std::invalid_argument("unknown event kind '" + kind + "'");
}

std::string EventSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case Kind::TerminalNorm: os << "terminal_norm:" << r; break;
    case Kind::SupNorm: os << "sup_norm:" << r; break;
    case Kind::TerminalMode: os << "terminal_mode:" << mode + 1 << ',' << r; break;
  }
  return os.str();
}

double EventSpec::statistic(const Eigen::VectorXd& eta) const {
  return kind == Kind::TerminalMode ? std::abs(eta[mode]) : eta.norm();
}

Estimate estimate_plain(const ModelSpec& model, const RegimeParams& regime, const EventSpec& event,
                        std::size_t n, double T, double dt, std::uint64_t seed,
                        const EstimateOptions& options) {
  require_hypotheses(model, "estimate_plain");
  return run_estimator(model, regime, event, ControlSpec::zero(), n, T, dt, seed, options, "plain");
}

Estimate estimate_importance(const ModelSpec& model, const RegimeParams& regime,
                             const EventSpec& event, const ControlSpec& controls, std::size_t n,
                             double T, double dt, std::uint64_t seed, const EstimateOptions& options) {
  require_hypotheses(model, "estimate_importance");
  return run_estimator(model, regime, event, controls, n, T, dt, seed, options, "is");
}

Estimate estimate_importance(const ModelSpec& model, const RegimeParams& regime,
                             const EventSpec& event, const SmoothPath& psi_target, std::size_t n,
                             double T, double dt, std::uint64_t seed, const EstimateOptions& options) {
  require_hypotheses(model, "estimate_importance");
  psi_target.validate();
  const Field x0 = start_or_zero(options.x0, model.slow());
  const PathBundle xbar = solve_averaged(model, x0, psi_target.horizon(), psi_target.dt(),
                                         options.invariant, derive_seed(seed, 0xa7));
  const OperatorSchedule ops(model, regime, xbar, options.q, derive_seed(seed, 0x9e));
  const ControlSpec controls = optimal_controls(model, psi_target, ops);
  return run_estimator(model, regime, event, controls, n, T, dt, seed, options, "is");
}

AsymptoteResult mdp_asymptote(const ModelSpec& model, const RegimeParams& regime,
                              const EventSpec& event, const AsymptoteConfig& config) {
  if (event.kind == EventSpec::Kind::SupNorm) {
    throw std::invalid_argument("mdp_asymptote: event must be terminal_norm or terminal_mode");
  }
  if (event.r < 0.0) throw std::invalid_argument("mdp_asymptote: negative level");
  AsymptoteResult best;
  best.mode = event.kind == EventSpec::Kind::TerminalMode ? event.mode : 0;
  if (best.mode < 0 || best.mode >= model.modes()) throw std::invalid_argument("mdp_asymptote: mode out of range");
  if (event.r == 0.0) {
    best.psi = SmoothPath::linear(model.slow(), config.T, config.dt, best.mode, 0.0);
    return best;
  }

  const PathBundle xbar = solve_averaged(model, Field::zero(model.slow()), config.T, config.dt,
                                         config.q.invariant, derive_seed(config.seed, 0xa7));
  const OperatorSchedule ops(model, regime, xbar, config.q, derive_seed(config.seed, 0x9e));
  auto S = [&](int k, double c) {
    const double v = rate_functional(model, SmoothPath::linear(model.slow(), config.T, config.dt, k, c / config.T), ops).S;
    if (!std::isfinite(v)) throw std::runtime_error("mdp_asymptote: rate functional is not finite");
    return v;
  };

  std::vector<int> modes;
  if (event.kind == EventSpec::Kind::TerminalMode) {
    modes.push_back(event.mode);
  } else {
    for (int k = 0; k < model.modes(); ++k) modes.push_back(k);
  }
  const double lo0 = event.r;
  const double hi0 = config.c_hi_factor * event.r;
  if (!(hi0 > lo0)) throw std::invalid_argument("mdp_asymptote: empty search bracket");
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  best.S = std::numeric_limits<double>::infinity();
  for (int k : modes) {
    double a = lo0;
    double b = hi0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = S(k, c);
    double fd = S(k, d);
    while (b - a > config.tol * std::max(1.0, event.r)) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - invphi * (b - a);
        fc = S(k, c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + invphi * (b - a);
        fd = S(k, d);
      }
    }
    // Endpoints first: the constraint c >= r is typically active.
    const double candidates[] = {lo0, hi0, 0.5 * (a + b)};
    for (double cand : candidates) {
      const double v = S(k, cand);
      if (v < best.S) {
        best.S = v;
        best.c = cand;
        best.mode = k;
      }
    }
  }
  best.psi = SmoothPath::linear(model.slow(), config.T, config.dt, best.mode, best.c / config.T);
  return best;
}

}  // namespace mdspde
