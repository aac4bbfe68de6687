#include "mdspde/averaging.hpp"

#include "mdspde/parallel.hpp"
#include "mdspde/rng.hpp"

#include <cmath>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>

namespace mdspde {

namespace {

long long steps_for(double duration, double dt) {
  return static_cast<long long>(std::ceil(duration / dt - 1e-9));
}

// F-bar(x) = F(x, 0) without sampling: either f ignores y, or f is linear in
// y and g = 0 makes the invariant law a centred Gaussian.
bool drift_closed_form(const ModelSpec& model) {
  return model.f().independent_of_y() || (model.f().family == ReactionSpec::Family::LinearY &&
                                           model.g().family == ReactionSpec::Family::Zero);
}

// Mean and standard error of F(x, y_i) over the rows of `samples`.
AveragedField mean_drift(const ModelSpec& model, const Eigen::VectorXd& x, const TimeSeries& samples) {
  const int n = model.modes();
  AveragedField out{Field::zero(model.slow()), Eigen::VectorXd::Zero(n)};
  if (drift_closed_form(model)) {
    out.value.coeffs = model.reaction_f(x, Eigen::VectorXd::Zero(model.fast().size()));
    return out;
  }
  const Eigen::VectorXd xg = model.grid().to_grid(Component::Slow, x);
  const auto m = samples.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd v = model.reaction_f_grid(xg, samples.row(i).transpose());
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const double dm = static_cast<double>(m);
  out.value.coeffs = sum / dm;
  if (m > 1) {
    const Eigen::ArrayXd var =
        ((sq.array() - dm * out.value.coeffs.array().square()) / (dm - 1.0)).max(0.0);
    out.se = (var / dm).sqrt().matrix();
  }
  return out;
}

void check_frozen(const InvariantSample& inv, const Field& x) {
  if (inv.count() == 0) throw std::invalid_argument("invariant sample is empty");
  if (inv.frozen_x.basis != x.basis) throw std::invalid_argument("invariant sample basis mismatch");
  const double tol = 0.5 * inv.quantum + 1e-12;
  if ((inv.frozen_x.coeffs - x.coeffs).lpNorm<Eigen::Infinity>() > tol) {
    throw std::invalid_argument("invariant sample was drawn at a different frozen x");
  }
}

}  // namespace

Field InvariantSample::sample(int i, const SpectralBasis& fast) const {
  return Field::from(fast, samples.row(i).transpose());
}

void require_dissipative(const ModelSpec& model, const char* who) {
  const auto report = validate_hypotheses(model);
  if (!report.dissipative) {
    throw HypothesisError(std::string(who) + ": fast dynamics not dissipative (L_g = " +
                          std::to_string(report.L_g) + " >= lambda = " +
                          std::to_string(report.lambda) + ")");
  }
}

InvariantSample sample_invariant(const ModelSpec& model, const Field& x, int count, double burn_in,
                                 double thinning, double dt, std::uint64_t seed, int chains,
                                 unsigned workers) {
  require_basis(x, model.slow(), "sample_invariant(x)");
  require_dissipative(model, "sample_invariant");
  if (count < 1) throw std::invalid_argument("sample_invariant: count must be >= 1");
  if (chains < 1) throw std::invalid_argument("sample_invariant: chains must be >= 1");
  check_step(dt, 1.0, "sample_invariant");
  const double ell = model.ell();
  if (burn_in <= 0.0) burn_in = 10.0 / ell;
  if (thinning <= 0.0) thinning = 1.0 / ell;

  const long long burn_steps = steps_for(burn_in, dt);
  const long long thin_steps = std::max(1LL, steps_for(thinning, dt));
  chains = std::min(chains, count);

  InvariantSample out;
  out.frozen_x = x;
  out.burn_in = static_cast<double>(burn_steps) * dt;
  out.thinning = static_cast<double>(thin_steps) * dt;
  out.dt = dt;
  out.seed = seed;
  const int n = model.fast().size();
  out.samples.resize(count, n);

  // Chain c fills rows [offset(c), offset(c) + size(c)).
  std::vector<int> offset(chains + 1, 0);
  for (int c = 0; c < chains; ++c) offset[c + 1] = offset[c] + count / chains + (c < count % chains ? 1 : 0);

  const FrozenFastStepper stepper(model, x.coeffs, dt);
  const double sqrt_dt = std::sqrt(dt);
  parallel_for(static_cast<std::size_t>(chains), workers, [&](std::size_t c) {
    const NormalStream noise(seed, c, Stream::FrozenNoise);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd dw(n);
    std::uint64_t k = 0;
    auto advance = [&](long long steps) {
      for (long long s = 0; s < steps; ++s, ++k) {
        noise.fill(k, std::span<double>(dw.data(), n), sqrt_dt);
        stepper.step(y, dw);
      }
    };
    advance(burn_steps);
    for (int r = offset[c]; r < offset[c + 1]; ++r) {
      advance(thin_steps);
      out.samples.row(r) = y.transpose();
    }
  });
  return out;
}

InvariantSample sample_invariant(const ModelSpec& model, const Field& x,
                                 const InvariantPolicy& policy, std::uint64_t seed) {
  return sample_invariant(model, x, policy.count, policy.burn_in, policy.thinning, policy.dt, seed,
                          policy.chains, policy.workers);
}

InvariantCache::InvariantCache(const ModelSpec& model, InvariantPolicy policy, std::uint64_t seed)
    : model_(&model), policy_(policy), seed_(seed) {
  if (!(policy_.quantum > 0.0)) throw std::invalid_argument("InvariantCache: quantum must be positive");
}

std::shared_ptr<const InvariantSample> InvariantCache::get(const Field& x) {
  require_basis(x, model_->slow(), "InvariantCache::get(x)");
  Key key(static_cast<std::size_t>(x.size()));
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (int k = 0; k < x.size(); ++k) {
    key[k] = std::llround(x.coeffs[k] / policy_.quantum);
    h = mix64(h ^ static_cast<std::uint64_t>(key[k]));
  }
  if (policy_.cache) {
    std::shared_lock lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      lock.unlock();
      std::unique_lock count_lock(mutex_);
      ++hits_;
      return it->second;
    }
  }
  Field xq = x;
  for (int k = 0; k < x.size(); ++k) xq.coeffs[k] = static_cast<double>(key[k]) * policy_.quantum;
  auto sample = std::make_shared<InvariantSample>(
      sample_invariant(*model_, xq, policy_, derive_seed(seed_, h)));
  sample->quantum = policy_.quantum;
  std::unique_lock lock(mutex_);
  ++misses_;
  if (!policy_.cache) return sample;
  auto [it, inserted] = entries_.emplace(std::move(key), std::move(sample));
  return it->second;
}

std::size_t InvariantCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t InvariantCache::hits() const {
  std::shared_lock lock(mutex_);
  return hits_;
}

std::size_t InvariantCache::misses() const {
  std::shared_lock lock(mutex_);
  return misses_;
}

AveragedField averaged_drift(const ModelSpec& model, const Field& x, const InvariantSample& inv) {
  require_basis(x, model.slow(), "averaged_drift(x)");
  check_frozen(inv, x);
  return mean_drift(model, x.coeffs, inv.samples);
}

AveragedField averaged_jacobian(const ModelSpec& model, const Field& x, const InvariantSample& inv,
                                const Field& chi) {
  require_basis(x, model.slow(), "averaged_jacobian(x)");
  require_basis(chi, model.slow(), "averaged_jacobian(chi)");
  check_frozen(inv, x);
  const int n = model.modes();
  AveragedField out{Field::zero(model.slow()), Eigen::VectorXd::Zero(n)};
  if (model.f().dx_independent_of_y()) {
    out.value.coeffs = model.dxf_matrix(x.coeffs, Eigen::VectorXd::Zero(model.fast().size())) * chi.coeffs;
    return out;
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < inv.count(); ++i) {
    const Eigen::VectorXd v = model.dxf_matrix(x.coeffs, inv.samples.row(i).transpose()) * chi.coeffs;
    sum += v;
    sq += v.cwiseProduct(v);
  }
  const double m = inv.count();
  out.value.coeffs = sum / m;
  if (m > 1) {
    out.se = (((sq.array() - m * out.value.coeffs.array().square()) / (m - 1.0)).max(0.0) / m).sqrt().matrix();
  }
  return out;
}

Eigen::MatrixXd averaged_jacobian_matrix(const ModelSpec& model, const Field& x,
                                         const InvariantSample* inv) {
  require_basis(x, model.slow(), "averaged_jacobian_matrix(x)");
  const Eigen::VectorXd y0 = Eigen::VectorXd::Zero(model.fast().size());
  if (model.f().dx_independent_of_y()) return model.dxf_matrix(x.coeffs, y0);
  if (inv == nullptr || inv->count() == 0) {
    throw std::invalid_argument("averaged_jacobian_matrix: invariant sample required");
  }
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(model.modes(), model.modes());
  for (int i = 0; i < inv->count(); ++i) sum += model.dxf_matrix(x.coeffs, inv->samples.row(i).transpose());
  return sum / static_cast<double>(inv->count());
}

PathBundle solve_averaged(const ModelSpec& model, const Field& x0, double T, double dt,
                          const InvariantPolicy& policy, std::uint64_t seed, InvariantCache* cache) {
  require_basis(x0, model.slow(), "solve_averaged(x0)");
  PathBundle out;
  out.times = uniform_grid(T, dt);
  out.dt = dt;
  out.seed = seed;
  out.noise_off = true;
  const auto steps = out.steps();
  const int n = model.modes();

  const bool needs_mu = !drift_closed_form(model);
  std::unique_ptr<InvariantCache> local;
  if (needs_mu && cache == nullptr) {
    local = std::make_unique<InvariantCache>(model, policy, seed);
    cache = local.get();
  }

  const ExponentialFactors fac(model.slow().eigenvalues(), dt);
  TimeSeries X(steps + 1, n);
  Field x = x0;
  X.row(0) = x.coeffs.transpose();
  std::shared_ptr<const InvariantSample> mu;
  double next_refresh = 0.0;
  const TimeSeries empty;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = out.times[k];
    if (needs_mu && (mu == nullptr || policy.refresh <= 0.0 || t >= next_refresh - 1e-12)) {
      mu = cache->get(x);
      while (next_refresh <= t + 1e-12) next_refresh += std::max(policy.refresh, dt);
    }
    const Eigen::VectorXd F = mean_drift(model, x.coeffs, needs_mu ? mu->samples : empty).value.coeffs;
    x.coeffs = (fac.decay * x.coeffs.array() + fac.drift * (dt * F.array())).matrix();
    X.row(k + 1) = x.coeffs.transpose();
  }
  out.X = std::move(X);
  return out;
}

}  // namespace mdspde
