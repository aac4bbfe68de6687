#pragma once

#include "mdspde/dynamics.hpp"
#include "mdspde/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

namespace mdspde {

/// Thinned draws from the invariant law of the frozen fast process.
struct InvariantSample {
  Field frozen_x;
  TimeSeries samples;  ///< one fast coefficient vector per row
  double burn_in = 0.0;
  double thinning = 0.0;
  double dt = 0.0;
  double quantum = 0.0;  ///< 0 when frozen_x is the caller's x verbatim
  std::uint64_t seed = 0;

  [[nodiscard]] int count() const { return static_cast<int>(samples.rows()); }
  [[nodiscard]] Field sample(int i, const SpectralBasis& fast) const;
};

/// How invariant samples are produced and reused.
///
/// Non-positive burn_in / thinning select 10/ell and 1/ell. Samples are split
/// across `chains` independent chains, each with its own burn-in.
struct InvariantPolicy {
  int count = 500;
  double burn_in = 0.0;
  double thinning = 0.0;
  double dt = 0.01;
  int chains = 4;
  double refresh = 0.1;  ///< re-sampling cadence along averaged trajectories
  bool cache = true;
  double quantum = 1e-3;
  unsigned workers = 0;
};

/// Throws HypothesisError unless L_g < lambda.
void require_dissipative(const ModelSpec& model, const char* who);

InvariantSample sample_invariant(const ModelSpec& model, const Field& x, int count, double burn_in,
                                 double thinning, double dt, std::uint64_t seed,
                                 int chains = 1, unsigned workers = 0);

InvariantSample sample_invariant(const ModelSpec& model, const Field& x,
                                 const InvariantPolicy& policy, std::uint64_t seed);

/// Samples keyed by x rounded to the policy quantum.
///
/// The frozen point and the chain seed are functions of the rounded key, so a
/// lookup returns the same draws whether it hits or misses. Concurrent
/// readers share the map; insertion is exclusive.
class InvariantCache {
 public:
  InvariantCache(const ModelSpec& model, InvariantPolicy policy, std::uint64_t seed);

  std::shared_ptr<const InvariantSample> get(const Field& x);

  [[nodiscard]] const InvariantPolicy& policy() const { return policy_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::size_t hits() const;
  [[nodiscard]] std::size_t misses() const;

 private:
  using Key = std::vector<long long>;

  const ModelSpec* model_;
  InvariantPolicy policy_;
  std::uint64_t seed_;
  mutable std::shared_mutex mutex_;
  std::map<Key, std::shared_ptr<const InvariantSample>> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Sample mean with per-coefficient standard error (samples treated as
/// independent after thinning).
struct AveragedField {
  Field value;
  Eigen::VectorXd se;
};

/// Exact with zero SE when f ignores y, or when f = linear_y and g = 0 (the
/// invariant law is then centred Gaussian and Fbar(x) = F(x, 0)).
AveragedField averaged_drift(const ModelSpec& model, const Field& x, const InvariantSample& inv);

AveragedField averaged_jacobian(const ModelSpec& model, const Field& x, const InvariantSample& inv,
                                const Field& chi);

/// Galerkin matrix of the averaged D_xF(x, .) on the slow basis.
Eigen::MatrixXd averaged_jacobian_matrix(const ModelSpec& model, const Field& x,
                                         const InvariantSample* inv);

/// Exponential-Euler solution of the averaged equation. The invariant law is
/// re-sampled every `policy.refresh` time units at the current state.
PathBundle solve_averaged(const ModelSpec& model, const Field& x0, double T, double dt,
                          const InvariantPolicy& policy, std::uint64_t seed,
                          InvariantCache* cache = nullptr);

}  // namespace mdspde
