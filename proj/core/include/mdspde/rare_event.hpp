#pragma once

#include "mdspde/averaging.hpp"
#include "mdspde/dynamics.hpp"
#include "mdspde/mdp_rate.hpp"
#include "mdspde/model.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace mdspde {

/// Symmetric level events of the moderate-deviation process eta.
///
///   terminal_norm(r)     |eta(T)| >= r
///   sup_norm(r)          sup_t |eta(t)| >= r
///   terminal_mode(k, r)  |eta_k(T)| >= r   (k zero based)
struct EventSpec {
  enum class Kind { TerminalNorm, SupNorm, TerminalMode };

  Kind kind = Kind::TerminalNorm;
  int mode = 0;
  double r = 0.0;

  static EventSpec terminal_norm(double r) { return {Kind::TerminalNorm, 0, r}; }
  static EventSpec sup_norm(double r) { return {Kind::SupNorm, 0, r}; }
  static EventSpec terminal_mode(int k, double r) { return {Kind::TerminalMode, k, r}; }
  /// Parses "terminal_norm:R", "sup_norm:R", "terminal_mode:K,R" with K one based.
  static EventSpec parse(const std::string& text);
  [[nodiscard]] std::string to_string() const;

  /// Running statistic whose final value is compared against r.
  [[nodiscard]] double statistic(const Eigen::VectorXd& eta) const;
  [[nodiscard]] bool terminal_only() const { return kind != Kind::SupNorm; }
};

struct Estimate {
  std::string method;
  double p_hat = 0.0;
  double relative_error = 0.0;  ///< sqrt(second_moment / p_hat^2 - 1) / sqrt(n); inf when no hits
  double second_moment = 0.0;
  double se = 0.0;
  double ci_upper = 0.0;        ///< one-sided 95% bound when no hits were observed
  double mean_weight = 1.0;
  std::size_t n_paths = 0;
  std::size_t hits = 0;
  std::size_t cap_hits = 0;     ///< paths whose control energy reached the cap
  std::uint64_t seed = 0;
};

struct EstimateOptions {
  unsigned workers = 0;
  /// Use the equal mixture of +v and -v (appropriate for symmetric events).
  bool symmetric_mixture = true;
  InvariantPolicy invariant;
  QPolicy q;
  std::optional<Field> x0;  ///< default: zero field
  std::optional<Field> y0;
};

Estimate estimate_plain(const ModelSpec& model, const RegimeParams& regime, const EventSpec& event,
                        std::size_t n, double T, double dt, std::uint64_t seed,
                        const EstimateOptions& options = {});

/// Importance sampling with the feedback controls of `controls`; weights are
/// the exact discrete Girsanov densities of the drawn increments.
Estimate estimate_importance(const ModelSpec& model, const RegimeParams& regime,
                             const EventSpec& event, const ControlSpec& controls, std::size_t n,
                             double T, double dt, std::uint64_t seed,
                             const EstimateOptions& options = {});

/// Importance sampling with the optimal controls of `psi_target`.
Estimate estimate_importance(const ModelSpec& model, const RegimeParams& regime,
                             const EventSpec& event, const SmoothPath& psi_target, std::size_t n,
                             double T, double dt, std::uint64_t seed,
                             const EstimateOptions& options = {});

struct AsymptoteConfig {
  double T = 1.0;
  double dt = 1e-3;
  double c_hi_factor = 4.0;  ///< search bracket [r, c_hi_factor * r]
  double tol = 1e-10;
  QPolicy q;
  std::uint64_t seed = 0;
};

struct AsymptoteResult {
  double S = 0.0;
  double c = 0.0;
  int mode = 0;
  SmoothPath psi;
};

/// inf of S over psi_c(t) = c (t / T) e_k, c >= r, by golden-section search.
AsymptoteResult mdp_asymptote(const ModelSpec& model, const RegimeParams& regime,
                              const EventSpec& event, const AsymptoteConfig& config = {});

}  // namespace mdspde
