#pragma once

#include <mdspde/averaging.hpp>
#include <mdspde/dynamics.hpp>
#include <mdspde/kolmogorov.hpp>
#include <mdspde/model.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdspde::cli {

/// Malformed configuration or command line; maps to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fully validated contents of one configuration file.
struct RunConfig {
  // [model]
  DomainSpec domain{3.14159265358979323846, Boundary::Dirichlet, Boundary::Dirichlet, 1.0, 1.0, 0.0};
  int modes = 16;
  int quad_points = 0;
  ReactionSpec f;
  ReactionSpec g;
  DiffusionSpec sigma = DiffusionSpec::constant(1.0);

  // [regime]
  double epsilon = 0.05;
  Regime regime = Regime::R1;
  double gamma = 0.0;
  RegimeOverrides overrides;
  /// Alternative overrides as powers of epsilon (delta = eps^p and so on).
  std::optional<double> delta_exponent;
  std::optional<double> h_exponent;
  std::optional<double> Delta_exponent;

  // [run]
  double T = 1.0;
  double dt = 1e-3;
  double rate_dt = 0.0;  ///< 0: use dt
  std::optional<std::uint64_t> seed;
  std::size_t n = 1000;
  int x0_mode = 0;       ///< one based; 0 means zero initial condition
  double x0_amplitude = 0.0;
  InvariantPolicy invariant;
  Psi2Options psi2;
  std::string event = "terminal_mode:1,1";
  std::string method = "plain";
  std::string psi = "linear:mode=1,slope=1";
  int modes_checked = 4;
  bool occupation_export = false;
  unsigned workers = 0;

  // [output]
  std::string directory = "mdspde_out";
  std::set<std::string> formats{"csv", "json"};

  std::string source;  ///< raw file text, hashed into the manifest
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

ModelSpec make_model(const RunConfig& cfg);
RegimeParams make_regime(const RunConfig& cfg);
Field initial_slow(const RunConfig& cfg, const ModelSpec& model);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Entry point of the `mdspde` tool. argv[0] is the program name.
/// Returns 0 on success, 2 when model hypotheses fail, 1 on usage errors.
int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace mdspde::cli
