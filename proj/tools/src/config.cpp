#include "mdspde_cli/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace mdspde::cli {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"model",
       {"length", "bc_slow", "bc_fast", "diffusivity_slow", "diffusivity_fast", "fast_mass", "modes",
        "quad_points", "f", "g", "sigma"}},
      {"regime",
       {"epsilon", "regime", "gamma", "delta", "h", "Delta", "c", "delta_exponent", "h_exponent",
        "Delta_exponent"}},
      {"run",
       {"T", "dt", "rate_dt", "seed", "n", "x0_mode", "x0_amplitude", "invariant_count",
        "invariant_burn_in", "invariant_thinning", "invariant_dt", "invariant_chains", "refresh",
        "cache", "psi2_m", "psi2_paths", "psi2_t_max", "psi2_dt", "event", "method", "psi",
        "modes_checked", "occupation_export", "workers"}},
      {"output", {"directory", "formats"}},
  };
  return keys;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config: '" + key + "' expects a finite number, got '" + v + "'");
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw UsageError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw UsageError("config: '" + key + "' expects true or false, got '" + v + "'");
}

template <class Fn>
auto wrap(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("config: invalid value for '" + key + "': " + e.what());
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }

  RunConfig cfg;
  cfg.source = text;
  const auto& allowed = allowed_keys();
  for (const auto& [section, body] : tree) {
    const auto it = allowed.find(section);
    if (it == allowed.end()) throw UsageError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) {
      throw UsageError("config: key '" + section + "' outside of any section");
    }
    for (const auto& [key, node] : body) {
      if (!it->second.count(key)) throw UsageError("config: unknown key '" + key + "' in [" + section + "]");
      const std::string v = node.get_value<std::string>();
      const std::string full = section + "." + key;
      if (section == "model") {
        if (key == "length") cfg.domain.length = to_double(full, v);
        else if (key == "bc_slow") cfg.domain.bc_slow = wrap(full, [&] { return parse_boundary(v); });
        else if (key == "bc_fast") cfg.domain.bc_fast = wrap(full, [&] { return parse_boundary(v); });
        else if (key == "diffusivity_slow") cfg.domain.diffusivity_slow = to_double(full, v);
        else if (key == "diffusivity_fast") cfg.domain.diffusivity_fast = to_double(full, v);
        else if (key == "fast_mass") cfg.domain.fast_mass = to_double(full, v);
        else if (key == "modes") cfg.modes = static_cast<int>(to_integer(full, v));
        else if (key == "quad_points") cfg.quad_points = static_cast<int>(to_integer(full, v));
        else if (key == "f") cfg.f = wrap(full, [&] { return ReactionSpec::parse(v); });
        else if (key == "g") cfg.g = wrap(full, [&] { return ReactionSpec::parse(v); });
        else if (key == "sigma") cfg.sigma = wrap(full, [&] { return DiffusionSpec::parse(v); });
      } else if (section == "regime") {
        if (key == "epsilon") cfg.epsilon = to_double(full, v);
        else if (key == "regime") cfg.regime = wrap(full, [&] { return parse_regime(v); });
        else if (key == "gamma") cfg.gamma = to_double(full, v);
        else if (key == "delta") cfg.overrides.delta = to_double(full, v);
        else if (key == "h") cfg.overrides.h = to_double(full, v);
        else if (key == "Delta") cfg.overrides.Delta = to_double(full, v);
        else if (key == "c") cfg.overrides.c = to_double(full, v);
        else if (key == "delta_exponent") cfg.delta_exponent = to_double(full, v);
        else if (key == "h_exponent") cfg.h_exponent = to_double(full, v);
        else if (key == "Delta_exponent") cfg.Delta_exponent = to_double(full, v);
      } else if (section == "run") {
        if (key == "T") cfg.T = to_double(full, v);
        else if (key == "dt") cfg.dt = to_double(full, v);
        else if (key == "rate_dt") cfg.rate_dt = to_double(full, v);
        else if (key == "seed") {
          const long long s = to_integer(full, v);
          if (s < 0) throw UsageError("config: run.seed must be non-negative");
          cfg.seed = static_cast<std::uint64_t>(s);
        } else if (key == "n") {
          const long long n = to_integer(full, v);
          if (n < 1) throw UsageError("config: run.n must be positive");
          cfg.n = static_cast<std::size_t>(n);
        } else if (key == "x0_mode") cfg.x0_mode = static_cast<int>(to_integer(full, v));
        else if (key == "x0_amplitude") cfg.x0_amplitude = to_double(full, v);
        else if (key == "invariant_count") cfg.invariant.count = static_cast<int>(to_integer(full, v));
        else if (key == "invariant_burn_in") cfg.invariant.burn_in = to_double(full, v);
        else if (key == "invariant_thinning") cfg.invariant.thinning = to_double(full, v);
        else if (key == "invariant_dt") cfg.invariant.dt = to_double(full, v);
        else if (key == "invariant_chains") cfg.invariant.chains = static_cast<int>(to_integer(full, v));
        else if (key == "refresh") cfg.invariant.refresh = to_double(full, v);
        else if (key == "cache") cfg.invariant.cache = to_bool(full, v);
        else if (key == "psi2_m") cfg.psi2.m = static_cast<int>(to_integer(full, v));
        else if (key == "psi2_paths") cfg.psi2.mc_paths = static_cast<int>(to_integer(full, v));
        else if (key == "psi2_t_max") cfg.psi2.t_max = to_double(full, v);
        else if (key == "psi2_dt") cfg.psi2.dt = to_double(full, v);
        else if (key == "event") cfg.event = v;
        else if (key == "method") cfg.method = v;
        else if (key == "psi") cfg.psi = v;
        else if (key == "modes_checked") cfg.modes_checked = static_cast<int>(to_integer(full, v));
        else if (key == "occupation_export") cfg.occupation_export = to_bool(full, v);
        else if (key == "workers") cfg.workers = static_cast<unsigned>(to_integer(full, v));
      } else if (section == "output") {
        if (key == "directory") cfg.directory = v;
        else if (key == "formats") {
          cfg.formats.clear();
          std::stringstream ss(v);
          std::string tok;
          while (std::getline(ss, tok, ',')) {
            tok.erase(0, tok.find_first_not_of(' '));
            tok.erase(tok.find_last_not_of(' ') + 1);
            if (tok != "csv" && tok != "json" && tok != "binary") {
              throw UsageError("config: unknown output format '" + tok + "'");
            }
            cfg.formats.insert(tok);
          }
        }
      }
    }
  }

  // Validate everything that does not need a model instance.
  if (cfg.modes < 1) throw UsageError("config: model.modes must be >= 1");
  if (!(cfg.domain.length > 0.0)) throw UsageError("config: model.length must be positive");
  if (!(cfg.epsilon > 0.0)) throw UsageError("config: regime.epsilon must be positive");
  if (!(cfg.T > 0.0) || !(cfg.dt > 0.0)) throw UsageError("config: run.T and run.dt must be positive");
  if (cfg.x0_mode < 0 || cfg.x0_mode > cfg.modes) throw UsageError("config: run.x0_mode out of range");
  if (cfg.modes_checked < 1 || cfg.modes_checked > cfg.modes) {
    throw UsageError("config: run.modes_checked out of range");
  }
  if (cfg.method != "plain" && cfg.method != "is") throw UsageError("config: run.method must be plain or is");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ModelSpec make_model(const RunConfig& cfg) {
  return wrap("model", [&] { return ModelSpec(cfg.domain, cfg.modes, cfg.f, cfg.g, cfg.sigma, cfg.quad_points); });
}

RegimeParams make_regime(const RunConfig& cfg) {
  RegimeOverrides o = cfg.overrides;
  if (cfg.delta_exponent) o.delta = std::pow(cfg.epsilon, *cfg.delta_exponent);
  if (cfg.h_exponent) o.h = std::pow(cfg.epsilon, *cfg.h_exponent);
  if (cfg.Delta_exponent) o.Delta = std::pow(cfg.epsilon, *cfg.Delta_exponent);
  return wrap("regime", [&] { return RegimeParams::make(cfg.epsilon, cfg.regime, cfg.gamma, o); });
}

Field initial_slow(const RunConfig& cfg, const ModelSpec& model) {
  Field x = Field::zero(model.slow());
  if (cfg.x0_mode > 0) x.coeffs[cfg.x0_mode - 1] = cfg.x0_amplitude;
  return x;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mdspde::cli
