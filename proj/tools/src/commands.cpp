#include "mdspde_cli/cli.hpp"

#include <mdspde/io.hpp>
#include <mdspde/mdp_rate.hpp>
#include <mdspde/occupation.hpp>
#include <mdspde/rare_event.hpp>
#include <mdspde/version.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <regex>
#include <sstream>

namespace mdspde::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Non-finite values become null so that reports stay valid JSON.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string regime;
  std::optional<double> gamma;
  std::optional<double> epsilon;
  std::optional<unsigned> workers;
  std::string psi;
  std::string event;
  std::string method;
  std::optional<std::size_t> n;
};

/// Output directory plus the list of files written, for the manifest.
class Output {
 public:
  Output(fs::path dir, std::set<std::string> formats) : dir_(std::move(dir)), formats_(std::move(formats)) {
    fs::create_directories(dir_);
  }

  [[nodiscard]] bool wants(const std::string& format) const { return formats_.count(format) > 0; }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(dir_ / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + (dir_ / name).string() + "'");
    body(os);
    files_.push_back(name);
  }

  void write_json(const std::string& name, const json& j) {
    write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

  [[nodiscard]] const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::set<std::string> formats_;
  std::vector<std::string> files_;
};

std::uint64_t resolve_seed(const Flags& flags, const RunConfig& cfg) {
  if (flags.seed) return *flags.seed;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("MDSPDE_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("MDSPDE_SEED must be a non-negative integer");
  }
  return 0;
}

// "linear:mode=K,slope=S" on the rate grid.
SmoothPath parse_psi(const std::string& text, const ModelSpec& model, double T, double dt) {
  static const std::regex re(R"(^\s*linear\s*:\s*mode\s*=\s*(\d+)\s*,\s*slope\s*=\s*([-+0-9.eE]+)\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) {
    throw UsageError("--psi expects linear:mode=K,slope=S, got '" + text + "'");
  }
  const int mode = std::stoi(m[1]);
  if (mode < 1 || mode > model.modes()) throw UsageError("--psi mode out of range");
  double slope = 0.0;
  try {
    std::size_t used = 0;
    slope = std::stod(m[2], &used);
    if (used != static_cast<std::size_t>(m[2].length())) throw std::invalid_argument("slope");
  } catch (const std::exception&) {
    throw UsageError("--psi: bad slope");
  }
  return SmoothPath::linear(model.slow(), T, dt, mode - 1, slope);
}

json report_json(const HypothesisReport& r) {
  return json{{"lambda", r.lambda},
              {"L_g", r.L_g},
              {"ell", r.ell},
              {"omega", r.omega},
              {"sigma_lower", r.sigma_lower},
              {"sigma_upper", r.sigma_upper},
              {"L_sigma", r.L_sigma},
              {"dissipative", r.dissipative},
              {"strongly_dissipative", r.strongly_dissipative},
              {"sigma_bounded", r.sigma_bounded},
              {"f_bounded", r.f_bounded},
              {"g_bounded", r.g_bounded},
              {"pass", r.pass()}};
}

json regime_json(const RegimeParams& p) {
  return json{{"regime", std::string(to_string(p.regime))},
              {"epsilon", p.epsilon},
              {"gamma", p.gamma},
              {"delta", p.delta},
              {"h", p.h},
              {"Delta", p.Delta_occ},
              {"c", p.c_eps}};
}

QPolicy q_policy(const RunConfig& cfg) {
  QPolicy q;
  q.invariant = cfg.invariant;
  q.refresh = cfg.invariant.refresh;
  q.psi2 = cfg.psi2;
  return q;
}

struct Context {
  RunConfig cfg;
  ModelSpec model;
  RegimeParams regime;
  std::uint64_t seed;
  Output& out;
  std::ostream& console;
  std::string tag;  ///< "_seed<S>_n<N>" suffix of randomized outputs

  [[nodiscard]] double rate_dt() const { return cfg.rate_dt > 0.0 ? cfg.rate_dt : cfg.dt; }
};

void cmd_validate(Context& c) {
  const auto report = validate_hypotheses(c.model);
  json j = report_json(report);
  j["regime"] = regime_json(c.regime);
  c.out.write_json("hypotheses.json", j);
  c.console << j.dump(2) << '\n';
  if (!report.pass()) throw HypothesisError("model hypotheses fail");
}

void cmd_simulate(Context& c) {
  const Field x0 = initial_slow(c.cfg, c.model);
  const Field y0 = Field::zero(c.model.fast());
  SimulationOptions opts;
  PathBundle b = simulate_slow_fast(c.model, c.regime, ControlSpec::zero(), x0, y0, c.cfg.T, c.cfg.dt, c.seed, opts);
  const PathBundle xbar = solve_averaged(c.model, x0, c.cfg.T, c.cfg.dt, c.cfg.invariant, c.seed);
  b.eta = compute_eta(b, xbar, c.regime).eta;
  const std::string stem = "paths_seed" + std::to_string(c.seed) + "_n1";
  if (c.out.wants("csv")) c.out.write(stem + ".csv", [&](std::ostream& os) { io::write_paths_csv(os, b); });
  if (c.out.wants("binary")) c.out.write(stem + ".bin", [&](std::ostream& os) { io::write_paths_binary(os, b); });
  const double sup = (*b.X - *xbar.X).rowwise().norm().maxCoeff();
  json j{{"steps", b.steps()}, {"dt", b.dt}, {"sup_distance_to_average", sup}, {"seed", c.seed}};
  if (c.out.wants("json")) c.out.write_json("simulate" + c.tag + ".json", j);
  c.console << j.dump(2) << '\n';
}

void cmd_average(Context& c) {
  const Field x0 = initial_slow(c.cfg, c.model);
  const PathBundle xbar = solve_averaged(c.model, x0, c.cfg.T, c.cfg.dt, c.cfg.invariant, c.seed);
  c.out.write("xbar_seed" + std::to_string(c.seed) + ".csv", [&](std::ostream& os) { io::write_paths_csv(os, xbar); });
  json j{{"steps", xbar.steps()}, {"final_norm", xbar.X->row(xbar.X->rows() - 1).norm()}};
  c.console << j.dump(2) << '\n';
}

void cmd_invariant(Context& c) {
  const Field x0 = initial_slow(c.cfg, c.model);
  const InvariantSample s = sample_invariant(c.model, x0, c.cfg.invariant, c.seed);
  c.out.write("invariant_seed" + std::to_string(c.seed) + "_n" + std::to_string(s.count()) + ".csv",
              [&](std::ostream& os) { io::write_invariant_csv(os, s); });
  json modes = json::array();
  for (int k = 0; k < s.samples.cols(); ++k) {
    const Eigen::VectorXd col = s.samples.col(k);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / std::max(1.0, static_cast<double>(col.size() - 1));
    modes.push_back(json{{"mode", k + 1}, {"mean", mean}, {"variance", var}});
  }
  json j{{"count", s.count()}, {"burn_in", s.burn_in}, {"thinning", s.thinning}, {"modes", modes}};
  if (c.out.wants("json")) {
    c.out.write_json("invariant_seed" + std::to_string(c.seed) + "_n" + std::to_string(s.count()) + ".json", j);
  }
  c.console << j.dump(2) << '\n';
}

void cmd_psi2(Context& c) {
  const Field x0 = initial_slow(c.cfg, c.model);
  Psi2Options opts = c.cfg.psi2;
  opts.m = std::min(opts.m, c.model.modes());
  opts.workers = c.cfg.workers;
  const Psi2Matrix m = psi2_zero_matrix(c.model, x0, Field::zero(c.model.fast()), opts, c.seed);
  const std::string stem = "psi2_seed" + std::to_string(c.seed) + "_n" + std::to_string(opts.mc_paths);
  c.out.write(stem + ".csv", [&](std::ostream& os) { io::write_psi2_csv(os, m); });
  json j{{"m", opts.m},
         {"t_max", m.t_max},
         {"dt", m.dt},
         {"mc_paths", m.mc_paths},
         {"deterministic", m.deterministic},
         {"tail_bound", m.tail_bound},
         {"operator_norm", m.operator_norm()}};
  if (c.out.wants("json")) c.out.write_json(stem + ".json", j);
  c.console << j.dump(2) << '\n';
}

struct RateSetup {
  SmoothPath psi;
  PathBundle xbar;
  std::unique_ptr<OperatorSchedule> ops;
};

RateSetup rate_setup(Context& c) {
  RateSetup s;
  const double dt = c.rate_dt();
  s.psi = parse_psi(c.cfg.psi, c.model, c.cfg.T, dt);
  s.xbar = solve_averaged(c.model, initial_slow(c.cfg, c.model), c.cfg.T, dt, c.cfg.invariant, c.seed);
  s.ops = std::make_unique<OperatorSchedule>(c.model, c.regime, s.xbar, q_policy(c.cfg), c.seed);
  return s;
}

void cmd_rate(Context& c) {
  auto s = rate_setup(c);
  const RateReport r = rate_functional(c.model, s.psi, *s.ops);
  json per_t = json::array();
  for (const auto& p : r.per_t) per_t.push_back(json::array({p.t, p.residual_norm, p.kappa}));
  json j{{"regime", std::string(to_string(r.regime))}, {"S", r.S}, {"per_t", per_t}};
  c.out.write_json("rate.json", j);
  c.console << json{{"regime", j["regime"]}, {"S", r.S}}.dump(2) << '\n';
}

void cmd_controls(Context& c) {
  auto s = rate_setup(c);
  const ControlSpec v = optimal_controls(c.model, s.psi, *s.ops);
  const double S = rate_functional(c.model, s.psi, *s.ops).S;
  const double cost = control_cost(c.model, v, *s.ops);
  const LimitSolution lim = solve_limit_equation(c.model, v, *s.ops, c.cfg.T, c.rate_dt());
  const double round_trip = (lim.psi.values - s.psi.values).rowwise().norm().maxCoeff();
  const Eigen::VectorXd y0 = Eigen::VectorXd::Zero(c.model.modes());
  c.out.write("controls.csv", [&](std::ostream& os) {
    os << "t,mode,u1,u2\n";
    for (double t : s.psi.times) {
      const ControlValue u = v.evaluate(t, y0, c.model.modes(), c.model.modes());
      for (int k = 0; k < c.model.modes(); ++k) {
        os << io::format_double(t) << ',' << k + 1 << ',' << io::format_double(u.u1[k]) << ','
           << io::format_double(u.u2[k]) << '\n';
      }
    }
  });
  json j{{"regime", std::string(to_string(c.regime.regime))},
         {"S", S},
         {"control_cost", cost},
         {"limit_round_trip_error", round_trip},
         {"limit_mild_residual", lim.mild_residual},
         {"y_independent", v.y_independent}};
  c.out.write_json("controls.json", j);
  c.console << j.dump(2) << '\n';
}

void cmd_occupation(Context& c) {
  auto s = rate_setup(c);
  const ControlSpec v = optimal_controls(c.model, s.psi, *s.ops);
  const Field x0 = initial_slow(c.cfg, c.model);
  const PathBundle b = simulate_slow_fast(c.model, c.regime, v, x0, Field::zero(c.model.fast()), c.cfg.T, c.cfg.dt, c.seed);
  const PathBundle xbar = solve_averaged(c.model, x0, c.cfg.T, c.cfg.dt, c.cfg.invariant, c.seed);
  const OccupationMeasure occ = build_occupation(b, c.regime);
  DecouplingOptions opts;
  opts.reference.dt = c.cfg.invariant.dt;
  const DecouplingReport rep = decoupling_test(occ, c.model, xbar, c.regime, c.cfg.modes_checked, c.seed, opts);
  if (c.cfg.occupation_export) {
    c.out.write("occupation" + c.tag + ".csv",
                [&](std::ostream& os) { io::write_occupation_csv(os, occ, c.cfg.modes_checked); });
  }
  json cells = json::array();
  for (const auto& cell : rep.cells) {
    cells.push_back(json{{"mode", cell.mode + 1},
                         {"window", cell.window + 1},
                         {"t_lo", cell.t_lo},
                         {"t_hi", cell.t_hi},
                         {"occ_mean", cell.occ_mean},
                         {"occ_var", cell.occ_var},
                         {"ref_mean", cell.ref_mean},
                         {"ref_var", cell.ref_var},
                         {"z_mean", cell.z_mean},
                         {"z_var", cell.z_var},
                         {"ess", cell.ess},
                         {"low_ess", cell.low_ess},
                         {"pass", cell.pass}});
  }
  json j{{"T", occ.T},
         {"Delta", occ.Delta},
         {"Delta_eff", occ.Delta_eff},
         {"total_weight", occ.total_weight()},
         {"cells_stored", occ.cells.size()},
         {"diagnostic", rep.diagnostic},
         {"pass_fraction", rep.pass_fraction()},
         {"tests", cells}};
  c.out.write_json("decoupling" + c.tag + ".json", j);
  c.console << json{{"pass_fraction", rep.pass_fraction()}, {"diagnostic", rep.diagnostic}}.dump(2) << '\n';
}

void cmd_estimate(Context& c, const Flags& flags) {
  const EventSpec event = EventSpec::parse(flags.event.empty() ? c.cfg.event : flags.event);
  const std::string method = flags.method.empty() ? c.cfg.method : flags.method;
  if (method != "plain" && method != "is") throw UsageError("--method must be plain or is");
  EstimateOptions opts;
  opts.workers = c.cfg.workers;
  opts.invariant = c.cfg.invariant;
  opts.q = q_policy(c.cfg);
  opts.x0 = initial_slow(c.cfg, c.model);
  const std::size_t n = flags.n ? *flags.n : c.cfg.n;
  Estimate est;
  if (method == "plain") {
    est = estimate_plain(c.model, c.regime, event, n, c.cfg.T, c.cfg.dt, c.seed, opts);
  } else {
    SmoothPath psi;
    if (!flags.psi.empty()) {
      psi = parse_psi(flags.psi, c.model, c.cfg.T, c.rate_dt());
    } else {
      // Default target: the straight path reaching the event level at T.
      const int mode = event.kind == EventSpec::Kind::TerminalMode ? event.mode : 0;
      psi = SmoothPath::linear(c.model.slow(), c.cfg.T, c.rate_dt(), mode, event.r / c.cfg.T);
    }
    est = estimate_importance(c.model, c.regime, event, psi, n, c.cfg.T, c.cfg.dt, c.seed, opts);
  }
  const double h2 = c.regime.h * c.regime.h;
  json j{{"p_hat", est.p_hat},
         {"rel_err", number(est.relative_error)},
         {"se", est.se},
         {"ci_upper", est.ci_upper},
         {"n", est.n_paths},
         {"hits", est.hits},
         {"method", est.method},
         {"event", event.to_string()},
         {"seed", est.seed},
         {"mean_weight", est.mean_weight},
         {"cap_hits", est.cap_hits},
         {"exponent_diag", number(est.p_hat > 0.0 ? -std::log(est.p_hat) / h2 : INFINITY)}};
  c.out.write_json("estimate_" + method + "_seed" + std::to_string(c.seed) + "_n" + std::to_string(n) + ".json", j);
  c.console << j.dump(2) << '\n';
}

void cmd_asymptote(Context& c, const Flags& flags) {
  const EventSpec event = EventSpec::parse(flags.event.empty() ? c.cfg.event : flags.event);
  AsymptoteConfig ac;
  ac.T = c.cfg.T;
  ac.dt = c.rate_dt();
  ac.q = q_policy(c.cfg);
  ac.seed = c.seed;
  const AsymptoteResult r = mdp_asymptote(c.model, c.regime, event, ac);
  json j{{"event", event.to_string()},
         {"regime", std::string(to_string(c.regime.regime))},
         {"inf_S", r.S},
         {"c", r.c},
         {"mode", r.mode + 1},
         {"h_squared", c.regime.h * c.regime.h},
         {"log_probability_estimate", -c.regime.h * c.regime.h * r.S}};
  c.out.write_json("asymptote.json", j);
  c.console << j.dump(2) << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral slow-fast SPDE toolkit: averaging, moderate-deviation rates, rare events", "mdspde"};
  app.set_version_flag("--version", std::string(kVersion));
  Flags flags;
  app.add_option("--config", flags.config, "Configuration file (INI)")->required();
  app.add_option("--out", flags.out, "Output directory (overrides [output] directory)");
  app.add_option("--seed", flags.seed, "Master seed (overrides config and MDSPDE_SEED)");
  app.add_option("--regime", flags.regime, "R1 or R2");
  app.add_option("--gamma", flags.gamma, "Regime-2 constant");
  app.add_option("--epsilon", flags.epsilon, "Scale parameter");
  app.add_option("--workers", flags.workers, "Worker threads (default: logical cores)");
  app.add_option("--psi", flags.psi, "Target path, linear:mode=K,slope=S");
  app.add_option("--event", flags.event, "terminal_norm:R | sup_norm:R | terminal_mode:K,R");
  app.add_option("--method", flags.method, "plain or is");
  app.add_option("--n", flags.n, "Number of Monte Carlo paths");
  const std::vector<std::pair<std::string, std::string>> commands{
      {"validate", "Check the structural hypotheses of the model"},
      {"simulate", "Simulate one slow-fast trajectory"},
      {"average", "Solve the averaged equation"},
      {"invariant", "Sample the frozen fast invariant law"},
      {"psi2", "Compute the Psi2 matrix"},
      {"rate", "Evaluate the rate functional of --psi"},
      {"controls", "Optimal controls, their cost and the limit-equation round trip"},
      {"occupation", "Occupation measure and decoupling tests"},
      {"estimate", "Plain or importance-sampling tail probability"},
      {"asymptote", "Rate-function asymptote of an event"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
  app.require_subcommand(1);

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg = load_config(flags.config);
    if (!flags.regime.empty()) cfg.regime = parse_regime(flags.regime);
    if (flags.gamma) cfg.gamma = *flags.gamma;
    if (flags.epsilon) cfg.epsilon = *flags.epsilon;
    if (flags.workers) cfg.workers = *flags.workers;
    cfg.invariant.workers = cfg.workers;
    cfg.psi2.workers = cfg.workers;
    const std::uint64_t seed = resolve_seed(flags, cfg);
    const fs::path dir = flags.out.empty() ? fs::path(cfg.directory) : fs::path(flags.out);

    ModelSpec model = make_model(cfg);
    RegimeParams regime = make_regime(cfg);
    Output output(dir, cfg.formats);
    const std::size_t n = flags.n ? *flags.n : cfg.n;
    Context ctx{cfg, std::move(model), regime, seed, output, out,
                "_seed" + std::to_string(seed) + "_n" + std::to_string(n)};

    int code = 0;
    try {
      if (command == "validate") cmd_validate(ctx);
      else if (command == "simulate") cmd_simulate(ctx);
      else if (command == "average") cmd_average(ctx);
      else if (command == "invariant") cmd_invariant(ctx);
      else if (command == "psi2") cmd_psi2(ctx);
      else if (command == "rate") cmd_rate(ctx);
      else if (command == "controls") cmd_controls(ctx);
      else if (command == "occupation") cmd_occupation(ctx);
      else if (command == "estimate") cmd_estimate(ctx, flags);
      else if (command == "asymptote") cmd_asymptote(ctx, flags);
    } catch (const HypothesisError& e) {
      err << "hypothesis failure: " << e.what() << '\n';
      code = 2;
    }

    output.write("config.ini", [&](std::ostream& os) { os << cfg.source; });
    std::ostringstream cfg_hash;
    cfg_hash << std::hex << fnv1a(cfg.source);
    json manifest{{"tool", "mdspde"},
                  {"version", std::string(kVersion)},
                  {"command", command},
                  {"argv", std::vector<std::string>(argv.begin() + (argv.empty() ? 0 : 1), argv.end())},
                  {"config_hash", cfg_hash.str()},
                  {"seed", seed},
                  {"exit_code", code},
                  {"files", output.files()}};
    output.write_json("manifest.json", manifest);
    return code;
  } catch (const HypothesisError& e) {
    err << "hypothesis failure: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mdspde::cli
