#include <catch2/catch_amalgamated.hpp>

#include <mdspde/version.hpp>
#include <mdspde/stats.hpp>
#include <mdspde_cli/cli.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace mdspde;
using Catch::Approx;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Scratch directory removed on scope exit.
struct Scratch {
  fs::path root;
  Scratch() {
    static int counter = 0;
    root = fs::temp_directory_path() /
           ("mdspde_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }

  fs::path config(const std::string& text) const {
    const fs::path p = root / "run.ini";
    std::ofstream(p) << text;
    return p;
  }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::vector<std::string> argv{"mdspde"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_command(argv, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  return json::parse(in);
}

const char* kLin =
    "[model]\nmodes = 4\nf = linear_y(0.3)\ng = zero\nsigma = constant(1)\n"
    "[regime]\nepsilon = 0.01\n"
    "[run]\nT = 1\ndt = 0.001\nseed = 3\n";

const char* kNoise =
    "[model]\nmodes = 4\nf = zero\ng = zero\n"
    "[regime]\nepsilon = 0.05\n"
    "[run]\nT = 1\ndt = 0.001\n";

}  // namespace

TEST_CASE("configuration parsing") {
  const cli::RunConfig c = cli::parse_config(kLin);
  CHECK(c.modes == 4);
  CHECK(c.epsilon == 0.01);
  REQUIRE(c.seed);
  CHECK(*c.seed == 3u);
  CHECK(c.f.to_string() == ReactionSpec::linear_y(0.3).to_string());

  CHECK_THROWS_AS(cli::parse_config("[model]\nmode = 4\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config("[extras]\nx = 1\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config("[run]\nT = soon\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config("[run]\nseed = -1\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config("[run]\nmethod = guess\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config("[output]\nformats = csv,xml\n"), cli::UsageError);
  CHECK_THROWS_AS(cli::parse_config("[model]\nf = cubic(1)\n"), cli::UsageError);

  const cli::RunConfig e = cli::parse_config("[regime]\nepsilon = 0.01\ndelta_exponent = 2\n");
  CHECK(cli::make_regime(e).delta == Approx(1e-4));
  CHECK(cli::fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(cli::fnv1a("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("exit codes") {
  Scratch s;
  const std::string out = (s.root / "out").string();
  const std::string cfg = s.config(kLin).string();

  const Result ok = run({"--config", cfg, "--out", out, "validate"});
  CHECK(ok.code == 0);
  CHECK(fs::exists(s.root / "out" / "hypotheses.json"));
  CHECK(read_json(s.root / "out" / "hypotheses.json").contains("regime"));

  CHECK(run({"--config", cfg, "--out", out}).code == 1);
  CHECK(run({"--out", out, "validate"}).code == 1);
  CHECK(run({"--config", cfg, "--out", out, "teleport"}).code == 1);
  CHECK(run({"--config", (s.root / "missing.ini").string(), "--out", out, "validate"}).code == 1);
  CHECK(run({"--config", cfg, "--out", out, "--regime", "R2", "rate"}).code == 1);  // gamma missing
  CHECK(run({"--config", cfg, "--out", out, "--event", "terminal_mode:9,1", "estimate"}).code == 1);

  const Result v = run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find(std::string(kVersion)) != std::string::npos);

  Scratch t;
  const std::string bad = t.config("[model]\nmodes = 4\nf = linear_y(0.3)\ng = tanh_y_damped(1.5)\n").string();
  const Result h = run({"--config", bad, "--out", (t.root / "out").string(), "validate"});
  CHECK(h.code == 2);
  CHECK(h.err.find("hypothesis") != std::string::npos);
  CHECK(read_json(t.root / "out" / "manifest.json")["exit_code"] == 2);
}

TEST_CASE("rate and manifest") {
  Scratch s;
  const fs::path out = s.root / "out";
  const std::string cfg = s.config(kLin).string();
  REQUIRE(run({"--config", cfg, "--out", out.string(), "--psi", "linear:mode=1,slope=1", "rate"}).code == 0);
  const json rate = read_json(out / "rate.json");
  CHECK(rate["regime"] == "R1");
  CHECK(rate["S"].get<double>() == Approx(7.0 / 6.0).margin(1e-6));
  CHECK(rate["per_t"].size() > 2);

  const json m = read_json(out / "manifest.json");
  CHECK(m["tool"] == "mdspde");
  CHECK(m["version"] == std::string(kVersion));
  CHECK(m["command"] == "rate");
  CHECK(m["seed"] == 3);
  CHECK(m["exit_code"] == 0);
  std::ifstream in(cfg);
  std::stringstream text;
  text << in.rdbuf();
  std::ostringstream hash;
  hash << std::hex << cli::fnv1a(text.str());
  CHECK(m["config_hash"] == hash.str());
  const auto files = m["files"].get<std::vector<std::string>>();
  CHECK(std::find(files.begin(), files.end(), "rate.json") != files.end());
  CHECK(fs::exists(out / "config.ini"));

  // Command-line seed beats the config seed.
  REQUIRE(run({"--config", cfg, "--out", out.string(), "--seed", "11", "rate"}).code == 0);
  CHECK(read_json(out / "manifest.json")["seed"] == 11);
}

TEST_CASE("seed from the environment") {
  Scratch s;
  const fs::path out = s.root / "out";
  const std::string cfg = s.config(kNoise).string();
  ::setenv("MDSPDE_SEED", "77", 1);
  const int code = run({"--config", cfg, "--out", out.string(), "validate"}).code;
  ::setenv("MDSPDE_SEED", "seventy", 1);
  const int bad = run({"--config", cfg, "--out", out.string(), "validate"}).code;
  ::unsetenv("MDSPDE_SEED");
  CHECK(code == 0);
  CHECK(bad == 1);
  REQUIRE(run({"--config", cfg, "--out", out.string(), "validate"}).code == 0);
  CHECK(read_json(out / "manifest.json")["seed"] == 0);
}

TEST_CASE("estimate against the Gaussian law") {
  Scratch s;
  const fs::path out = s.root / "out";
  const std::string cfg = s.config(kNoise).string();
  const double var = std::sqrt(0.05) * (1.0 - std::exp(-2.0)) / 2.0;
  const double p = 2.0 * (1.0 - stats::normal_cdf(0.6 / std::sqrt(var)));
  for (const std::string method : {"plain", "is"}) {
    REQUIRE(run({"--config", cfg, "--out", out.string(), "--seed", "5", "--n", "2000", "--event",
                 "terminal_mode:1,0.6", "--method", method, "estimate"})
                .code == 0);
    const json e = read_json(out / ("estimate_" + method + "_seed5_n2000.json"));
    CHECK(e["method"] == method);
    CHECK(e["n"] == 2000);
    const double p_hat = e["p_hat"].get<double>();
    const double se = e["se"].get<double>();
    CHECK(std::abs(p_hat - p) <= 3.0 * se);
  }
}

TEST_CASE("remaining commands write their outputs") {
  Scratch s;
  const fs::path out = s.root / "out";
  const std::string cfg =
      s.config("[model]\nmodes = 4\nf = tanh_sum(0.5,0.3)\ng = tanh_y_damped(0.2)\nsigma = bounded_sigmoid(0.5,1.5)\n"
               "[regime]\nepsilon = 0.05\nDelta = 0.1\n"
               "[run]\nT = 0.3\ndt = 0.001\nn = 20\ninvariant_count = 200\npsi2_paths = 20\n"
               "x0_mode = 1\nx0_amplitude = 0.5\noccupation_export = true\n"
               "[output]\nformats = csv,json,binary\n")
          .string();
  const std::vector<std::pair<std::string, std::string>> expect{
      {"simulate", "paths_seed1_n1.bin"}, {"average", "xbar_seed1.csv"},
      {"invariant", "invariant_seed1_n200.json"}, {"psi2", "psi2_seed1_n20.json"},
      {"controls", "controls.json"}, {"occupation", "decoupling_seed1_n20.json"},
      {"asymptote", "asymptote.json"}};
  for (const auto& [command, file] : expect) {
    INFO(command);
    const Result r = run({"--config", cfg, "--out", out.string(), "--seed", "1", "--event", "terminal_mode:1,0.5",
                          "--n", "20", command});
    CHECK(r.code == 0);
    CHECK(r.err.empty());
    CHECK(fs::exists(out / file));
  }
  const json c = read_json(out / "controls.json");
  CHECK(c["S"].get<double>() > 0.0);
  CHECK(c["control_cost"].get<double>() == Approx(c["S"].get<double>()).epsilon(0.05));
}
