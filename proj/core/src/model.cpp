#include "mdspde/model.hpp"

#include <cmath>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mdspde {
namespace {

// sup |tanh''| = 4 / (3 sqrt 3), sup |tanh'''| = 2.
constexpr double kTanh2 = 0.76980035891950105;
constexpr double kTanh3 = 2.0;

double sech2(double v) {
  const double c = std::cosh(v);
  return 1.0 / (c * c);
}

std::vector<double> parse_call(const std::string& text, std::string& name) {
  static const std::regex call(R"(^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\))?\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, call)) {
    throw std::invalid_argument("malformed family specification '" + text + "'");
  }
  name = m[1];
  std::vector<double> args;
  const std::string inner = m[2];
  std::stringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
    if (used != tok.size()) throw std::invalid_argument("bad numeric argument '" + tok + "'");
    args.push_back(v);
  }
  return args;
}

void expect_args(const std::string& name, const std::vector<double>& args, std::size_t n) {
  if (args.size() != n) {
    throw std::invalid_argument(name + " expects " + std::to_string(n) + " argument(s)");
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class Fn>
Eigen::VectorXd pointwise(const Eigen::VectorXd& xg, const Eigen::VectorXd& yg, Fn&& fn) {
  Eigen::VectorXd out(xg.size());
  for (Eigen::Index j = 0; j < xg.size(); ++j) out[j] = fn(xg[j], yg[j]);
  return out;
}

}  // namespace

ReactionSpec ReactionSpec::parse(const std::string& text) {
  std::string name;
  const auto args = parse_call(text, name);
  if (name == "zero") {
    expect_args(name, args, 0);
    return zero();
  }
  if (name == "linear_y") {
    expect_args(name, args, 1);
    return linear_y(args[0]);
  }
  if (name == "tanh_sum") {
    expect_args(name, args, 2);
    return tanh_sum(args[0], args[1]);
  }
  if (name == "tanh_y_damped") {
    expect_args(name, args, 1);
    if (args[0] < 0.0) throw std::invalid_argument("tanh_y_damped needs kappa >= 0");
    return tanh_y_damped(args[0]);
  }
  throw std::invalid_argument("unknown reaction family '" + name + "'");
}

std::string ReactionSpec::to_string() const {
  switch (family) {
    case Family::Zero: return "zero";
    case Family::LinearY: return "linear_y(" + fmt(p1) + ")";
    case Family::TanhSum: return "tanh_sum(" + fmt(p1) + "," + fmt(p2) + ")";
    case Family::TanhYDamped: return "tanh_y_damped(" + fmt(p1) + ")";
  }
  return "?";
}

double ReactionSpec::value(double x, double y) const {
  switch (family) {
    case Family::Zero: return 0.0;
    case Family::LinearY: return p1 * y;
    case Family::TanhSum: return p1 * std::tanh(x) + p2 * std::tanh(y);
    case Family::TanhYDamped: return -p1 * std::tanh(y);
  }
  return 0.0;
}

double ReactionSpec::dx(double x, double /*y*/) const {
  return family == Family::TanhSum ? p1 * sech2(x) : 0.0;
}

double ReactionSpec::dy(double /*x*/, double y) const {
  switch (family) {
    case Family::Zero: return 0.0;
    case Family::LinearY: return p1;
    case Family::TanhSum: return p2 * sech2(y);
    case Family::TanhYDamped: return -p1 * sech2(y);
  }
  return 0.0;
}

double ReactionSpec::dxx(double x, double /*y*/) const {
  return family == Family::TanhSum ? -2.0 * p1 * std::tanh(x) * sech2(x) : 0.0;
}

ReactionSpec::Bounds ReactionSpec::bounds() const {
  Bounds b;
  switch (family) {
    case Family::Zero: break;
    case Family::LinearY:
      b.dy = std::abs(p1);
      b.bounded = (p1 == 0.0);
      break;
    case Family::TanhSum:
      b.dx = std::abs(p1);
      b.dy = std::abs(p2);
      b.d2 = kTanh2 * std::max(std::abs(p1), std::abs(p2));
      b.d3 = kTanh3 * std::max(std::abs(p1), std::abs(p2));
      break;
    case Family::TanhYDamped:
      b.dy = std::abs(p1);
      b.d2 = kTanh2 * std::abs(p1);
      b.d3 = kTanh3 * std::abs(p1);
      break;
  }
  return b;
}

bool ReactionSpec::independent_of_y() const {
  return family == Family::Zero || (family == Family::LinearY && p1 == 0.0) ||
         (family == Family::TanhSum && p2 == 0.0) || (family == Family::TanhYDamped && p1 == 0.0);
}

bool ReactionSpec::dx_independent_of_y() const { return true; }

bool ReactionSpec::dy_constant() const {
  return family == Family::Zero || family == Family::LinearY || independent_of_y();
}

DiffusionSpec DiffusionSpec::parse(const std::string& text) {
  std::string name;
  const auto args = parse_call(text, name);
  if (name == "constant") {
    expect_args(name, args, 1);
    if (!(args[0] > 0.0)) throw std::invalid_argument("constant sigma must be positive");
    return constant(args[0]);
  }
  if (name == "bounded_sigmoid") {
    expect_args(name, args, 2);
    if (!(args[0] > 0.0) || !(args[1] >= args[0])) {
      throw std::invalid_argument("bounded_sigmoid needs 0 < c1 <= c2");
    }
    return bounded_sigmoid(args[0], args[1]);
  }
  throw std::invalid_argument("unknown diffusion family '" + name + "'");
}

std::string DiffusionSpec::to_string() const {
  if (family == Family::Constant) return "constant(" + fmt(c1) + ")";
  return "bounded_sigmoid(" + fmt(c1) + "," + fmt(c2) + ")";
}

double DiffusionSpec::value(double x, double y) const {
  if (family == Family::Constant) return c1;
  return c1 + (c2 - c1) / (1.0 + std::exp(-(x + y)));
}

double DiffusionSpec::lipschitz() const {
  return family == Family::Constant ? 0.0 : 0.25 * (c2 - c1);
}

ModelSpec::ModelSpec(const DomainSpec& domain, int modes, ReactionSpec f, ReactionSpec g,
                     DiffusionSpec sigma, int quad_points)
    : domain_(domain),
      slow_(build_basis(domain, Component::Slow, modes)),
      fast_(build_basis(domain, Component::Fast, modes)),
      f_(f),
      g_(g),
      sigma_(sigma) {
  const int q = quad_points > 0 ? quad_points : 2 * modes + 1;
  grid_ = std::make_shared<const Collocation>(slow_, fast_, q);
}

double ModelSpec::ell() const { return 0.5 * (fast_.lambda() - g_.bounds().dy); }

Eigen::VectorXd ModelSpec::reaction_f(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  if (f_.family == ReactionSpec::Family::Zero) return Eigen::VectorXd::Zero(slow_.size());
  const auto xg = grid_->to_grid(Component::Slow, x);
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->analyze(Component::Slow,
                        pointwise(xg, yg, [&](double a, double b) { return f_.value(a, b); }));
}

Eigen::VectorXd ModelSpec::reaction_f_grid(const Eigen::VectorXd& x_grid,
                                           const Eigen::VectorXd& y) const {
  if (f_.family == ReactionSpec::Family::Zero) return Eigen::VectorXd::Zero(slow_.size());
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->analyze(Component::Slow,
                        pointwise(x_grid, yg, [&](double a, double b) { return f_.value(a, b); }));
}

Eigen::VectorXd ModelSpec::reaction_g(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  if (g_.family == ReactionSpec::Family::Zero) return Eigen::VectorXd::Zero(fast_.size());
  return reaction_g_grid(grid_->to_grid(Component::Slow, x), y);
}

Eigen::VectorXd ModelSpec::reaction_g_grid(const Eigen::VectorXd& x_grid,
                                           const Eigen::VectorXd& y) const {
  if (g_.family == ReactionSpec::Family::Zero) return Eigen::VectorXd::Zero(fast_.size());
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->analyze(Component::Fast,
                        pointwise(x_grid, yg, [&](double a, double b) { return g_.value(a, b); }));
}

Eigen::VectorXd ModelSpec::sigma_apply(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& u) const {
  if (sigma_.is_constant()) return sigma_.c1 * u;
  const auto xg = grid_->to_grid(Component::Slow, x);
  const auto yg = grid_->to_grid(Component::Fast, y);
  const auto ug = grid_->to_grid(Component::Slow, u);
  Eigen::VectorXd prod(xg.size());
  for (Eigen::Index j = 0; j < xg.size(); ++j) prod[j] = sigma_.value(xg[j], yg[j]) * ug[j];
  return grid_->analyze(Component::Slow, prod);
}

Eigen::MatrixXd ModelSpec::sigma_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  if (sigma_.is_constant()) {
    return sigma_.c1 * Eigen::MatrixXd::Identity(slow_.size(), slow_.size());
  }
  const auto xg = grid_->to_grid(Component::Slow, x);
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->multiplication(
      Component::Slow, Component::Slow,
      pointwise(xg, yg, [&](double a, double b) { return sigma_.value(a, b); }));
}

Eigen::MatrixXd ModelSpec::dxf_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  const auto xg = grid_->to_grid(Component::Slow, x);
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->multiplication(Component::Slow, Component::Slow,
                               pointwise(xg, yg, [&](double a, double b) { return f_.dx(a, b); }));
}

Eigen::MatrixXd ModelSpec::dyf_matrix(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  const auto xg = grid_->to_grid(Component::Slow, x);
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->multiplication(Component::Slow, Component::Fast,
                               pointwise(xg, yg, [&](double a, double b) { return f_.dy(a, b); }));
}

Eigen::MatrixXd ModelSpec::dyg_matrix_grid(const Eigen::VectorXd& x_grid,
                                           const Eigen::VectorXd& y) const {
  const auto yg = grid_->to_grid(Component::Fast, y);
  return grid_->multiplication(
      Component::Fast, Component::Fast,
      pointwise(x_grid, yg, [&](double a, double b) { return g_.dy(a, b); }));
}

HypothesisReport validate_hypotheses(const ModelSpec& model) {
  HypothesisReport r;
  r.lambda = model.fast().lambda();
  r.f_bounds = model.f().bounds();
  r.g_bounds = model.g().bounds();
  r.L_g = r.g_bounds.dy;
  r.ell = 0.5 * (r.lambda - r.L_g);
  r.omega = 0.5 * (r.lambda - 3.0 * r.L_g);
  r.sigma_lower = model.sigma().lower();
  r.sigma_upper = model.sigma().upper();
  r.L_sigma = model.sigma().lipschitz();
  r.dissipative = r.L_g < r.lambda;
  r.strongly_dissipative = r.omega > 0.0;
  r.sigma_bounded = r.sigma_lower > 0.0 && r.sigma_lower <= r.sigma_upper;
  r.f_bounded = r.f_bounds.bounded;
  r.g_bounded = r.g_bounds.bounded;
  return r;
}

Field eval_reaction(const ModelSpec& model, Reaction which, const Field& x, const Field& y) {
  require_basis(x, model.slow(), "eval_reaction(x)");
  require_basis(y, model.fast(), "eval_reaction(y)");
  if (which == Reaction::F) return Field{model.reaction_f(x.coeffs, y.coeffs), model.slow().tag()};
  return Field{model.reaction_g(x.coeffs, y.coeffs), model.fast().tag()};
}

Field eval_derivative(const ModelSpec& model, Derivative which, const Field& x, const Field& y,
                      const Field& chi, const std::optional<Field>& chi2) {
  require_basis(x, model.slow(), "eval_derivative(x)");
  require_basis(y, model.fast(), "eval_derivative(y)");
  const auto& grid = model.grid();
  const auto xg = grid.to_grid(Component::Slow, x.coeffs);
  const auto yg = grid.to_grid(Component::Fast, y.coeffs);

  auto apply = [&](Component out, Component in, auto&& deriv) {
    const auto& in_basis = model.basis(in);
    require_basis(chi, in_basis, "eval_derivative(chi)");
    const auto cg = grid.to_grid(in, chi.coeffs);
    Eigen::VectorXd prod(xg.size());
    for (Eigen::Index j = 0; j < xg.size(); ++j) prod[j] = deriv(xg[j], yg[j]) * cg[j];
    return Field{grid.analyze(out, prod), model.basis(out).tag()};
  };

  const auto& f = model.f();
  const auto& g = model.g();
  switch (which) {
    case Derivative::DxF:
      return apply(Component::Slow, Component::Slow, [&](double a, double b) { return f.dx(a, b); });
    case Derivative::DyF:
      return apply(Component::Slow, Component::Fast, [&](double a, double b) { return f.dy(a, b); });
    case Derivative::DxG:
      return apply(Component::Fast, Component::Slow, [&](double a, double b) { return g.dx(a, b); });
    case Derivative::DyG:
      return apply(Component::Fast, Component::Fast, [&](double a, double b) { return g.dy(a, b); });
    case Derivative::DxxF: {
      if (!chi2) throw std::invalid_argument("eval_derivative: DxxF requires chi2");
      require_basis(*chi2, model.slow(), "eval_derivative(chi2)");
      require_basis(chi, model.slow(), "eval_derivative(chi)");
      const auto c1 = grid.to_grid(Component::Slow, chi.coeffs);
      const auto c2 = grid.to_grid(Component::Slow, chi2->coeffs);
      Eigen::VectorXd prod(xg.size());
      for (Eigen::Index j = 0; j < xg.size(); ++j) prod[j] = f.dxx(xg[j], yg[j]) * c1[j] * c2[j];
      return Field{grid.analyze(Component::Slow, prod), model.slow().tag()};
    }
  }
  throw std::invalid_argument("eval_derivative: unknown derivative");
}

Field apply_sigma(const ModelSpec& model, const Field& x, const Field& y, const Field& u) {
  require_basis(x, model.slow(), "apply_sigma(x)");
  require_basis(y, model.fast(), "apply_sigma(y)");
  require_basis(u, model.slow(), "apply_sigma(u)");
  return Field{model.sigma_apply(x.coeffs, y.coeffs, u.coeffs), model.slow().tag()};
}

}  // namespace mdspde
