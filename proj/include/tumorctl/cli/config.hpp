#pragma once

// Run configuration: a sectioned INI file (boost::property_tree) turned into a
// validated ControlProblem plus run options. Every violation carries a tag
// naming the assumption it breaks.

#include "tumorctl/field_io.hpp"
#include "tumorctl/reduced.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tumorctl::cli {

struct Violation {
  std::string tag;
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<Violation> v) : std::runtime_error(summarize(v)), violations(std::move(v)) {}
  std::vector<Violation> violations;

 private:
  static std::string summarize(const std::vector<Violation>& v) {
    std::string s = "invalid configuration:";
    for (const auto& x : v) s += "\n  [" + x.tag + "] " + x.message;
    return s;
  }
};

/// A field given as a constant, a cosine profile or an FLD1 snapshot path.
struct FieldSpec {
  enum class Kind { constant, cosine, snapshot } kind = Kind::constant;
  double mean = 0.0;
  double amplitude = 0.0;
  int mode = 1;
  std::string path;  // resolved against the config directory

  /// mean + amplitude cos(mode pi x / Lx) [cos(mode pi y / Ly) in 2D].
  Field sample(const Grid& g) const {
    switch (kind) {
      case Kind::constant: return Field(g, mean);
      case Kind::cosine:
        return Field::sample(g, [&](double x, double y) {
          double v = std::cos(mode * std::numbers::pi * x / g.lengths[0]);
          if (g.dim == 2) v *= std::cos(mode * std::numbers::pi * y / g.lengths[1]);
          return mean + amplitude * v;
        });
      case Kind::snapshot: return read_field(path, g);
    }
    return Field(g);
  }

  bool analytic() const { return kind != Kind::snapshot; }
};

struct ProbeOptions {
  int directions = 5;
  double fd_step = 1e-5;
  std::vector<double> taylor_t{1e-1, 1e-2, 1e-3, 1e-4};
  int refinements = 2;  // adjoint-test: simultaneous (dt, dx) halvings
};

/// Scalar sections as read, kept so refined copies can be rebuilt.
struct RawSections {
  int dim;
  std::vector<double> cells, lengths;
  double t_final;
  int steps;
  std::string parametrization;
  std::string kernel;
  double kernel_sigma;
  int kernel_radius;
  double lo1, hi1, lo2, hi2;
  std::string sparsity;
  std::string gradient;
  std::string potential;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int snapshot_every = 10;

  // Sources kept for refinement studies.
  FieldSpec mu0, mu0_prime, phi0, sigma0, target_Q, target_Omega;
  FieldSpec fixed_u1, z_hat, z_tilde;
  FieldSpec initial1, initial2;
  std::string parametrization = "full";
  std::optional<double> radius;

  ControlProblem problem;
  Control initial;
  OptimizerOptions optimizer;
  ProbeOptions probe;
  RawSections sections;

  /// Same configuration on a grid refined `level` times in space and time.
  RunConfig refined(int level) const;
};

namespace detail {

inline FieldSpec parse_field(const std::string& raw, const std::filesystem::path& base_dir) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  FieldSpec f;
  if (!s.empty() && s[0] == '@') {
    f.kind = FieldSpec::Kind::snapshot;
    std::filesystem::path p = s.substr(1);
    f.path = (p.is_absolute() ? p : base_dir / p).string();
    return f;
  }
  static const std::regex cosine(R"(cosine\(\s*([^,\s]+)\s*,\s*([^,\s]+)\s*(?:,\s*([0-9]+)\s*)?\))");
  std::smatch m;
  if (std::regex_match(s, m, cosine)) {
    f.kind = FieldSpec::Kind::cosine;
    f.mean = std::stod(m[1].str());
    f.amplitude = std::stod(m[2].str());
    if (m[3].matched) f.mode = std::stoi(m[3].str());
    return f;
  }
  std::size_t used = 0;
  f.mean = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return f;
}

inline std::vector<double> parse_list(const std::string& s) {
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    out.push_back(std::stod(tok, &used));
    if (used != tok.size()) throw std::invalid_argument("bad number '" + tok + "'");
  }
  return out;
}

/// Typed access that records unknown keys and parse failures.
class Reader {
 public:
  Reader(const boost::property_tree::ptree& tree, std::filesystem::path dir) : tree_(tree), dir_(std::move(dir)) {}

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    const auto node = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!node) return fallback;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        return *node;
      } else {
        std::size_t used = 0;
        const std::string s = trim(*node);
        T v;
        if constexpr (std::is_integral_v<T>)
          v = static_cast<T>(std::stoll(s, &used));
        else
          v = static_cast<T>(std::stod(s, &used));
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return v;
      }
    } catch (const std::exception&) {
      violations.push_back({"parse", key + ": cannot parse '" + *node + "'"});
      return fallback;
    }
  }

  bool has(const std::string& key) const {
    return static_cast<bool>(tree_.get_child_optional(boost::property_tree::ptree::path_type(key, '.')));
  }

  FieldSpec field(const std::string& key, double fallback) {
    FieldSpec spec;
    spec.mean = fallback;
    const std::string raw = get<std::string>(key, "");
    if (raw.empty()) return spec;
    try {
      return parse_field(raw, dir_);
    } catch (const std::exception&) {
      violations.push_back({"parse", key + ": expected a number, cosine(mean, amplitude[, mode]) or @path, got '" + raw + "'"});
      return spec;
    }
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) {
    const std::string raw = get<std::string>(key, "");
    if (raw.empty()) return fallback;
    try {
      return parse_list(raw);
    } catch (const std::exception&) {
      violations.push_back({"parse", key + ": expected whitespace-separated numbers"});
      return fallback;
    }
  }

  void reject_unknown() {
    for (const auto& [name, child] : tree_) {
      if (child.empty()) {
        if (!used_.count(name)) violations.push_back({"unknown-key", "unknown top-level key '" + name + "'"});
        continue;
      }
      for (const auto& [key, leaf] : child) {
        const std::string full = name + "." + key;
        if (!used_.count(full)) violations.push_back({"unknown-key", "unknown key '" + full + "'"});
      }
    }
  }

  std::vector<Violation> violations;

 private:
  static std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    return s;
  }

  const boost::property_tree::ptree& tree_;
  std::filesystem::path dir_;
  std::set<std::string> used_;
};

inline std::optional<KernelKind> kernel_kind(const std::string& s) {
  if (s == "zero") return KernelKind::zero;
  if (s == "delta") return KernelKind::delta;
  if (s == "gaussian") return KernelKind::gaussian;
  return std::nullopt;
}

/// Samples all fields on the configured grid and assembles the problem.
/// Appends violations instead of throwing for anything the user controls.
inline void assemble(RunConfig& cfg, const RawSections& raw, std::vector<Violation>& out) {
  auto& prob = cfg.problem;
  const Grid& g = prob.grid;
  const TimeGrid& tg = prob.time;

  auto sample = [&](const FieldSpec& s, const char* what) -> Field {
    try {
      Field f = s.sample(g);
      if (!f.finite()) out.push_back({"A6", std::string(what) + ": non-finite values"});
      return f;
    } catch (const std::exception& e) {
      out.push_back({"io", std::string(what) + ": " + e.what()});
      return Field(g);
    }
  };

  prob.init = {sample(cfg.mu0, "initial.mu0"), sample(cfg.mu0_prime, "initial.mu0_prime"), sample(cfg.phi0, "initial.phi0"),
               sample(cfg.sigma0, "initial.sigma0")};
  const double lower = prob.model.potential.lower(), upper = prob.model.potential.upper();
  if (prob.init.phi0.values.minCoeff() <= lower || prob.init.phi0.values.maxCoeff() >= upper)
    out.push_back({"initial-domain", "initial.phi0 must lie strictly inside the potential domain (" + std::to_string(lower) +
                                         ", " + std::to_string(upper) + ")"});

  prob.cost.target_Q = constant_in_time(sample(cfg.target_Q, "cost.target_Q"), tg.steps + 1);
  prob.cost.target_Omega = sample(cfg.target_Omega, "cost.target_Omega");

  Parametrization par = FullParametrization{};
  if (raw.parametrization == "fixed_u1") {
    par = FixedFirstComponent{constant_in_time(sample(cfg.fixed_u1, "control.u1"), tg.steps)};
  } else if (raw.parametrization == "product") {
    par = ProductFirstComponent{sample(cfg.z_hat, "control.z_hat")};
  } else if (raw.parametrization == "affine") {
    KernelSpec k;
    if (auto kk = kernel_kind(raw.kernel)) {
      k.kind = *kk;
    } else {
      out.push_back({"parse", "control.kernel must be zero, delta or gaussian"});
    }
    k.sigma_cells = raw.kernel_sigma;
    k.radius = raw.kernel_radius;
    try {
      const auto w = k.weights();
      for (int axis = 0; axis < g.dim; ++axis)
        if (static_cast<int>(w.size() / 2) >= g.cells[axis])
          out.push_back({"kernel", "control.kernel radius must be smaller than the cell count"});
    } catch (const std::exception& e) {
      out.push_back({"kernel", e.what()});
    }
    par = AffineFirstComponent{constant_in_time(sample(cfg.z_tilde, "control.z_tilde"), tg.steps), k};
  } else if (raw.parametrization != "full") {
    out.push_back({"parse", "control.parametrization must be full, fixed_u1, product or affine"});
  }

  const auto lay = layout_of(par, g, tg);
  Vector first = Vector::Zero(lay.first_size);
  if (std::holds_alternative<ProductFirstComponent>(par)) {
    if (cfg.initial1.kind != FieldSpec::Kind::constant)
      out.push_back({"parse", "control.initial1 must be a number for the product parametrization"});
    first.setConstant(cfg.initial1.mean);
  } else if (lay.first_size > 0) {
    first = flatten(constant_in_time(sample(cfg.initial1, "control.initial1"), tg.steps));
  }
  const Vector second = flatten(constant_in_time(sample(cfg.initial2, "control.initial2"), tg.steps));
  cfg.initial = Control{par, first, second};
}

inline void validate(const RunConfig& cfg, const RawSections& raw, std::vector<Violation>& out) {
  const auto& prob = cfg.problem;
  for (const auto& e : validate_assumptions(prob.model.params, prob.model.potential, prob.model.nonlinearity).failures())
    out.push_back({e.tag, e.check});

  const auto& c = prob.cost;
  if (!(c.b1 >= 0.0)) out.push_back({"A5", "cost.b1 must be >= 0"});
  if (!(c.b2 >= 0.0)) out.push_back({"A5", "cost.b2 must be >= 0"});
  if (!(c.b3 > 0.0)) out.push_back({"A5", "cost.b3 must be > 0"});
  if (!(c.sparsity.kappa >= 0.0)) out.push_back({"A5", "cost.kappa must be >= 0"});
  if (raw.sparsity != "l1" && raw.sparsity != "none")
    out.push_back({"A7", "cost.sparsity must be l1 or none (a nonnegative convex functional)"});

  const auto& b = prob.box;
  if (!(b.lo1[0] <= b.hi1[0]) || !(b.lo2[0] <= b.hi2[0])) out.push_back({"box-order", "control box needs lo <= hi"});
  if (c.kappa() > 0.0) {
    const bool first_free = raw.parametrization != "fixed_u1";
    if ((first_free && !(b.lo1[0] < 0.0 && b.hi1[0] > 0.0)) || !(b.lo2[0] < 0.0 && b.hi2[0] > 0.0))
      out.push_back({"sign-condition", "sparsity requires lo < 0 < hi for every free control component"});
  }
  if (cfg.radius) {
    const double m = std::max({std::abs(b.lo1[0]), std::abs(b.hi1[0]), std::abs(b.lo2[0]), std::abs(b.hi2[0])});
    if (!(*cfg.radius > 0.0) || !(m < *cfg.radius))
      out.push_back({"radius", "control box must lie inside the open ball of radius control.radius"});
  }
  const auto& o = cfg.optimizer;
  if (!(o.tolerance > 0.0) || o.max_iterations < 0 || o.max_backtracks < 0 || !(o.backtrack > 0.0 && o.backtrack < 1.0) ||
      !(o.sufficient_decrease > 0.0 && o.sufficient_decrease < 1.0))
    out.push_back({"optimizer", "optimizer: tolerance > 0, caps >= 0, backtrack and sufficient_decrease in (0, 1)"});
  if (raw.gradient != "discrete" && raw.gradient != "continuous")
    out.push_back({"parse", "optimizer.gradient must be discrete or continuous"});
  if (cfg.probe.directions < 1 || !(cfg.probe.fd_step > 0.0) || cfg.probe.taylor_t.size() < 2 || cfg.probe.refinements < 0)
    out.push_back({"probe", "probe: directions >= 1, fd_step > 0, at least two taylor_t values, refinements >= 0"});
  for (double t : cfg.probe.taylor_t)
    if (!(t > 0.0)) out.push_back({"probe", "probe.taylor_t values must be positive"});
  if (cfg.snapshot_every < 1) out.push_back({"output", "output.snapshot_every must be >= 1"});
}

}  // namespace detail

/// Parses, assembles and validates; throws ConfigError listing every violation.
inline RunConfig load_config_text(const std::string& text, const std::filesystem::path& base_dir = ".");

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{"io", "cannot open config file '" + path + "'"}});
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str(), std::filesystem::path(path).parent_path());
}

namespace detail {

inline void build(RunConfig& cfg, const RawSections& raw, int level, std::vector<Violation>& out) {
  auto& prob = cfg.problem;
  if (raw.dim != 1 && raw.dim != 2) {
    out.push_back({"grid", "grid.dim must be 1 or 2"});
    throw ConfigError(out);
  }
  if (static_cast<int>(raw.cells.size()) != raw.dim || static_cast<int>(raw.lengths.size()) != raw.dim) {
    out.push_back({"grid", "grid.cells and grid.lengths need one entry per dimension"});
    throw ConfigError(out);
  }
  const int scale = 1 << level;
  for (int a = 0; a < raw.dim; ++a) {
    if (raw.cells[a] < 4 || raw.cells[a] != std::floor(raw.cells[a])) out.push_back({"grid", "grid.cells must be integers >= 4"});
    if (!(raw.lengths[a] > 0.0)) out.push_back({"grid", "grid.lengths must be positive"});
  }
  if (!(raw.t_final > 0.0) || raw.steps < 1) out.push_back({"time-step", "time.T > 0 and time.steps >= 1 required"});
  if (!out.empty()) throw ConfigError(out);
  prob.grid = raw.dim == 1 ? Grid::line(static_cast<int>(raw.cells[0]) * scale, raw.lengths[0])
                           : Grid::rectangle(static_cast<int>(raw.cells[0]) * scale, static_cast<int>(raw.cells[1]) * scale,
                                             raw.lengths[0], raw.lengths[1]);
  prob.time = TimeGrid{raw.t_final, raw.steps * scale};
  prob.box = BoxConstraints::constant(raw.lo1, raw.hi1, raw.lo2, raw.hi2);
  prob.cost.sparsity.kind = raw.sparsity == "none" ? SparsityKind::none : SparsityKind::l1_full;
  cfg.optimizer.route = raw.gradient == "continuous" ? GradientRoute::continuous : GradientRoute::discrete;
  validate(cfg, raw, out);
  if (!out.empty()) throw ConfigError(out);
  assemble(cfg, raw, out);
  if (!out.empty()) throw ConfigError(out);
}

}  // namespace detail

inline RunConfig load_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError({{"parse", e.message() + " (line " + std::to_string(e.line()) + ")"}});
  }
  detail::Reader rd(tree, base_dir);
  RunConfig cfg;
  RawSections raw;

  cfg.seed = rd.get<std::uint64_t>("seed", 0);

  raw.dim = rd.get<int>("grid.dim", 1);
  raw.cells = rd.list("grid.cells", {32});
  raw.lengths = rd.list("grid.lengths", std::vector<double>(raw.dim, 1.0));
  raw.t_final = rd.get<double>("time.T", 1.0);
  raw.steps = rd.get<int>("time.steps", 100);

  auto& m = cfg.problem.model;
  m.params.alpha = rd.get<double>("model.alpha", 1.0);
  m.params.tau = rd.get<double>("model.tau", 1.0);
  m.params.chi = rd.get<double>("model.chi", 1.0);
  raw.potential = rd.get<std::string>("model.potential", "regular");
  if (raw.potential == "logarithmic")
    m.potential.kind = PotentialKind::logarithmic;
  else if (raw.potential != "regular")
    rd.violations.push_back({"parse", "model.potential must be regular or logarithmic"});
  m.potential.k1 = rd.get<double>("model.k1", 1.5);
  m.potential.safeguard_eps = rd.get<double>("model.safeguard_eps", 1e-8);
  m.nonlinearity.p0 = rd.get<double>("model.p0", 1.0);
  m.nonlinearity.p_shape = {rd.get<double>("model.p_lo", -1.0), rd.get<double>("model.p_hi", 1.0)};
  m.nonlinearity.h_shape = {rd.get<double>("model.h_lo", -1.0), rd.get<double>("model.h_hi", 1.0)};

  cfg.mu0 = rd.field("initial.mu0", 0.0);
  cfg.mu0_prime = rd.field("initial.mu0_prime", 0.0);
  cfg.phi0 = rd.field("initial.phi0", 0.0);
  cfg.sigma0 = rd.field("initial.sigma0", 0.0);

  auto& c = cfg.problem.cost;
  c.b1 = rd.get<double>("cost.b1", 1.0);
  c.b2 = rd.get<double>("cost.b2", 1.0);
  c.b3 = rd.get<double>("cost.b3", 1.0);
  c.sparsity.kappa = rd.get<double>("cost.kappa", 0.0);
  raw.sparsity = rd.get<std::string>("cost.sparsity", "l1");
  cfg.target_Q = rd.field("cost.target_Q", 0.0);
  cfg.target_Omega = rd.field("cost.target_Omega", 0.0);

  raw.parametrization = rd.get<std::string>("control.parametrization", "full");
  cfg.parametrization = raw.parametrization;
  raw.lo1 = rd.get<double>("control.lo1", -1.0);
  raw.hi1 = rd.get<double>("control.hi1", 1.0);
  raw.lo2 = rd.get<double>("control.lo2", -1.0);
  raw.hi2 = rd.get<double>("control.hi2", 1.0);
  if (rd.has("control.radius")) cfg.radius = rd.get<double>("control.radius", 0.0);
  cfg.fixed_u1 = rd.field("control.u1", 0.0);
  cfg.z_hat = rd.field("control.z_hat", 1.0);
  cfg.z_tilde = rd.field("control.z_tilde", 0.0);
  raw.kernel = rd.get<std::string>("control.kernel", "delta");
  raw.kernel_sigma = rd.get<double>("control.kernel_sigma", 1.0);
  raw.kernel_radius = rd.get<int>("control.kernel_radius", -1);
  cfg.initial1 = rd.field("control.initial1", 0.0);
  cfg.initial2 = rd.field("control.initial2", 0.0);

  auto& o = cfg.optimizer;
  o.tolerance = rd.get<double>("optimizer.tolerance", 1e-6);
  o.max_iterations = rd.get<int>("optimizer.max_iterations", 500);
  o.max_backtracks = rd.get<int>("optimizer.max_backtracks", 50);
  o.step0 = rd.get<double>("optimizer.step0", 0.0);
  o.backtrack = rd.get<double>("optimizer.backtrack", 0.5);
  o.sufficient_decrease = rd.get<double>("optimizer.sufficient_decrease", 1e-4);
  raw.gradient = rd.get<std::string>("optimizer.gradient", "discrete");

  cfg.probe.directions = rd.get<int>("probe.directions", 5);
  cfg.probe.fd_step = rd.get<double>("probe.fd_step", 1e-5);
  cfg.probe.taylor_t = rd.list("probe.taylor_t", cfg.probe.taylor_t);
  cfg.probe.refinements = rd.get<int>("probe.refinements", 2);
  cfg.snapshot_every = rd.get<int>("output.snapshot_every", 10);

  rd.reject_unknown();
  std::vector<Violation> out = std::move(rd.violations);
  cfg.sections = raw;
  detail::build(cfg, raw, 0, out);
  return cfg;
}

inline RunConfig RunConfig::refined(int level) const {
  RunConfig out = *this;
  std::vector<Violation> v;
  detail::build(out, sections, level, v);
  return out;
}

}  // namespace tumorctl::cli
