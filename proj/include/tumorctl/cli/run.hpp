#pragma once

// Subcommand pipelines. Each writes its artifacts plus manifest.json into the
// output directory and returns a process exit code:
// 0 success, 2 invalid configuration or input, 3 solver failure.

#include "tumorctl/cli/config.hpp"
#include "tumorctl/field_io.hpp"
#include "tumorctl/reduced.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace tumorctl::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kInvalid = 2, kSolverFailure = 3 };

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"forward", "adjoint", "taylor-test", "grad-check", "optimize", "sparsity-map",
                                          "adjoint-test"};
  return s;
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Shortest decimal that round-trips a double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Collects files under the output directory and builds the manifest.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  void csv(const std::string& name, const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::ofstream out(dir_ / name, std::ios::binary);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt_double(row[i]);
      out << '\n';
    }
    add(name);
  }

  void field(const std::string& name, const Field& f) {
    std::filesystem::create_directories((dir_ / name).parent_path());
    write_field((dir_ / name).string(), f);
    add(name);
  }

  void text(const std::string& name, const std::string& body) {
    std::ofstream(dir_ / name, std::ios::binary) << body;
    add(name);
  }

  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  void add(const std::string& name) { files_.push_back(name); }
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

inline std::string slice_name(const std::string& stem, int n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d.fld", stem.c_str(), n);
  return buf;
}

inline bool snapshot_due(int n, int last, int every) { return n % every == 0 || n == last; }

namespace detail {

using Json = nlohmann::ordered_json;

/// NaN and infinities are not JSON numbers; report them as null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Seeded direction, uniform in [-1, 1] per raw entry, clamped to the box.
inline Control random_direction(const Control& like, const BoxConstraints& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  Vector a(like.first.size()), b(like.second.size());
  for (auto& v : a) v = ud(rng);
  for (auto& v : b) v = ud(rng);
  return project_box(like.with_values(a, b), box);
}

/// Smooth direction with seeded amplitudes; resolution independent so that
/// refinement studies probe the same continuous direction.
inline Control smooth_direction(const RunConfig& cfg, const std::array<double, 4>& amp) {
  const auto& prob = cfg.problem;
  const Grid& g = prob.grid;
  const TimeGrid& tg = prob.time;
  auto slices = [&](double a, double b, int k) {
    SpaceTimeField out;
    for (int n = 0; n < tg.steps; ++n) {
      const double t = tg.time(n) / tg.t_final;
      out.push_back(Field::sample(g, [&](double x, double y) {
        double s = std::cos(k * std::numbers::pi * x / g.lengths[0]);
        if (g.dim == 2) s *= std::cos(std::numbers::pi * y / g.lengths[1]);
        return a * s * std::sin(std::numbers::pi * (t + 0.25)) + b;
      }));
    }
    return out;
  };
  const auto lay = layout_of(cfg.initial.parametrization, g, tg);
  Vector first;
  if (std::holds_alternative<ProductFirstComponent>(cfg.initial.parametrization)) {
    first.resize(tg.steps);
    for (int n = 0; n < tg.steps; ++n) first[n] = amp[0] * std::sin(std::numbers::pi * (tg.time(n) / tg.t_final + 0.25)) + amp[1];
  } else if (lay.first_size > 0) {
    first = flatten(slices(amp[0], amp[1], 1));
  }
  return cfg.initial.with_values(first, flatten(slices(amp[2], amp[3], 2)));
}

inline Control add_scaled(const Control& u, double t, const Control& h) {
  return u.with_values(u.first + t * h.first, u.second + t * h.second);
}

inline void write_state_snapshots(Artifacts& art, const StateTrajectory& traj, int every) {
  for (int n = 0; n <= traj.steps(); ++n) {
    if (!snapshot_due(n, traj.steps(), every)) continue;
    art.field(slice_name("snapshots/mu", n), traj.records[n].mu);
    art.field(slice_name("snapshots/phi", n), traj.records[n].phi);
    art.field(slice_name("snapshots/sigma", n), traj.records[n].sigma);
  }
}

inline Json separation_json(const StateTrajectory& traj, const PotentialSpec& pot) {
  const auto sep = check_separation(traj, pot);
  return {{"r_star_observed", num(sep.r_star_observed)},
          {"r_upper_observed", num(sep.r_upper_observed)},
          {"margin_to_domain", std::isinf(sep.margin_to_domain) ? Json("inf") : num(sep.margin_to_domain)},
          {"max_newton_iterations", traj.max_newton_iterations}};
}

// ---------------------------------------------------------------------------

inline Json run_forward(const RunConfig& cfg, Artifacts& art) {
  const auto& prob = cfg.problem;
  const auto traj = solve_forward(prob.init, expand(cfg.initial, prob.time, prob.grid), prob.model, prob.time);
  std::vector<std::vector<double>> rows;
  for (int n = 0; n <= traj.steps(); ++n) {
    const auto& r = traj.records[n];
    rows.push_back({prob.time.time(n), l2_norm(r.mu), l2_norm(r.mu_t), r.phi.values.minCoeff(), r.phi.values.maxCoeff(),
                    l2_norm(r.sigma)});
  }
  art.csv("norms.csv", {"t", "norm_mu", "norm_mu_t", "min_phi", "max_phi", "norm_sigma"}, rows);
  write_state_snapshots(art, traj, cfg.snapshot_every);
  const auto st = stability_norms(traj, prob.time);
  const auto cost = cost_eval(traj, cfg.initial, prob.cost, prob.time);
  return {{"separation", separation_json(traj, prob.model.potential)},
          {"stability",
           {{"sup_mu_t", st.sup_mu_t},
            {"sup_mu_h1", st.sup_mu_h1},
            {"sup_phi_inf", st.sup_phi_inf},
            {"sup_sigma_h1", st.sup_sigma_h1},
            {"l2_phi_t_h1", st.l2_phi_t_h1}}},
          {"cost", {{"smooth", cost.smooth}, {"sparsity", cost.sparsity}, {"total", cost.total}}}};
}

inline Json run_adjoint(const RunConfig& cfg, Artifacts& art) {
  const auto& prob = cfg.problem;
  const ControlPair u = expand(cfg.initial, prob.time, prob.grid);
  const auto traj = solve_forward(prob.init, u, prob.model, prob.time);
  const auto adj = solve_adjoint(traj, u, prob.cost, prob.model, prob.time);
  for (int n = 0; n <= prob.time.steps; ++n) {
    if (!snapshot_due(n, prob.time.steps, cfg.snapshot_every)) continue;
    art.field(slice_name("snapshots/p", n), adj.records[n].p);
    art.field(slice_name("snapshots/q", n), adj.records[n].q);
    art.field(slice_name("snapshots/r", n), adj.records[n].r);
  }
  const auto bounds = dual_bound_report(adj);
  const auto weighted = weighted_dual_bounds(adj, traj, prob.model);
  const double threshold = std::max(weighted.sup_p, weighted.sup_r);
  std::string rec;
  rec += "sup_p = " + fmt_double(bounds.sup_p) + "\n";
  rec += "sup_r = " + fmt_double(bounds.sup_r) + "\n";
  rec += "sup_h_phi_p = " + fmt_double(weighted.sup_p) + "\n";
  rec += "kappa_threshold = " + fmt_double(threshold) + "\n";
  art.text("dual_bounds.txt", rec);
  return {{"sup_p", bounds.sup_p},
          {"sup_r", bounds.sup_r},
          {"sup_h_phi_p", weighted.sup_p},
          {"kappa_threshold", threshold},
          {"separation", separation_json(traj, prob.model.potential)}};
}

inline Json run_taylor(const RunConfig& cfg, Artifacts& art) {
  const auto& prob = cfg.problem;
  std::mt19937_64 rng(cfg.seed);
  const Control h = random_direction(cfg.initial, prob.box, rng);
  const auto res = taylor_test(prob.init, expand(cfg.initial, prob.time, prob.grid),
                               expand_increment(cfg.initial, h, prob.time, prob.grid), prob.model, prob.time, cfg.probe.taylor_t);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < res.t.size(); ++i) rows.push_back({res.t[i], res.remainder[i], res.local_slope[i]});
  art.csv("taylor.csv", {"t", "remainder", "local_slope"}, rows);
  return {{"slope", num(res.slope)}, {"exact", res.exact}};
}

inline Json run_grad_check(const RunConfig& cfg, Artifacts& art) {
  const auto& prob = cfg.problem;
  const auto lay = layout_of(cfg.initial.parametrization, prob.grid, prob.time);
  const auto base = evaluate(prob, cfg.initial);
  const auto g_cont = reduced_gradient(prob, cfg.initial, base.state, GradientRoute::continuous);
  const auto g_disc = reduced_gradient(prob, cfg.initial, base.state, GradientRoute::discrete);
  std::mt19937_64 rng(cfg.seed);
  const double eps = cfg.probe.fd_step;
  std::vector<std::vector<double>> rows;
  double worst_lin = 0.0, worst_adj = 0.0, worst_disc = 0.0;
  for (int d = 0; d < cfg.probe.directions; ++d) {
    const Control h = random_direction(cfg.initial, prob.box, rng);
    const double fd =
        (evaluate(prob, add_scaled(cfg.initial, eps, h)).cost.smooth - evaluate(prob, add_scaled(cfg.initial, -eps, h)).cost.smooth) /
        (2.0 * eps);
    const double lin = directional_derivative(base.state, cfg.initial, h, prob.cost, prob.model, prob.time);
    const double adj = gradient_pairing(g_cont, h, lay);
    const double disc = gradient_pairing(g_disc, h, lay);
    const double e_lin = std::abs(lin - fd) / std::abs(fd);
    const double e_adj = std::abs(adj - lin) / std::abs(lin);
    const double e_disc = std::abs(disc - lin) / std::abs(lin);
    const double e_scaled = std::abs(adj - lin) / (control_norm(lay, h.with_values(g_disc.g1, g_disc.g2)) * control_norm(lay, h));
    worst_lin = std::max(worst_lin, e_lin);
    worst_adj = std::max(worst_adj, e_adj);
    worst_disc = std::max(worst_disc, e_disc);
    rows.push_back({static_cast<double>(d), eps, fd, lin, adj, disc, e_lin, e_adj, e_disc, e_scaled});
  }
  art.csv("grad_check.csv",
          {"direction", "step", "fd", "linearized", "adjoint", "discrete_adjoint", "rel_lin_fd", "rel_adj_lin", "rel_discrete_lin",
           "adj_lin_scaled"},
          rows);
  return {{"max_rel_lin_fd", worst_lin}, {"max_rel_adj_lin", worst_adj}, {"max_rel_discrete_lin", worst_disc}};
}

inline Json opt_summary(const OptResult& res) {
  return {{"iterations", res.iterations},
          {"converged", res.converged},
          {"stationarity_residual", num(res.stationarity_residual)},
          {"final_cost", res.cost_history.back()},
          {"sparsity_fraction", {num(res.sparsity_fraction_1), num(res.sparsity_fraction_2)}},
          {"sup_control", control_sup_norm(res.control)}};
}

inline void write_history(Artifacts& art, const OptResult& res) {
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < res.cost_history.size(); ++k)
    rows.push_back({static_cast<double>(k), res.cost_history[k],
                    k < res.residual_history.size() ? res.residual_history[k] : std::numeric_limits<double>::quiet_NaN()});
  art.csv("history.csv", {"iteration", "cost", "residual"}, rows);
}

/// Per-slice snapshots of a raw space-time vector (skipped when it is not a
/// space-time field, e.g. the scalar series of the product parametrization).
inline void write_slices(Artifacts& art, const std::string& stem, const Vector& v, const Grid& g, int steps, int every) {
  if (v.size() != static_cast<Eigen::Index>(steps) * g.size()) return;
  for (int n = 0; n < steps; ++n)
    if (snapshot_due(n, steps - 1, every)) art.field(slice_name(stem, n), Field(g, Vector(v.segment(n * g.size(), g.size()))));
}

inline Vector mask_vector(const std::vector<std::uint8_t>& m) {
  Vector v(static_cast<Eigen::Index>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i];
  return v;
}

inline Json run_optimize(const RunConfig& cfg, Artifacts& art, bool masks_csv) {
  const auto& prob = cfg.problem;
  const auto res = optimize(prob, cfg.initial, cfg.optimizer);
  write_history(art, res);
  const Grid& g = prob.grid;
  const int steps = prob.time.steps;
  const auto dual = dual_representer(res.adjoint, res.state, res.control, prob.model, prob.time);
  const auto map = sparsity_map(dual, res.control, prob.cost.kappa());
  if (!std::holds_alternative<ProductFirstComponent>(res.control.parametrization)) {
    write_slices(art, "control/u1", res.control.first, g, steps, cfg.snapshot_every);
    write_slices(art, "masks/predicted1", mask_vector(map.predicted1), g, steps, cfg.snapshot_every);
    write_slices(art, "masks/actual1", mask_vector(map.actual1), g, steps, cfg.snapshot_every);
  } else {
    std::vector<std::vector<double>> rows;
    for (int n = 0; n < steps; ++n) rows.push_back({prob.time.time(n), res.control.first[n]});
    art.csv("control/u1_series.csv", {"t", "u"}, rows);
  }
  write_slices(art, "control/u2", res.control.second, g, steps, cfg.snapshot_every);
  write_slices(art, "masks/predicted2", mask_vector(map.predicted2), g, steps, cfg.snapshot_every);
  write_slices(art, "masks/actual2", mask_vector(map.actual2), g, steps, cfg.snapshot_every);

  if (masks_csv) {
    std::vector<std::vector<double>> rows;
    auto emit = [&](int comp, const Vector& d, const Vector& u, const std::vector<std::uint8_t>& pr,
                    const std::vector<std::uint8_t>& ac, const std::vector<std::uint8_t>& ex) {
      for (Eigen::Index i = 0; i < u.size(); ++i)
        rows.push_back({static_cast<double>(comp), static_cast<double>(i), d[i], u[i], static_cast<double>(pr[i]),
                        static_cast<double>(ac[i]), static_cast<double>(ex[i])});
    };
    emit(1, dual.g1, res.control.first, map.predicted1, map.actual1, map.excluded1);
    emit(2, dual.g2, res.control.second, map.predicted2, map.actual2, map.excluded2);
    art.csv("sparsity_map.csv", {"component", "index", "dual", "control", "predicted_zero", "actual_zero", "excluded"}, rows);
  }

  Json out = opt_summary(res);
  out["cost_history"] = res.cost_history;
  out["residual_history"] = res.residual_history;
  out["sparsity_map"] = {{"agreement", map.agreement}, {"considered", map.considered}, {"agreeing", map.agreeing},
                         {"band", map.band}};
  out["separation"] = separation_json(res.state, prob.model.potential);
  return out;
}

inline Json run_adjoint_test(const RunConfig& cfg, Artifacts& art) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  const std::array<double, 4> amp{ud(rng), ud(rng), ud(rng), ud(rng)};
  std::vector<std::vector<double>> rows;
  std::vector<double> errors, scaled_errors;
  bool signs = true;
  for (int level = 0; level <= cfg.probe.refinements; ++level) {
    const RunConfig c = level == 0 ? cfg : cfg.refined(level);
    const auto& prob = c.problem;
    const Control h = smooth_direction(c, amp);
    const auto base = evaluate(prob, c.initial);
    const double lin = directional_derivative(base.state, c.initial, h, prob.cost, prob.model, prob.time);
    const auto lay = layout_of(c.initial.parametrization, prob.grid, prob.time);
    const double adj = gradient_pairing(reduced_gradient(prob, c.initial, base.state, GradientRoute::continuous), h, lay);
    const auto gd = reduced_gradient(prob, c.initial, base.state, GradientRoute::discrete);
    const double disc = gradient_pairing(gd, h, lay);
    const double rel = std::abs(adj - lin) / std::abs(lin);
    // Relative to |grad| |h|: insensitive to cancellation inside <grad, h>.
    const double scaled = std::abs(adj - lin) / (control_norm(lay, h.with_values(gd.g1, gd.g2)) * control_norm(lay, h));
    scaled_errors.push_back(scaled);
    signs = signs && (adj > 0) == (lin > 0);
    errors.push_back(rel);
    rows.push_back({static_cast<double>(level), static_cast<double>(prob.grid.cells[0]), prob.time.dt(), lin, adj, disc, rel,
                    std::abs(disc - lin) / std::abs(lin), scaled});
  }
  art.csv("adjoint_test.csv", {"level", "cells", "dt", "linearized", "adjoint", "discrete_adjoint", "rel_adj_lin", "rel_discrete_lin",
           "adj_lin_scaled"},
          rows);
  bool decreasing = true;
  for (std::size_t i = 1; i < errors.size(); ++i) decreasing = decreasing && errors[i] < errors[i - 1];
  return {{"rel_errors", errors}, {"scaled_errors", scaled_errors}, {"strictly_decreasing", decreasing}, {"signs_agree", signs}};
}

}  // namespace detail

/// Runs one subcommand; the manifest hash covers the raw config bytes.
inline int run(const std::string& sub, const std::string& config_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed_override, std::ostream& err = std::cerr) {
  using detail::Json;
  const auto start = std::chrono::steady_clock::now();
  std::string text;
  {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) {
      err << "error: cannot open config '" << config_path << "'\n";
      return kInvalid;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  if (std::find(subcommands().begin(), subcommands().end(), sub) == subcommands().end()) {
    err << "error: unknown subcommand '" << sub << "'\n";
    return kInvalid;
  }
  RunConfig cfg;
  try {
    cfg = load_config_text(text, std::filesystem::path(config_path).parent_path());
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kInvalid;
  }
  if (seed_override) cfg.seed = *seed_override;

  Artifacts art(out_dir);
  Json metrics;
  try {
    if (sub == "forward") metrics = detail::run_forward(cfg, art);
    else if (sub == "adjoint") metrics = detail::run_adjoint(cfg, art);
    else if (sub == "taylor-test") metrics = detail::run_taylor(cfg, art);
    else if (sub == "grad-check") metrics = detail::run_grad_check(cfg, art);
    else if (sub == "optimize") metrics = detail::run_optimize(cfg, art, false);
    else if (sub == "sparsity-map") metrics = detail::run_optimize(cfg, art, true);
    else metrics = detail::run_adjoint_test(cfg, art);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Json files = Json::array();
  for (const auto& f : art.files())
    files.push_back({{"path", f}, {"bytes", static_cast<std::uint64_t>(std::filesystem::file_size(art.dir() / f))}});
  Json manifest = {{"subcommand", sub},
                   {"version", kVersion},
                   {"config_hash", fnv1a_hex(text)},
                   {"seed", cfg.seed},
                   {"wall_time_s", wall},
                   {"metrics", metrics},
                   {"files", files}};
  std::ofstream(art.dir() / "manifest.json") << manifest.dump(2) << "\n";
  return kOk;
}

}  // namespace tumorctl::cli
