#pragma once

// Reduced cost u -> J(S(u), u) + kappa G(u): its gradient through the dual
// variables, its directional derivative through the linearized scheme, the
// proximal projected gradient optimizer, stationarity residuals and the
// predicted-vs-actual sparsity pattern of optimal controls.

#include "tumorctl/adjoint.hpp"
#include "tumorctl/control.hpp"
#include "tumorctl/cost.hpp"
#include "tumorctl/forward.hpp"
#include "tumorctl/linearized.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tumorctl {

/// Everything that defines one optimal control problem instance.
struct ControlProblem {
  Grid grid;
  TimeGrid time;
  Model model;
  InitialData init;
  CostSpec cost;
  BoxConstraints box;
};

enum class GradientRoute {
  discrete,    // exact transpose of the discrete scheme
  continuous,  // mirrored scheme for the continuous dual system
};

/// Raw-variable gradient components (same layout as Control::first/second).
struct ReducedGradient {
  Vector g1;
  Vector g2;
};

inline AdjointTrajectory solve_dual(const StateTrajectory& base, const ControlPair& u, const CostSpec& cost, const Model& m,
                                    const TimeGrid& tg, GradientRoute route) {
  return route == GradientRoute::discrete ? solve_discrete_adjoint(base, u, cost, m, tg) : solve_adjoint(base, u, cost, m, tg);
}

/// d0 = (-h(phi) p, r) pulled back to the raw control variables.
inline ReducedGradient dual_representer(const AdjointTrajectory& adj, const StateTrajectory& base, const Control& u,
                                        const Model& m, const TimeGrid& tg) {
  const Grid& g = base.grid();
  if (static_cast<int>(adj.records.size()) != tg.steps + 1) throw std::invalid_argument("gradient: adjoint length mismatch");
  SpaceTimeField d1, d2;
  d1.reserve(tg.steps);
  d2.reserve(tg.steps);
  for (int n = 0; n < tg.steps; ++n) {
    const int k = n + adj.pairing_offset;
    const Vector& phi = base.records[k].phi.values;
    Vector v(phi.size());
    for (Eigen::Index i = 0; i < phi.size(); ++i) v[i] = -truncation(m.nonlinearity, phi[i]) * adj.records[k].p.values[i];
    d1.emplace_back(g, std::move(v));
    d2.push_back(adj.records[k].r);
  }
  return {pullback_first(u.parametrization, d1, g, tg), flatten(d2)};
}

/// Gradient of the smooth part: d0 + b3 u in the raw variables.
inline ReducedGradient smooth_gradient(const AdjointTrajectory& adj, const StateTrajectory& base, const Control& u,
                                       const CostSpec& cost, const Model& m, const TimeGrid& tg) {
  auto d = dual_representer(adj, base, u, m, tg);
  if (d.g1.size() != u.first.size() || d.g2.size() != u.second.size())
    throw std::invalid_argument("gradient: parametrization mismatch");
  d.g1 += cost.b3 * u.first;
  d.g2 += cost.b3 * u.second;
  return d;
}

/// DJ(u)[h] evaluated with psi from the linearized scheme.
inline double directional_derivative(const StateTrajectory& base, const Control& u, const Control& increment,
                                     const CostSpec& cost, const Model& m, const TimeGrid& tg) {
  const Grid& g = base.grid();
  const ControlPair ub = expand(u, tg, g);
  const ControlPair dh = expand_increment(u, increment, tg, g);
  const LinearizedTrajectory lin = solve_linearized(base, ub, dh, m, tg);
  const double dt = tg.dt();
  double track = 0.0;
  for (int n = 1; n <= tg.steps; ++n)
    track += dt * inner(g, base.records[n].phi.values - cost.target_Q[n].values, lin.records[n].psi.values);
  const double terminal = inner(g, base.records.back().phi.values - cost.target_Omega.values, lin.records.back().psi.values);
  const auto lay = layout_of(u.parametrization, g, tg);
  return cost.b1 * track + cost.b2 * terminal + cost.b3 * control_inner(lay, u, increment);
}

/// <grad, h> in the raw control geometry.
inline double gradient_pairing(const ReducedGradient& grad, const Control& h, const ControlLayout& lay) {
  return control_inner(lay, h.with_values(grad.g1, grad.g2), h);
}

/// |u - prox(u - gamma grad, gamma kappa, box)| / max(1, |u|).
inline double stationarity_residual(const Control& u, const ReducedGradient& grad, double kappa, const BoxConstraints& box,
                                    double gamma, const ControlLayout& lay) {
  if (!(gamma > 0.0)) throw std::invalid_argument("stationarity_residual: gamma must be positive");
  const Control trial = u.with_values(u.first - gamma * grad.g1, u.second - gamma * grad.g2);
  const Control fixed = prox_l1_box(trial, gamma * kappa, box);
  const Control diff = u.with_values(u.first - fixed.first, u.second - fixed.second);
  return control_norm(lay, diff) / std::max(1.0, control_norm(lay, u));
}

/// Forward solve and cost in one go.
struct Evaluation {
  StateTrajectory state;
  CostValue cost;
};

inline Evaluation evaluate(const ControlProblem& prob, const Control& u) {
  Evaluation e{solve_forward(prob.init, expand(u, prob.time, prob.grid), prob.model, prob.time), {}};
  e.cost = cost_eval(e.state, u, prob.cost, prob.time);
  return e;
}

inline ReducedGradient reduced_gradient(const ControlProblem& prob, const Control& u, const StateTrajectory& state,
                                        GradientRoute route, AdjointTrajectory* adj_out = nullptr) {
  const ControlPair ue = expand(u, prob.time, prob.grid);
  AdjointTrajectory adj = solve_dual(state, ue, prob.cost, prob.model, prob.time, route);
  auto grad = smooth_gradient(adj, state, u, prob.cost, prob.model, prob.time);
  if (adj_out) *adj_out = std::move(adj);
  return grad;
}

struct OptimizerOptions {
  double step0 = 0.0;  // <= 0 selects 1/b3
  double backtrack = 0.5;
  double sufficient_decrease = 1e-4;
  int max_iterations = 500;
  int max_backtracks = 50;
  double tolerance = 1e-6;
  GradientRoute route = GradientRoute::discrete;
  std::function<void(const Evaluation&)> observer;  // sees every forward evaluation, trial steps included
};

class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptResult {
  Control control;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_history;
  std::vector<double> residual_history;
  double stationarity_residual = std::numeric_limits<double>::quiet_NaN();
  double sparsity_fraction_1 = std::numeric_limits<double>::quiet_NaN();  // NaN when u1 has no free variables
  double sparsity_fraction_2 = std::numeric_limits<double>::quiet_NaN();
  StateTrajectory state;
  AdjointTrajectory adjoint;
  ReducedGradient gradient;
};

inline double zero_fraction(const Vector& v, double threshold = 1e-12) {
  if (v.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>((v.array().abs() <= threshold).count()) / static_cast<double>(v.size());
}

/// Proximal projected gradient with monotone backtracking:
///   u+ = prox_{gamma kappa |.| + box}(u - gamma (d0 + b3 u)),
/// accepted when total(u+) <= total(u) - c/gamma |u+ - u|^2. Stationarity is
/// measured with gamma = 1/b3, where the prox fixed point is the pointwise
/// projection formula.
inline OptResult optimize(const ControlProblem& prob, const Control& initial, const OptimizerOptions& opts = {}) {
  const double b3 = prob.cost.b3;
  const double kappa = prob.cost.kappa();
  const double step0 = opts.step0 > 0.0 ? opts.step0 : 1.0 / b3;
  const auto lay = layout_of(initial.parametrization, prob.grid, prob.time);

  OptResult res;
  Control u = prox_l1_box(initial, 0.0, prob.box);
  auto eval = [&](const Control& c) {
    Evaluation e = evaluate(prob, c);
    if (opts.observer) opts.observer(e);
    return e;
  };
  Evaluation ev = eval(u);
  AdjointTrajectory adj;
  ReducedGradient grad = reduced_gradient(prob, u, ev.state, opts.route, &adj);
  res.cost_history.push_back(ev.cost.total);
  double gamma = step0;

  for (int k = 0;; ++k) {
    const double r = stationarity_residual(u, grad, kappa, prob.box, 1.0 / b3, lay);
    res.residual_history.push_back(r);
    res.iterations = k;
    if (r <= opts.tolerance) {
      res.converged = true;
      break;
    }
    if (k >= opts.max_iterations) break;

    bool accepted = false;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      const Control trial =
          prox_l1_box(u.with_values(u.first - gamma * grad.g1, u.second - gamma * grad.g2), gamma * kappa, prob.box);
      const Control step = u.with_values(trial.first - u.first, trial.second - u.second);
      const double dist2 = control_inner(lay, step, step);
      Evaluation trial_ev = eval(trial);
      if (trial_ev.cost.total <= ev.cost.total - opts.sufficient_decrease / gamma * dist2) {
        u = trial;
        ev = std::move(trial_ev);
        accepted = true;
        break;
      }
      gamma *= opts.backtrack;
    }
    if (!accepted)
      throw OptimizationError("optimize: no sufficient decrease after " + std::to_string(opts.max_backtracks) +
                              " backtracks at iteration " + std::to_string(k));
    res.cost_history.push_back(ev.cost.total);
    grad = reduced_gradient(prob, u, ev.state, opts.route, &adj);
    gamma = std::min(step0, gamma / opts.backtrack);
  }

  res.stationarity_residual = res.residual_history.back();
  res.sparsity_fraction_1 = zero_fraction(u.first);
  res.sparsity_fraction_2 = zero_fraction(u.second);
  res.control = std::move(u);
  res.state = std::move(ev.state);
  res.adjoint = std::move(adj);
  res.gradient = std::move(grad);
  return res;
}

/// Predicted zeros from the dual inequalities |d0| <= kappa against actual
/// zeros |u| <= 1e-12, with a fuzz band | |d0| - kappa | <= eps excluded.
struct SparsityMap {
  std::vector<std::uint8_t> predicted1, actual1, excluded1;
  std::vector<std::uint8_t> predicted2, actual2, excluded2;
  long considered = 0;
  long agreeing = 0;
  double agreement = 1.0;  // agreeing / considered
  double band = 0.0;
};

inline SparsityMap sparsity_map(const ReducedGradient& dual, const Control& u, double kappa, double fuzz_relative = 1e-3) {
  if (dual.g1.size() != u.first.size() || dual.g2.size() != u.second.size())
    throw std::invalid_argument("sparsity_map: dual/control shape mismatch");
  SparsityMap map;
  map.band = kappa > 0.0 ? fuzz_relative * kappa : 0.0;  // degenerate kappa = 0 disables the band
  auto fill = [&](const Vector& d, const Vector& v, auto& pred, auto& act, auto& exc) {
    pred.resize(v.size());
    act.resize(v.size());
    exc.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double mag = std::abs(d[i]);
      pred[i] = kappa > 0.0 ? mag <= kappa : mag == 0.0;
      act[i] = std::abs(v[i]) <= 1e-12;
      exc[i] = kappa > 0.0 && std::abs(mag - kappa) <= map.band;
      if (!exc[i]) {
        ++map.considered;
        if (pred[i] == act[i]) ++map.agreeing;
      }
    }
  };
  fill(dual.g1, u.first, map.predicted1, map.actual1, map.excluded1);
  fill(dual.g2, u.second, map.predicted2, map.actual2, map.excluded2);
  map.agreement = map.considered ? static_cast<double>(map.agreeing) / map.considered : 1.0;
  return map;
}

inline SparsityMap sparsity_map(const StateTrajectory& base, const AdjointTrajectory& adj, const Control& u,
                                const CostSpec& cost, const Model& m, const TimeGrid& tg, double fuzz_relative = 1e-3) {
  return sparsity_map(dual_representer(adj, base, u, m, tg), u, cost.kappa(), fuzz_relative);
}

}  // namespace tumorctl
