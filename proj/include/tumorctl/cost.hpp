#pragma once

// Tracking cost with Tikhonov and L1 terms:
//   J = b1/2 int_Q |phi - phi_Q|^2 + b2/2 int_Omega |phi(T) - phi_Omega|^2 + b3/2 |u|^2,
//   total = J + kappa G(u).
// Quadrature: state slices 1..N with weight dt over Q, controls per step.

#include "tumorctl/control.hpp"
#include "tumorctl/forward.hpp"

#include <stdexcept>

namespace tumorctl {

struct CostSpec {
  double b1 = 0.0;
  double b2 = 0.0;
  double b3 = 1.0;
  SpaceTimeField target_Q;  // one slice per state index 0..N
  Field target_Omega;
  SparsitySpec sparsity;

  double kappa() const { return sparsity.effective_kappa(); }

  void validate(const Grid& g, const TimeGrid& tg) const {
    if (b1 < 0.0 || b2 < 0.0) throw std::invalid_argument("cost: b1, b2 must be nonnegative");
    if (!(b3 > 0.0)) throw std::invalid_argument("cost: b3 must be positive");
    if (sparsity.kappa < 0.0) throw std::invalid_argument("cost: kappa must be nonnegative");
    if (static_cast<int>(target_Q.size()) != tg.steps + 1) throw std::invalid_argument("cost: target_Q needs N+1 slices");
    for (const auto& s : target_Q) require_same_grid(s.grid, g, "cost target_Q");
    require_same_grid(target_Omega.grid, g, "cost target_Omega");
  }

  /// Targets constant in time.
  static CostSpec tracking(double b1, double b2, double b3, double kappa, const Field& phi_Q, const Field& phi_Omega,
                           const TimeGrid& tg) {
    return {b1, b2, b3, constant_in_time(phi_Q, tg.steps + 1), phi_Omega, {SparsityKind::l1_full, kappa}};
  }
};

struct CostValue {
  double smooth = 0.0;    // J
  double sparsity = 0.0;  // G(u)
  double total = 0.0;     // J + kappa G(u)
};

inline CostValue cost_eval(const StateTrajectory& traj, const Control& u, const CostSpec& cost, const TimeGrid& tg) {
  const Grid& g = traj.grid();
  if (traj.steps() != tg.steps) throw std::invalid_argument("cost_eval: trajectory length mismatch");
  cost.validate(g, tg);
  const auto lay = layout_of(u.parametrization, g, tg);
  if (u.first.size() != lay.first_size || u.second.size() != lay.second_size)
    throw std::invalid_argument("cost_eval: control shape mismatch");
  const double dt = tg.dt();
  double track = 0.0;
  for (int n = 1; n <= tg.steps; ++n) {
    const Vector d = traj.records[n].phi.values - cost.target_Q[n].values;
    track += dt * inner(g, d, d);
  }
  const Vector dT = traj.records.back().phi.values - cost.target_Omega.values;
  CostValue v;
  v.smooth = 0.5 * cost.b1 * track + 0.5 * cost.b2 * inner(g, dT, dT) + 0.5 * cost.b3 * control_inner(lay, u, u);
  v.sparsity = sparsity_value(cost.sparsity, u, lay);
  v.total = v.smooth + cost.kappa() * v.sparsity;
  return v;
}

}  // namespace tumorctl
