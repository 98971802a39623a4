#pragma once

// Dual variables (p, q, r) along a base trajectory.
//
// solve_adjoint integrates the continuous adjoint system backward in time
// with the mirror of the forward scheme:
//
//   alpha p_tt - Lap p = q - P(phi)(p - r)
//   -tau q_t - p_t - Lap q = -chi Lap r + (P'(phi)(sigma + chi(1-phi) - mu) - chi P(phi))(p - r)
//                            - F''(phi) q - h'(phi) u1 p + b1 (phi - phi_Q)
//   -r_t - Lap r = chi q + P(phi)(p - r)
//   p(T) = p_t(T) = r(T) = 0,  q(T) = (b2/tau)(phi(T) - phi_Omega).
//
// solve_discrete_adjoint is the exact transpose of solve_linearized, so the
// gradient it yields is the gradient of the discrete reduced cost.

#include "tumorctl/cost.hpp"
#include "tumorctl/forward.hpp"
#include "tumorctl/linearized.hpp"

#include <stdexcept>
#include <vector>

namespace tumorctl {

struct AdjointRecord {
  Field p;
  Field p_t;
  Field q;
  Field r;
};

/// Record n holds the dual fields at t_n. Control slice n (acting on the
/// step t_n -> t_{n+1}) pairs with record n + pairing_offset.
struct AdjointTrajectory {
  std::vector<AdjointRecord> records;
  int pairing_offset = 0;
};

namespace detail {

inline void check_base(const StateTrajectory& base, const ControlPair& u, const TimeGrid& tg) {
  if (base.records.empty() || base.steps() != tg.steps) throw std::invalid_argument("adjoint: base trajectory incomplete");
  if (static_cast<int>(u.u1.size()) != tg.steps) throw std::invalid_argument("adjoint: control length mismatch");
}

inline void check_finite(const AdjointRecord& rec, int n) {
  if (!rec.p.finite() || !rec.p_t.finite() || !rec.q.finite() || !rec.r.finite())
    throw SolverError("adjoint: non-finite dual iterate", n);
}

}  // namespace detail

inline AdjointTrajectory solve_adjoint(const StateTrajectory& base, const ControlPair& base_u, const CostSpec& cost,
                                       const Model& m, const TimeGrid& tg) {
  detail::check_base(base, base_u, tg);
  const Grid& g = base.grid();
  cost.validate(g, tg);
  const int steps = tg.steps;
  const double dt = tg.dt();
  const auto& prm = m.params;
  const ImplicitOperator wave(g, prm.alpha / dt, dt);
  const ImplicitOperator heat(g, 1.0 / dt, 1.0);

  AdjointTrajectory adj;
  adj.records.resize(steps + 1);
  adj.pairing_offset = 1;  // the implicit step applies slice n at t_{n+1}
  adj.records[steps] = {Field(g), Field(g),
                        Field(g, Vector((cost.b2 / prm.tau) * (base.records[steps].phi.values - cost.target_Omega.values))),
                        Field(g)};

  for (int n = steps - 1; n >= 0; --n) {
    const auto& next = adj.records[n + 1];
    const auto& st = base.records[n];
    // Coefficients at the same index as the record being produced.
    const auto c = detail::step_coefficients(m, st, st, base_u.u1[n]);
    const Vector& p1 = next.p.values;
    const Vector& q1 = next.q.values;
    const Vector& r1 = next.r.values;

    Vector r = heat.solve(r1 / dt + prm.chi * q1 + (c.P.array() * (p1 - r1).array()).matrix());

    // Reversed-time hyperbolic block: with w = -p_t it is the forward wave step.
    const Vector src = q1 - (c.P.array() * (p1 - r).array()).matrix();
    auto [p, w] = wave_step(wave, g, p1, Vector(-next.p_t.values), src, prm.alpha, dt);

    const Vector diff = p - r;
    const Vector rhs_q = (prm.tau / dt) * q1 + (p1 - p) / dt - prm.chi * laplacian(g, r) +
                         ((c.Pm - prm.chi * c.P).array() * diff.array()).matrix() - (c.hu.array() * p.array()).matrix() +
                         cost.b1 * (st.phi.values - cost.target_Q[n].values);
    const ImplicitOperator qop(g, prm.tau / dt, 1.0, &c.curv);
    Vector q = qop.solve(rhs_q);

    adj.records[n] = {Field(g, std::move(p)), Field(g, Vector(-w)), Field(g, std::move(q)), Field(g, std::move(r))};
    detail::check_finite(adj.records[n], n);
  }
  return adj;
}

/// Reverse sweep through the discrete linearized scheme. Record n (< N)
/// stores p = b/dt, r = a/dt, q = c/dt where a, b, c are the multipliers of
/// the sigma-, mu- and phi-solves of step n -> n+1; then
///   DJ[h] = sum_n dt ( -h(phi^n) p^n h1^n + r^n h2^n ) + b3 (u, h)
/// holds exactly for the discrete reduced cost.
inline AdjointTrajectory solve_discrete_adjoint(const StateTrajectory& base, const ControlPair& base_u, const CostSpec& cost,
                                                const Model& m, const TimeGrid& tg) {
  detail::check_base(base, base_u, tg);
  const Grid& g = base.grid();
  cost.validate(g, tg);
  const int steps = tg.steps;
  const double dt = tg.dt();
  const auto& prm = m.params;
  const ImplicitOperator wave(g, prm.alpha / dt, dt);
  const ImplicitOperator heat(g, 1.0 / dt, 1.0);

  AdjointTrajectory adj;
  adj.records.resize(steps + 1);
  const Vector dT = base.records[steps].phi.values - cost.target_Omega.values;
  adj.records[steps] = {Field(g), Field(g), Field(g, Vector((cost.b2 / prm.tau) * dT)), Field(g)};

  // Sensitivities of the cost with respect to (eta, zeta, psi, xi) at level n+1.
  const int size = g.size();
  Vector e_bar = Vector::Zero(size), z_bar = Vector::Zero(size), x_bar = Vector::Zero(size);
  Vector s_bar = cost.b1 * dt * (base.records[steps].phi.values - cost.target_Q[steps].values) + cost.b2 * dT;

  for (int n = steps - 1; n >= 0; --n) {
    const auto c = detail::step_coefficients(m, base.records[n], base.records[n + 1], base_u.u1[n]);

    const Vector a = heat.solve(x_bar);
    s_bar -= prm.chi * laplacian(g, a);
    z_bar += dt * e_bar;
    const Vector b = wave.solve(z_bar);
    s_bar -= b / dt;
    const ImplicitOperator jac(g, prm.tau / dt, 1.0, &c.curv);
    const Vector cc = jac.solve(s_bar);

    const Vector e_new = e_bar + laplacian(g, b) - (c.P.array() * b.array()).matrix() + (c.P.array() * a.array()).matrix() + cc;
    const Vector z_new = (prm.alpha / dt) * b;
    Vector s_new = ((c.Pm - prm.chi * c.P - c.hu).array() * b.array()).matrix() + b / dt +
                   ((prm.chi * c.P - c.Pm).array() * a.array()).matrix() + (prm.tau / dt) * cc;
    const Vector x_new = (c.P.array() * b.array()).matrix() + a / dt - (c.P.array() * a.array()).matrix() + prm.chi * cc;
    if (n >= 1) s_new += cost.b1 * dt * (base.records[n].phi.values - cost.target_Q[n].values);

    adj.records[n] = {Field(g, Vector(b / dt)), Field(g), Field(g, Vector(cc / dt)), Field(g, Vector(a / dt))};
    detail::check_finite(adj.records[n], n);
    e_bar = e_new;
    z_bar = z_new;
    s_bar = std::move(s_new);
    x_bar = x_new;
  }
  for (int n = 0; n < steps; ++n)
    adj.records[n].p_t = Field(g, Vector((adj.records[n + 1].p.values - adj.records[n].p.values) / dt));
  return adj;
}

struct DualBounds {
  double sup_p = 0.0;  // |p|_{L-inf(Q)}
  double sup_r = 0.0;  // |r|_{L-inf(Q)}
};

inline DualBounds dual_bound_report(const AdjointTrajectory& adj) {
  DualBounds d;
  for (const auto& rec : adj.records) {
    d.sup_p = std::max(d.sup_p, rec.p.values.cwiseAbs().maxCoeff());
    d.sup_r = std::max(d.sup_r, rec.r.values.cwiseAbs().maxCoeff());
  }
  return d;
}

/// max over control slices of |h(phi) p| and |r|: the threshold above which
/// kappa forces the zero control.
inline DualBounds weighted_dual_bounds(const AdjointTrajectory& adj, const StateTrajectory& base, const Model& m) {
  DualBounds d;
  const int steps = base.steps();
  for (int n = adj.pairing_offset; n < steps + adj.pairing_offset; ++n) {
    const auto& phi = base.records[n].phi.values;
    for (Eigen::Index i = 0; i < phi.size(); ++i) {
      d.sup_p = std::max(d.sup_p, std::abs(truncation(m.nonlinearity, phi[i]) * adj.records[n].p.values[i]));
      d.sup_r = std::max(d.sup_r, std::abs(adj.records[n].r.values[i]));
    }
  }
  return d;
}

}  // namespace tumorctl
