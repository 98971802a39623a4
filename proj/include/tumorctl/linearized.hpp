#pragma once

// Exact derivative of the discrete forward map with respect to the control:
// every sub-step of StateStepper is differentiated with coefficients frozen
// on the stored base trajectory. Also the Taylor-remainder test built on it.

#include "tumorctl/forward.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tumorctl {

struct LinearizedRecord {
  Field eta;
  Field eta_t;
  Field psi;
  Field xi;
};

struct LinearizedTrajectory {
  std::vector<LinearizedRecord> records;
};

namespace detail {

// Frozen pointwise coefficients of step n -> n+1.
struct StepCoefficients {
  Vector P;        // P(phi^n)
  Vector Pm;       // P'(phi^n) (sigma + chi(1-phi) - mu)^n
  Vector h;        // h(phi^n)
  Vector hu;       // h'(phi^n) u1^n
  Vector curv;     // F''(phi^{n+1})
};

inline StepCoefficients step_coefficients(const Model& m, const StateRecord& cur, const StateRecord& next, const Field& u1) {
  const Eigen::Index n = cur.phi.values.size();
  StepCoefficients c{Vector(n), Vector(n), Vector(n), Vector(n), Vector(n)};
  const double chi = m.params.chi;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double phi = cur.phi.values[i];
    c.P[i] = proliferation(m.nonlinearity, phi);
    c.Pm[i] = proliferation(m.nonlinearity, phi, 1) * (cur.sigma.values[i] + chi * (1.0 - phi) - cur.mu.values[i]);
    c.h[i] = truncation(m.nonlinearity, phi);
    c.hu[i] = truncation(m.nonlinearity, phi, 1) * u1.values[i];
    c.curv[i] = potential(m.potential, next.phi.values[i], 2);
  }
  return c;
}

}  // namespace detail

/// Linearized trajectory of the discrete scheme around `base` (computed with
/// control `base_u`) in direction `increment`.
inline LinearizedTrajectory solve_linearized(const StateTrajectory& base, const ControlPair& base_u,
                                             const ControlPair& increment, const Model& m, const TimeGrid& tg) {
  const int steps = tg.steps;
  if (base.steps() != steps) throw std::invalid_argument("solve_linearized: base trajectory length mismatch");
  if (static_cast<int>(increment.u1.size()) != steps || static_cast<int>(increment.u2.size()) != steps ||
      static_cast<int>(base_u.u1.size()) != steps)
    throw std::invalid_argument("solve_linearized: increment length mismatch");
  const Grid& g = base.grid();
  const double dt = tg.dt();
  const auto& prm = m.params;
  const ImplicitOperator wave(g, prm.alpha / dt, dt);
  const ImplicitOperator heat(g, 1.0 / dt, 1.0);

  LinearizedTrajectory out;
  out.records.reserve(steps + 1);
  out.records.push_back({Field(g), Field(g), Field(g), Field(g)});
  for (int n = 0; n < steps; ++n) {
    const auto& cur = out.records.back();
    const auto c = detail::step_coefficients(m, base.records[n], base.records[n + 1], base_u.u1[n]);
    const Vector& eta = cur.eta.values;
    const Vector& zeta = cur.eta_t.values;
    const Vector& psi = cur.psi.values;
    const Vector& xi = cur.xi.values;

    const ImplicitOperator jac(g, prm.tau / dt, 1.0, &c.curv);
    Vector psi_new = jac.solve((prm.tau / dt) * psi + eta + prm.chi * xi);

    const Vector dsig = (c.P.array() * (xi - prm.chi * psi - eta).array() + c.Pm.array() * psi.array()).matrix();
    const Vector dmu = dsig - (c.h.array() * increment.u1[n].values.array()).matrix() - (c.hu.array() * psi.array()).matrix();

    Vector zeta_new = wave.solve((prm.alpha / dt) * zeta + laplacian(g, eta) + dmu - (psi_new - psi) / dt);
    Vector eta_new = eta + dt * zeta_new;

    Vector xi_new = heat.solve(xi / dt - prm.chi * laplacian(g, psi_new) - dsig + increment.u2[n].values);

    out.records.push_back({Field(g, std::move(eta_new)), Field(g, std::move(zeta_new)), Field(g, std::move(psi_new)),
                           Field(g, std::move(xi_new))});
  }
  return out;
}

/// max_n ( |eta|_L2 + |psi|_H1 + |xi|_L2 ).
inline double trajectory_norm(const LinearizedTrajectory& lin) {
  double best = 0.0;
  for (const auto& r : lin.records)
    best = std::max(best, l2_norm(r.eta) + h1_norm(r.psi) + l2_norm(r.xi));
  return best;
}

struct TaylorResult {
  std::vector<double> t;
  std::vector<double> remainder;
  std::vector<double> local_slope;  // slope between consecutive t (NaN for the first)
  double slope = std::numeric_limits<double>::quiet_NaN();
  bool exact = false;               // all remainders vanish (zero increment)
};

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// r(t) = || S(u + t h) - S(u) - t S'(u) h || in the trajectory norm, and the
/// fitted order of r in t.
inline TaylorResult taylor_test(const InitialData& init, const ControlPair& base_u, const ControlPair& increment,
                                const Model& m, const TimeGrid& tg, const std::vector<double>& t_values) {
  const Grid& g = init.phi0.grid;
  const StateTrajectory base = solve_forward(init, base_u, m, tg);
  const LinearizedTrajectory lin = solve_linearized(base, base_u, increment, m, tg);
  TaylorResult res;
  for (double t : t_values) {
    ControlPair probe = base_u;
    for (int n = 0; n < tg.steps; ++n) {
      probe.u1[n].values += t * increment.u1[n].values;
      probe.u2[n].values += t * increment.u2[n].values;
    }
    const StateTrajectory pert = solve_forward(init, probe, m, tg);
    double r = 0.0;
    for (std::size_t n = 0; n < base.records.size(); ++n) {
      const auto& a = pert.records[n];
      const auto& b = base.records[n];
      const auto& l = lin.records[n];
      r = std::max(r, l2_norm(g, a.mu.values - b.mu.values - t * l.eta.values) +
                          h1_norm(g, a.phi.values - b.phi.values - t * l.psi.values) +
                          l2_norm(g, a.sigma.values - b.sigma.values - t * l.xi.values));
    }
    res.t.push_back(t);
    res.remainder.push_back(r);
    const std::size_t k = res.t.size();
    res.local_slope.push_back(k < 2 || r == 0.0 || res.remainder[k - 2] == 0.0
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : std::log(r / res.remainder[k - 2]) / std::log(t / res.t[k - 2]));
  }
  res.exact = std::all_of(res.remainder.begin(), res.remainder.end(), [](double r) { return r == 0.0; });
  if (!res.exact && res.t.size() >= 2) res.slope = loglog_slope(res.t, res.remainder);
  return res;
}

}  // namespace tumorctl
