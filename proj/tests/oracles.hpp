#pragma once

// Independent reference integrators for the spatially homogeneous reduction,
// where every Laplacian vanishes and each cell follows the same ODE system.

#include "tumorctl/model.hpp"

#include <array>
#include <functional>
#include <vector>

namespace oracles {

using State = std::array<double, 4>;  // mu, mu', phi, sigma

/// Right-hand side of
///   alpha mu'' + phi' = P(phi)(sigma + chi(1-phi) - mu) - h(phi) u1
///   tau phi' + F'(phi) = mu + chi sigma
///   sigma' = -P(phi)(sigma + chi(1-phi) - mu) + u2
inline State state_rhs(const tumorctl::Model& m, const State& y, double u1, double u2) {
  const auto& p = m.params;
  const double mu = y[0], v = y[1], phi = y[2], sigma = y[3];
  const double react = tumorctl::proliferation(m.nonlinearity, phi) * (sigma + p.chi * (1.0 - phi) - mu);
  const double phi_t = (mu + p.chi * sigma - tumorctl::potential(m.potential, phi, 1)) / p.tau;
  const double v_t = (react - tumorctl::truncation(m.nonlinearity, phi) * u1 - phi_t) / p.alpha;
  return {v, v_t, phi_t, -react + u2};
}

template <class Rhs>
State rk4_step(const Rhs& f, const State& y, double h) {
  auto axpy = [](const State& a, double s, const State& b) {
    State out;
    for (int i = 0; i < 4; ++i) out[i] = a[i] + s * b[i];
    return out;
  };
  const State k1 = f(y);
  const State k2 = f(axpy(y, 0.5 * h, k1));
  const State k3 = f(axpy(y, 0.5 * h, k2));
  const State k4 = f(axpy(y, h, k3));
  State out;
  for (int i = 0; i < 4; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

/// Values at t = k * sample_every * h for k = 0..steps / sample_every.
inline std::vector<State> integrate_state(const tumorctl::Model& m, State y, double u1, double u2, double t_final, int steps,
                                          int sample_every) {
  const double h = t_final / steps;
  auto f = [&](const State& s) { return state_rhs(m, s, u1, u2); };
  std::vector<State> out{y};
  for (int n = 1; n <= steps; ++n) {
    y = rk4_step(f, y, h);
    if (n % sample_every == 0) out.push_back(y);
  }
  return out;
}

/// Dual state (p, p', q, r) of the homogeneous adjoint system
///   alpha p'' = q - P(phi)(p - r)
///   -tau q' - p' = (P'(phi) M - chi P(phi))(p - r) - F''(phi) q - h'(phi) u1 p + b1 (phi - phi_Q)
///   -r' = chi q + P(phi)(p - r),  M = sigma + chi(1 - phi) - mu.
using Dual = std::array<double, 4>;

inline State dual_rhs(const tumorctl::Model& m, const State& y, const State& x, double u1, double b1, double phi_Q) {
  const auto& prm = m.params;
  const double mu = x[0], phi = x[2], sigma = x[3];
  const double p = y[0], w = y[1], q = y[2], r = y[3];
  const double P = tumorctl::proliferation(m.nonlinearity, phi);
  const double Pm = tumorctl::proliferation(m.nonlinearity, phi, 1) * (sigma + prm.chi * (1.0 - phi) - mu);
  const double rhs = (Pm - prm.chi * P) * (p - r) - tumorctl::potential(m.potential, phi, 2) * q -
                     tumorctl::truncation(m.nonlinearity, phi, 1) * u1 * p + b1 * (phi - phi_Q);
  return {w, (q - P * (p - r)) / prm.alpha, -(w + rhs) / prm.tau, -(prm.chi * q + P * (p - r))};
}

/// Backward RK4 for the dual system over `states` (forward RK4 samples on a
/// uniform grid of 2 * steps intervals, so midpoints are exact nodes).
/// Returns dual values at the `steps + 1` coarse nodes.
inline std::vector<Dual> integrate_dual(const tumorctl::Model& m, const std::vector<State>& states, double u1, double b1,
                                        double b2, double phi_Q, double phi_Omega, double t_final) {
  const int steps = static_cast<int>(states.size() - 1) / 2;
  const double h = t_final / steps;
  std::vector<Dual> out(steps + 1);
  Dual y{0.0, 0.0, b2 / m.params.tau * (states.back()[2] - phi_Omega), 0.0};
  out[steps] = y;
  for (int n = steps; n > 0; --n) {
    auto f = [&](const State& s, const State& x) { return dual_rhs(m, s, x, u1, b1, phi_Q); };
    const State& x0 = states[2 * n];
    const State& xm = states[2 * n - 1];
    const State& x1 = states[2 * n - 2];
    auto axpy = [](const State& a, double s, const State& b) {
      State o;
      for (int i = 0; i < 4; ++i) o[i] = a[i] + s * b[i];
      return o;
    };
    const State k1 = f(y, x0);
    const State k2 = f(axpy(y, -0.5 * h, k1), xm);
    const State k3 = f(axpy(y, -0.5 * h, k2), xm);
    const State k4 = f(axpy(y, -h, k3), x1);
    for (int i = 0; i < 4; ++i) y[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    out[n - 1] = y;
  }
  return out;
}

}  // namespace oracles
