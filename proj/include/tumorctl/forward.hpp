#pragma once

// Semi-implicit time stepping of the relaxed state system
//
//   alpha mu_tt + phi_t - Lap mu = P(phi)(sigma + chi(1-phi) - mu) - h(phi) u1
//   tau phi_t - Lap phi + F'(phi) = mu + chi sigma
//   sigma_t - Lap sigma = -chi Lap phi - P(phi)(sigma + chi(1-phi) - mu) + u2
//
// with homogeneous Neumann data. Each step advances phi (implicit diffusion,
// Newton on F'), then (mu, mu_t) as a first-order system, then sigma.

#include "tumorctl/control.hpp"
#include "tumorctl/grid.hpp"
#include "tumorctl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tumorctl {

/// Raised when a time stepper fails; carries the offending step index.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, int step) : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct InitialData {
  Field mu0;
  Field mu0_prime;
  Field phi0;
  Field sigma0;

  /// Checks shapes, finiteness and phi0 strictly inside the potential domain.
  void validate(const PotentialSpec& pot) const {
    for (const Field* f : {&mu0, &mu0_prime, &phi0, &sigma0}) {
      require_same_grid(f->grid, mu0.grid, "initial data");
      if (!f->finite()) throw std::invalid_argument("initial data: non-finite value");
    }
    if (phi0.values.minCoeff() <= pot.lower() || phi0.values.maxCoeff() >= pot.upper())
      throw std::invalid_argument("initial data: phi0 must lie strictly inside the potential domain");
  }
};

struct StateRecord {
  Field mu;
  Field mu_t;
  Field phi;
  Field sigma;
};

struct StateTrajectory {
  std::vector<StateRecord> records;
  int max_newton_iterations = 0;

  const Grid& grid() const { return records.front().phi.grid; }
  int steps() const { return static_cast<int>(records.size()) - 1; }
};

namespace detail {

template <class Fn>
Vector map_values(const Vector& v, Fn&& f) {
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = f(v[i]);
  return out;
}

// Proliferation source P(phi)(sigma + chi(1-phi) - mu).
inline Vector proliferation_source(const Model& m, const Vector& phi, const Vector& sigma, const Vector& mu) {
  const double chi = m.params.chi;
  Vector out(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i)
    out[i] = proliferation(m.nonlinearity, phi[i]) * (sigma[i] + chi * (1.0 - phi[i]) - mu[i]);
  return out;
}

}  // namespace detail

/// Implicit step of the hyperbolic block alpha v_t = Lap mu + source,
/// mu_t = v, with v^{n+1} taken implicitly; `op` must be (alpha/dt - dt Lap).
inline std::pair<Vector, Vector> wave_step(const ImplicitOperator& op, const Grid& g, const Vector& mu, const Vector& v,
                                           const Vector& source, double alpha, double dt) {
  Vector v_new = op.solve((alpha / dt) * v + laplacian(g, mu) + source);
  Vector mu_new = mu + dt * v_new;
  return {std::move(mu_new), std::move(v_new)};
}

/// One time step with cached constant implicit operators. Newton on the
/// phi-equation stops at a max-norm residual of 1e-10 and then takes one
/// polishing step so the map is smooth to round-off.
class StateStepper {
 public:
  static constexpr int kMaxNewton = 50;
  static constexpr double kNewtonTol = 1e-10;

  StateStepper(const Grid& g, const Model& m, double dt)
      : grid_(g), model_(m), dt_(dt), wave_(g, m.params.alpha / dt, dt), heat_(g, 1.0 / dt, 1.0) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_state: dt must be positive");
  }

  /// Advances `prev` by one step; `newton_iterations` receives the count.
  StateRecord step(const StateRecord& prev, const Field& u1, const Field& u2, int step_index = 0,
                   int* newton_iterations = nullptr) const {
    const double dt = dt_;
    const auto& p = model_.params;
    const Vector& mu = prev.mu.values;
    const Vector& v = prev.mu_t.values;
    const Vector& phi = prev.phi.values;
    const Vector& sigma = prev.sigma.values;

    int its = 0;
    Vector phi_new = solve_phase(phi, mu + p.chi * sigma, step_index, its);
    if (newton_iterations) *newton_iterations = its;

    const Vector rsig = detail::proliferation_source(model_, phi, sigma, mu);
    Vector r_mu = rsig;
    for (Eigen::Index i = 0; i < r_mu.size(); ++i) r_mu[i] -= truncation(model_.nonlinearity, phi[i]) * u1.values[i];

    auto [mu_new, v_new] = wave_step(wave_, grid_, mu, v, r_mu - (phi_new - phi) / dt, p.alpha, dt);

    const Vector rhs_s = sigma / dt - p.chi * laplacian(grid_, phi_new) - rsig + u2.values;
    Vector sigma_new = heat_.solve(rhs_s);

    StateRecord out{Field(grid_, std::move(mu_new)), Field(grid_, std::move(v_new)), Field(grid_, std::move(phi_new)),
                    Field(grid_, std::move(sigma_new))};
    if (!out.mu.finite() || !out.mu_t.finite() || !out.phi.finite() || !out.sigma.finite())
      throw SolverError("forward: non-finite state", step_index);
    return out;
  }

  const Grid& grid() const { return grid_; }
  const Model& model() const { return model_; }
  double dt() const { return dt_; }
  const ImplicitOperator& wave_operator() const { return wave_; }
  const ImplicitOperator& heat_operator() const { return heat_; }

 private:
  // Solves tau (x - phi)/dt - Lap x + F'(x) = source.
  Vector solve_phase(const Vector& phi, const Vector& source, int step_index, int& its) const {
    const auto& pot = model_.potential;
    const double shift = model_.params.tau / dt_;
    const bool bounded = pot.kind == PotentialKind::logarithmic;
    const double edge = bounded ? 1.0 - std::max(pot.safeguard_eps, 0.0) : 0.0;

    auto residual = [&](const Vector& x) {
      return Vector(shift * (x - phi) - laplacian(grid_, x) + detail::map_values(x, [&](double r) { return potential(pot, r, 1); }) -
                    source);
    };

    Vector x = phi;
    bool polish = false;
    for (its = 0; its < kMaxNewton;) {
      const Vector res = residual(x);
      if (!res.allFinite()) throw SolverError("forward: non-finite Newton residual", step_index);
      if (!polish && res.lpNorm<Eigen::Infinity>() <= kNewtonTol) polish = true;
      const Vector curvature = detail::map_values(x, [&](double r) { return potential(pot, r, 2); });
      const ImplicitOperator jac(grid_, shift, 1.0, &curvature);
      const Vector delta = jac.solve(-res);
      ++its;
      double lambda = 1.0;
      if (bounded) {
        for (int halvings = 0; halvings < 60 && ((x + lambda * delta).cwiseAbs().maxCoeff() >= edge); ++halvings)
          lambda *= 0.5;
      }
      x += lambda * delta;
      if (polish) return x;
    }
    throw SolverError("forward: Newton did not converge within " + std::to_string(kMaxNewton) + " iterations", step_index);
  }

  Grid grid_;
  Model model_;
  double dt_;
  ImplicitOperator wave_;
  ImplicitOperator heat_;
};

inline StateRecord step_state(const StateRecord& prev, const Field& u1, const Field& u2, const Model& m, double dt,
                              int* newton_iterations = nullptr) {
  return StateStepper(prev.phi.grid, m, dt).step(prev, u1, u2, 0, newton_iterations);
}

/// Integrates the state system over the time grid for expanded controls.
inline StateTrajectory solve_forward(const InitialData& init, const ControlPair& u, const Model& m, const TimeGrid& tg) {
  tg.validate();
  init.validate(m.potential);
  const Grid& g = init.phi0.grid;
  if (static_cast<int>(u.u1.size()) != tg.steps || static_cast<int>(u.u2.size()) != tg.steps)
    throw std::invalid_argument("solve_forward: control must have one slice per step");
  const StateStepper stepper(g, m, tg.dt());
  StateTrajectory traj;
  traj.records.reserve(tg.steps + 1);
  traj.records.push_back({init.mu0, init.mu0_prime, init.phi0, init.sigma0});
  for (int n = 0; n < tg.steps; ++n) {
    int its = 0;
    traj.records.push_back(stepper.step(traj.records.back(), u.u1[n], u.u2[n], n, &its));
    traj.max_newton_iterations = std::max(traj.max_newton_iterations, its);
  }
  return traj;
}

inline StateTrajectory solve_forward(const InitialData& init, const Control& c, const Model& m, const TimeGrid& tg) {
  return solve_forward(init, expand(c, tg, init.phi0.grid), m, tg);
}

struct SeparationReport {
  double r_star_observed = 0.0;   // min phi over the cylinder
  double r_upper_observed = 0.0;  // max phi over the cylinder
  double margin_to_domain = 0.0;  // +inf when the potential domain is the real line
};

inline SeparationReport check_separation(const StateTrajectory& traj, const PotentialSpec& pot) {
  SeparationReport rep{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
  for (const auto& rec : traj.records) {
    rep.r_star_observed = std::min(rep.r_star_observed, rec.phi.values.minCoeff());
    rep.r_upper_observed = std::max(rep.r_upper_observed, rec.phi.values.maxCoeff());
  }
  rep.margin_to_domain = std::min(rep.r_star_observed - pot.lower(), pot.upper() - rep.r_upper_observed);
  return rep;
}

struct StabilityNorms {
  double sup_mu_t = 0.0;       // sup_t |mu_t|_L2
  double sup_mu_h1 = 0.0;      // sup_t |mu|_H1
  double sup_phi_inf = 0.0;    // sup over the cylinder of |phi|
  double sup_sigma_h1 = 0.0;   // sup_t |sigma|_H1
  double l2_phi_t_h1 = 0.0;    // (sum_n dt |(phi^{n+1}-phi^n)/dt|_H1^2)^(1/2)
};

inline StabilityNorms stability_norms(const StateTrajectory& traj, const TimeGrid& tg) {
  StabilityNorms out;
  const Grid& g = traj.grid();
  const double dt = tg.dt();
  double acc = 0.0;
  for (std::size_t n = 0; n < traj.records.size(); ++n) {
    const auto& r = traj.records[n];
    out.sup_mu_t = std::max(out.sup_mu_t, l2_norm(r.mu_t));
    out.sup_mu_h1 = std::max(out.sup_mu_h1, h1_norm(r.mu));
    out.sup_phi_inf = std::max(out.sup_phi_inf, r.phi.values.cwiseAbs().maxCoeff());
    out.sup_sigma_h1 = std::max(out.sup_sigma_h1, h1_norm(r.sigma));
    if (n > 0) {
      const Vector rate = (r.phi.values - traj.records[n - 1].phi.values) / dt;
      const double hn = h1_norm(g, rate);
      acc += dt * hn * hn;
    }
  }
  out.l2_phi_t_h1 = std::sqrt(acc);
  return out;
}

/// max_n ( |d mu|_L2 + |d phi|_H1 + |d sigma|_L2 ) between two trajectories.
inline double trajectory_distance(const StateTrajectory& a, const StateTrajectory& b) {
  if (a.records.size() != b.records.size()) throw std::invalid_argument("trajectory_distance: length mismatch");
  const Grid& g = a.grid();
  double best = 0.0;
  for (std::size_t n = 0; n < a.records.size(); ++n) {
    const auto& x = a.records[n];
    const auto& y = b.records[n];
    best = std::max(best, l2_norm(g, x.mu.values - y.mu.values) + h1_norm(g, x.phi.values - y.phi.values) +
                              l2_norm(g, x.sigma.values - y.sigma.values));
  }
  return best;
}

}  // namespace tumorctl
