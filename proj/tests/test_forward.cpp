#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tumorctl;

namespace {

ControlPair constant_controls(const Grid& g, int steps, double u1, double u2) {
  return {constant_in_time(Field(g, u1), steps), constant_in_time(Field(g, u2), steps)};
}

/// Relative sup-in-time error of (mu, phi, sigma) against oracle samples.
double oracle_error(const StateTrajectory& tr, const std::vector<oracles::State>& ref, int stride) {
  double err = 0.0, scale = 0.0;
  for (int n = 0; n <= tr.steps(); ++n) {
    const auto& y = ref[n * stride];
    const auto& r = tr.records[n];
    err = std::max(err, std::hypot(r.mu.values[0] - y[0], r.phi.values[0] - y[2], r.sigma.values[0] - y[3]));
    scale = std::max(scale, std::hypot(y[0], y[2], y[3]));
  }
  return err / scale;
}

}  // namespace

TEST(Forward, ZeroConfigurationIsFixedPoint) {
  Model m = fixtures::baseline_model();
  m.nonlinearity.p0 = 0.0;
  const Grid g = Grid::line(64);
  const TimeGrid tg{1.0, 100};
  const InitialData init{Field(g), Field(g), Field(g), Field(g)};
  const auto traj = solve_forward(init, zero_controls(g, tg), m, tg);
  ASSERT_EQ(traj.steps(), 100);
  double worst = 0.0;
  for (const auto& r : traj.records)
    worst = std::max({worst, r.mu.values.cwiseAbs().maxCoeff(), r.mu_t.values.cwiseAbs().maxCoeff(),
                      r.phi.values.cwiseAbs().maxCoeff(), r.sigma.values.cwiseAbs().maxCoeff()});
  EXPECT_LE(worst, 1e-12);
}

TEST(Forward, OneStepMatchesScalarHandSolve) {
  const Model m = fixtures::baseline_model();
  const auto& p = m.params;
  const Grid g = Grid::rectangle(5, 4);
  const double dt = 0.01, mu = 0.1, v = 0.05, phi = 0.2, sigma = 0.3, u1 = 0.2, u2 = 0.1;
  const StateRecord prev{Field(g, mu), Field(g, v), Field(g, phi), Field(g, sigma)};
  const auto next = step_state(prev, Field(g, u1), Field(g, u2), m, dt);

  // phi': tau (x - phi)/dt + x^3 - x = mu + chi sigma, monotone in x, by bisection.
  auto f = [&](double x) { return p.tau * (x - phi) / dt + x * x * x - x - (mu + p.chi * sigma); };
  double lo = -2.0, hi = 2.0;
  for (int i = 0; i < 200; ++i) (f(0.5 * (lo + hi)) > 0 ? hi : lo) = 0.5 * (lo + hi);
  const double phi1 = 0.5 * (lo + hi);
  const double t = (phi + 1.0) / 2.0, s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
  const double react = m.nonlinearity.p0 * s * (sigma + p.chi * (1.0 - phi) - mu);
  const double v1 = v + (dt / p.alpha) * (react - s * u1 - (phi1 - phi) / dt);
  const double mu1 = mu + dt * v1;
  const double sigma1 = sigma + dt * (-react + u2);
  for (int i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(next.phi.values[i], phi1, 1e-12);
    EXPECT_NEAR(next.mu_t.values[i], v1, 1e-12);
    EXPECT_NEAR(next.mu.values[i], mu1, 1e-12);
    EXPECT_NEAR(next.sigma.values[i], sigma1, 1e-12);
  }
}

TEST(Forward, HomogeneousDataMatchesRk4Oracle) {
  const Model m = fixtures::baseline_model();
  const Grid g = Grid::line(4);
  const double u1 = 0.2, u2 = 0.1;
  const auto ref = oracles::integrate_state(m, {0.1, 0.0, 0.2, 0.3}, u1, u2, 1.0, 100000, 25);
  std::vector<double> errors;
  for (int steps : {250, 500, 1000}) {
    const TimeGrid tg{1.0, steps};
    const InitialData init{Field(g, 0.1), Field(g, 0.0), Field(g, 0.2), Field(g, 0.3)};
    const auto tr = solve_forward(init, constant_controls(g, steps, u1, u2), m, tg);
    errors.push_back(oracle_error(tr, ref, 4000 / steps));
  }
  EXPECT_LE(errors.back(), 1e-3);
  EXPECT_GE(std::log2(errors[0] / errors[1]), 0.9);
  EXPECT_GE(std::log2(errors[1] / errors[2]), 0.9);
}

TEST(Forward, ImplicitWaveStepIsDissipative) {
  const Grid g = Grid::line(48);
  const double alpha = 0.7, dt = 0.02;
  const ImplicitOperator op(g, alpha / dt, dt);
  Vector mu = fixtures::cosine(g, 0.0, 1.0).values + 0.3 * fixtures::cosine(g, 0.0, 1.0).values.array().square().matrix();
  Vector v = Vector::Zero(g.size());
  const Vector zero = Vector::Zero(g.size());
  auto energy = [&] { return 0.5 * alpha * inner(g, v, v) + 0.5 * gradient_norm_squared(g, mu); };
  double prev = energy();
  for (int n = 0; n < 200; ++n) {
    std::tie(mu, v) = wave_step(op, g, mu, v, zero, alpha, dt);
    const double e = energy();
    EXPECT_LE(e, prev * (1 + 1e-14));
    prev = e;
  }
}

TEST(Forward, LogarithmicRunStaysSeparated) {
  const auto prob = fixtures::baseline_problem();
  const Model m = fixtures::logarithmic_model();
  ControlPair u{fixtures::smooth_slices(prob.grid, prob.time, 0.8, 1, 0.3),
                fixtures::smooth_slices(prob.grid, prob.time, 0.5, 2, 0.2)};
  const auto traj = solve_forward(prob.init, u, m, prob.time);
  const auto sep = check_separation(traj, m.potential);
  EXPECT_GE(sep.margin_to_domain, 1e-3);
  EXPECT_LE(traj.max_newton_iterations, StateStepper::kMaxNewton);
}

TEST(Separation, Examples) {
  const Grid g = Grid::line(8);
  StateTrajectory zero;
  zero.records.push_back({Field(g), Field(g), Field(g), Field(g)});
  const auto rep = check_separation(zero, {PotentialKind::logarithmic});
  EXPECT_EQ(rep.r_star_observed, 0.0);
  EXPECT_EQ(rep.r_upper_observed, 0.0);
  EXPECT_EQ(rep.margin_to_domain, 1.0);
  EXPECT_TRUE(std::isinf(check_separation(zero, {}).margin_to_domain));

  StateTrajectory peak = zero;
  peak.records[0].phi.values[3] = 0.9;
  const auto rp = check_separation(peak, {PotentialKind::logarithmic});
  EXPECT_EQ(rp.r_upper_observed, 0.9);
  EXPECT_NEAR(rp.margin_to_domain, 0.1, 1e-15);
  EXPECT_LE(rp.r_star_observed, rp.r_upper_observed);
}

TEST(Stability, NormsOfSimpleTrajectories) {
  const Grid g = Grid::line(8);
  const TimeGrid tg{1.0, 3};
  StateTrajectory zero;
  for (int n = 0; n <= 3; ++n) zero.records.push_back({Field(g), Field(g), Field(g), Field(g)});
  const auto z = stability_norms(zero, tg);
  EXPECT_EQ(z.sup_mu_t + z.sup_mu_h1 + z.sup_phi_inf + z.sup_sigma_h1 + z.l2_phi_t_h1, 0.0);
  StateTrajectory c = zero;
  for (auto& r : c.records) r.phi = Field(g, -0.35);
  EXPECT_DOUBLE_EQ(stability_norms(c, tg).sup_phi_inf, 0.35);
}

TEST(Stability, HalvingPerturbationHalvesDifference) {
  const auto prob = fixtures::baseline_problem(32, 50);
  const ControlPair u{fixtures::smooth_slices(prob.grid, prob.time, 0.3, 1, 0.1),
                      fixtures::smooth_slices(prob.grid, prob.time, 0.2, 2, 0.05)};
  const auto base = solve_forward(prob.init, u, prob.model, prob.time);
  auto perturbed = [&](double mag) {
    ControlPair p = u;
    for (int n = 0; n < prob.time.steps; ++n) {
      p.u1[n].values.array() += mag;
      p.u2[n].values.array() -= mag;
    }
    return trajectory_distance(solve_forward(prob.init, p, prob.model, prob.time), base);
  };
  const double ratio = perturbed(5e-3) / perturbed(1e-2);
  EXPECT_GE(ratio, 0.4);
  EXPECT_LE(ratio, 0.6);
}

TEST(Forward, RefinementIsCauchy) {
  // Final-time differences shrink under successive dt halvings.
  double prev_diff = INFINITY;
  StateRecord prev_final;
  for (int level = 0; level < 4; ++level) {
    const auto prob = fixtures::baseline_problem(32, 25 << level);
    const auto traj = solve_forward(prob.init, zero_controls(prob.grid, prob.time), prob.model, prob.time);
    const auto& fin = traj.records.back();
    if (level > 0) {
      const double d = l2_norm(prob.grid, fin.mu.values - prev_final.mu.values) +
                       l2_norm(prob.grid, fin.phi.values - prev_final.phi.values) +
                       l2_norm(prob.grid, fin.sigma.values - prev_final.sigma.values);
      EXPECT_LE(d, prev_diff);
      prev_diff = d;
    }
    prev_final = fin;
  }
}

TEST(Forward, TwoDimensionalRunIsSymmetric) {
  const Grid g = Grid::rectangle(12, 12);
  const TimeGrid tg{0.2, 20};
  const Field phi0 = Field::sample(g, [](double x, double y) { return 0.4 * std::cos(M_PI * x) * std::cos(M_PI * y); });
  const InitialData init{Field(g), Field(g), phi0, Field(g, 1.0)};
  const auto traj = solve_forward(init, zero_controls(g, tg), fixtures::baseline_model(), tg);
  const Vector& fin = traj.records.back().phi.values;
  // Swapping x and y leaves the data invariant, so the solution is too.
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(fin[g.index(i, j)], fin[g.index(j, i)], 1e-12);
}

TEST(Forward, InvalidInputsRejected) {
  const auto prob = fixtures::baseline_problem(8, 4);
  InitialData bad = prob.init;
  bad.phi0.values[2] = std::nan("");
  EXPECT_THROW(solve_forward(bad, zero_controls(prob.grid, prob.time), prob.model, prob.time), std::invalid_argument);
  InitialData outside = prob.init;
  outside.phi0 = Field(prob.grid, 1.5);
  EXPECT_THROW(solve_forward(outside, zero_controls(prob.grid, prob.time), fixtures::logarithmic_model(), prob.time),
               std::invalid_argument);
  EXPECT_THROW(solve_forward(prob.init, zero_controls(prob.grid, TimeGrid{1.0, 3}), prob.model, prob.time),
               std::invalid_argument);
}

TEST(Forward, NewtonFailureReportsStep) {
  // A huge step makes tau/dt + F'' indefinite for the regular potential.
  const Grid g = Grid::line(8);
  const TimeGrid tg{1000.0, 2};
  const InitialData init{Field(g), Field(g), fixtures::cosine(g, 0.0, 0.1), Field(g, 50.0)};
  try {
    solve_forward(init, zero_controls(g, tg), fixtures::baseline_model(), tg);
    SUCCEED() << "converged despite the large step";
  } catch (const SolverError& e) {
    EXPECT_GE(e.step(), 0);
    EXPECT_LT(e.step(), 2);
  }
}
