#pragma once

// Shared problem instances for the unit and acceptance suites.

#include "tumorctl/reduced.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace fixtures {

using namespace tumorctl;

inline Model baseline_model() {
  Model m;
  m.params = {0.5, 1.0, 0.5};
  m.potential.kind = PotentialKind::regular;
  m.nonlinearity.p0 = 0.5;
  return m;
}

inline Model logarithmic_model() {
  Model m = baseline_model();
  m.potential.kind = PotentialKind::logarithmic;
  m.potential.k1 = 1.5;
  return m;
}

inline Field cosine(const Grid& g, double mean, double amp) {
  return Field::sample(g, [&](double x, double) { return mean + amp * std::cos(std::numbers::pi * x / g.lengths[0]); });
}

inline InitialData baseline_init(const Grid& g) {
  return {Field(g), Field(g), cosine(g, 0.0, 0.5), Field(g, 1.0)};
}

/// Tracking problem with b1 = b2 = 1, b3 = 0.1, box [-1, 1]^2.
inline ControlProblem baseline_problem(int cells = 32, int steps = 100, double kappa = 0.01) {
  const Grid g = Grid::line(cells);
  const TimeGrid tg{1.0, steps};
  const Field target = cosine(g, 0.2, -0.3);
  return {g, tg, baseline_model(), baseline_init(g), CostSpec::tracking(1.0, 1.0, 0.1, kappa, target, target, tg),
          BoxConstraints::constant(-1.0, 1.0, -1.0, 1.0)};
}

/// Smooth space-time control a cos(k pi x) sin(pi t) + b.
inline SpaceTimeField smooth_slices(const Grid& g, const TimeGrid& tg, double a, int k, double b) {
  SpaceTimeField out;
  for (int n = 0; n < tg.steps; ++n) {
    const double t = tg.time(n);
    out.push_back(Field::sample(g, [&](double x, double) {
      return a * std::cos(k * std::numbers::pi * x / g.lengths[0]) * std::sin(std::numbers::pi * (t + 0.25)) + b;
    }));
  }
  return out;
}

/// Smooth nonzero base control used for gradient checks.
inline ControlPair gradient_base(const Grid& g, const TimeGrid& tg) {
  return {smooth_slices(g, tg, 0.3, 1, 0.1), smooth_slices(g, tg, 0.2, 2, 0.05)};
}

/// Direction whose u1 and u2 contributions to DJ[h] do not cancel.
inline ControlPair gradient_direction(const Grid& g, const TimeGrid& tg) {
  return {smooth_slices(g, tg, 0.5, 1, 0.2), smooth_slices(g, tg, -0.4, 1, 0.1)};
}

inline Control random_control(const Control& like, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Vector a(like.first.size()), b(like.second.size());
  for (auto& v : a) v = nd(rng);
  for (auto& v : b) v = nd(rng);
  return like.with_values(a, b);
}

}  // namespace fixtures
