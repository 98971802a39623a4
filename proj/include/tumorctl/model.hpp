#pragma once

// Nonlinearities of the relaxed tumor-growth system: the double-well
// potential F (regular quartic or logarithmic), the proliferation function P,
// the truncation function h, and numeric spot checks of their standing
// assumptions.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tumorctl {

struct ModelParams {
  double alpha = 1.0;  // hyperbolic relaxation
  double tau = 1.0;    // viscosity
  double chi = 1.0;    // chemotactic sensitivity
};

enum class PotentialKind { regular, logarithmic };

struct PotentialSpec {
  PotentialKind kind = PotentialKind::regular;
  double k1 = 1.5;               // logarithmic only; > 1 makes F nonconvex
  double safeguard_eps = 1e-8;   // clamp distance to +-1; 0 disables clamping

  /// Open domain (r-, r+) of the potential.
  double lower() const {
    return kind == PotentialKind::regular ? -std::numeric_limits<double>::infinity() : -1.0;
  }
  double upper() const {
    return kind == PotentialKind::regular ? std::numeric_limits<double>::infinity() : 1.0;
  }
};

/// F or its order-th derivative (order <= 3). The logarithmic kind is
/// evaluated at r clamped to [-1+eps, 1-eps]; with eps = 0 the closed-form
/// boundary value 2 ln 2 - k1 is returned at |r| = 1 and +inf outside.
inline double potential(const PotentialSpec& spec, double r, int order = 0) {
  if (!std::isfinite(r)) throw std::invalid_argument("potential: non-finite argument");
  if (order < 0 || order > 3) throw std::invalid_argument("potential: order must be in 0..3");
  if (spec.kind == PotentialKind::regular) {
    switch (order) {
      case 0: return 0.25 * (1.0 - r * r) * (1.0 - r * r);
      case 1: return r * r * r - r;
      case 2: return 3.0 * r * r - 1.0;
      default: return 6.0 * r;
    }
  }
  const double k1 = spec.k1;
  if (spec.safeguard_eps > 0.0) {
    r = std::clamp(r, -1.0 + spec.safeguard_eps, 1.0 - spec.safeguard_eps);
  } else if (std::abs(r) >= 1.0) {
    const double inf = std::numeric_limits<double>::infinity();
    if (std::abs(r) > 1.0) return inf;
    switch (order) {
      case 0: return 2.0 * std::log(2.0) - k1;
      case 1: return r > 0 ? inf : -inf;
      case 2: return inf;
      default: return r > 0 ? inf : -inf;
    }
  }
  switch (order) {
    case 0: return (1.0 + r) * std::log1p(r) + (1.0 - r) * std::log1p(-r) - k1 * r * r;
    case 1: return std::log1p(r) - std::log1p(-r) - 2.0 * k1 * r;
    case 2: return 1.0 / (1.0 + r) + 1.0 / (1.0 - r) - 2.0 * k1;
    default: return -1.0 / ((1.0 + r) * (1.0 + r)) + 1.0 / ((1.0 - r) * (1.0 - r));
  }
}

/// Convex part F1 of the split F = F1 + F2, with F1(0) = 0.
inline double potential_convex_part(const PotentialSpec& spec, double r) {
  if (spec.kind == PotentialKind::regular) return 0.25 * r * r * r * r;
  if (spec.safeguard_eps > 0.0) r = std::clamp(r, -1.0 + spec.safeguard_eps, 1.0 - spec.safeguard_eps);
  if (std::abs(r) > 1.0) return std::numeric_limits<double>::infinity();
  if (std::abs(r) == 1.0) return 2.0 * std::log(2.0);
  return (1.0 + r) * std::log1p(r) + (1.0 - r) * std::log1p(-r);
}

/// Quintic smoothstep transition from 0 at `lo` to 1 at `hi`.
struct Smoothstep {
  double lo = -1.0;
  double hi = 1.0;

  double operator()(double r, int order = 0) const {
    if (order < 0 || order > 2) throw std::invalid_argument("smoothstep: order must be in 0..2");
    const double width = hi - lo;
    const double t = (r - lo) / width;
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return order == 0 ? 1.0 : 0.0;
    switch (order) {
      case 0: return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
      case 1: return 30.0 * t * t * (1.0 - t) * (1.0 - t) / width;
      default: return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (width * width);
    }
  }
};

struct NonlinearitySpec {
  double p0 = 1.0;  // proliferation amplitude
  Smoothstep p_shape;
  Smoothstep h_shape;
};

inline double proliferation(const NonlinearitySpec& spec, double r, int order = 0) {
  return spec.p0 * spec.p_shape(r, order);
}

inline double truncation(const NonlinearitySpec& spec, double r, int order = 0) { return spec.h_shape(r, order); }

/// Bundle of everything the solvers evaluate pointwise.
struct Model {
  ModelParams params;
  PotentialSpec potential;
  NonlinearitySpec nonlinearity;
};

struct ValidationReport {
  struct Entry {
    std::string tag;
    std::string check;
    bool passed;
  };
  std::vector<Entry> entries;

  bool ok() const {
    return std::all_of(entries.begin(), entries.end(), [](const Entry& e) { return e.passed; });
  }
  std::vector<Entry> failures() const {
    std::vector<Entry> out;
    std::copy_if(entries.begin(), entries.end(), std::back_inserter(out), [](const Entry& e) { return !e.passed; });
    return out;
  }
};

namespace detail {

// Largest sampled difference quotient |f(a)-f(b)|/|a-b| on [lo, hi].
template <class Fn>
double sampled_lipschitz(Fn&& f, double lo, double hi, int samples = 400) {
  double best = 0.0;
  const double h = (hi - lo) / samples;
  double prev = f(lo);
  for (int i = 1; i <= samples; ++i) {
    const double cur = f(lo + i * h);
    best = std::max(best, std::abs(cur - prev) / h);
    prev = cur;
  }
  return best;
}

}  // namespace detail

/// Sampled checks of the standing assumptions. Failures are entries, not exceptions.
inline ValidationReport validate_assumptions(const ModelParams& params, const PotentialSpec& pot,
                                             const NonlinearitySpec& nl) {
  ValidationReport rep;
  auto add = [&](std::string tag, std::string check, bool ok) { rep.entries.push_back({std::move(tag), std::move(check), ok}); };

  add("A1", "alpha > 0", params.alpha > 0.0 && std::isfinite(params.alpha));
  add("A1", "tau > 0", params.tau > 0.0 && std::isfinite(params.tau));
  add("A1", "chi > 0", params.chi > 0.0 && std::isfinite(params.chi));

  if (pot.kind == PotentialKind::logarithmic) {
    add("A2", "logarithmic potential requires k1 > 1", pot.k1 > 1.0);
    add("A2", "safeguard eps in [0, 0.5)", pot.safeguard_eps >= 0.0 && pot.safeguard_eps < 0.5);
  }
  add("A2", "F1(0) = 0", potential_convex_part(pot, 0.0) == 0.0);
  {
    bool nonneg = true;
    const double lo = pot.kind == PotentialKind::regular ? -3.0 : -0.999;
    const double hi = -lo;
    for (int i = 0; i <= 200; ++i) nonneg = nonneg && potential_convex_part(pot, lo + (hi - lo) * i / 200.0) >= 0.0;
    add("A2", "F1 >= 0 on sampled points", nonneg);
  }

  const bool p_shape_ok = nl.p_shape.hi > nl.p_shape.lo;
  const bool h_shape_ok = nl.h_shape.hi > nl.h_shape.lo;
  add("A3", "proliferation transition interval nonempty", p_shape_ok);
  add("A3", "p0 >= 0 and finite", nl.p0 >= 0.0 && std::isfinite(nl.p0));
  add("A4", "truncation transition interval nonempty", h_shape_ok);
  if (p_shape_ok && h_shape_ok) {
    bool bounded = true;
    for (int i = 0; i <= 400; ++i) {
      const double r = -4.0 + 8.0 * i / 400.0;
      const double pv = proliferation(nl, r), hv = truncation(nl, r);
      bounded = bounded && pv >= 0.0 && pv <= nl.p0 && hv >= 0.0 && hv <= 1.0;
    }
    add("A3", "P nonnegative and bounded; h in [0,1]", bounded);
    const double lo = std::min(nl.p_shape.lo, nl.h_shape.lo) - 1.0;
    const double hi = std::max(nl.p_shape.hi, nl.h_shape.hi) + 1.0;
    bool lipschitz = true;
    for (int order = 0; order <= 1; ++order) {
      lipschitz = lipschitz && std::isfinite(detail::sampled_lipschitz([&](double r) { return proliferation(nl, r, order); }, lo, hi));
      lipschitz = lipschitz && std::isfinite(detail::sampled_lipschitz([&](double r) { return truncation(nl, r, order); }, lo, hi));
    }
    add("A3", "P, P', h, h' sampled Lipschitz ratios finite", lipschitz);
  }
  return rep;
}

}  // namespace tumorctl
