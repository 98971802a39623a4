#pragma once

// Control variables and their parametrizations (full, fixed u1, product
// z_hat(x)u(t), affine z_tilde + H[w1]), the convolution operator H and its
// transpose, the admissible box, the L1 sparsity functional and its prox.

#include "tumorctl/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tumorctl {

// ---------------------------------------------------------------------------
// Convolution operator H

enum class KernelKind { zero, delta, gaussian };

/// Separable symmetric kernel applied slice-wise in time with mirror
/// (half-sample symmetric) boundary handling.
struct KernelSpec {
  KernelKind kind = KernelKind::delta;
  double sigma_cells = 1.0;  // gaussian standard deviation in cells
  int radius = -1;           // gaussian half-width; -1 means ceil(3 sigma)

  std::vector<double> weights() const {
    switch (kind) {
      case KernelKind::zero: return {};
      case KernelKind::delta: return {1.0};
      case KernelKind::gaussian: break;
    }
    if (!(sigma_cells > 0.0)) throw std::invalid_argument("kernel: gaussian sigma must be positive");
    const int rad = radius >= 0 ? radius : static_cast<int>(std::ceil(3.0 * sigma_cells));
    std::vector<double> w(2 * static_cast<std::size_t>(rad) + 1);
    double sum = 0.0;
    for (int k = -rad; k <= rad; ++k) {
      w[k + rad] = std::exp(-0.5 * k * k / (sigma_cells * sigma_cells));
      sum += w[k + rad];
    }
    for (auto& v : w) v /= sum;
    return w;
  }
};

namespace detail {

inline int reflect(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - i - 1;
  return i;
}

// One-axis convolution y = K x (or K^T x) on a single slice.
inline Vector convolve_axis(const Grid& g, const Vector& x, const std::vector<double>& w, int axis, bool transpose) {
  const int rad = static_cast<int>(w.size() / 2);
  const int n = g.cells[axis];
  const int nx = g.cells[0];
  const int ny = g.dim == 2 ? g.cells[1] : 1;
  Vector y = Vector::Zero(x.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int pos = axis == 0 ? i : j;
      const int out = g.index(i, j);
      for (int k = -rad; k <= rad; ++k) {
        const int src = reflect(pos + k, n);
        const int other = axis == 0 ? g.index(src, j) : g.index(i, src);
        if (transpose)
          y[other] += w[k + rad] * x[out];
        else
          y[out] += w[k + rad] * x[other];
      }
    }
  }
  return y;
}

inline void check_kernel_fits(const Grid& g, const std::vector<double>& w) {
  const int rad = static_cast<int>(w.size() / 2);
  for (int a = 0; a < g.dim; ++a)
    if (rad >= g.cells[a]) throw std::invalid_argument("operator H: kernel wider than the grid");
}

}  // namespace detail

inline Field apply_kernel(const KernelSpec& spec, const Field& f, bool transpose = false) {
  const auto w = spec.weights();
  if (w.empty()) return Field(f.grid);
  detail::check_kernel_fits(f.grid, w);
  Vector v = f.values;
  if (!transpose) {
    for (int a = 0; a < f.grid.dim; ++a) v = detail::convolve_axis(f.grid, v, w, a, false);
  } else {
    for (int a = f.grid.dim - 1; a >= 0; --a) v = detail::convolve_axis(f.grid, v, w, a, true);
  }
  return Field(f.grid, std::move(v));
}

inline SpaceTimeField operator_H(const KernelSpec& spec, const SpaceTimeField& w) {
  SpaceTimeField out;
  out.reserve(w.size());
  for (const auto& slice : w) out.push_back(apply_kernel(spec, slice, false));
  return out;
}

/// Exact transpose of operator_H in the L2(Q) pairing.
inline SpaceTimeField operator_H_adjoint(const KernelSpec& spec, const SpaceTimeField& y) {
  SpaceTimeField out;
  out.reserve(y.size());
  for (const auto& slice : y) out.push_back(apply_kernel(spec, slice, true));
  return out;
}

// ---------------------------------------------------------------------------
// Controls

struct FullParametrization {};
struct FixedFirstComponent {  // u1 prescribed, only u2 free
  SpaceTimeField u1;
};
struct ProductFirstComponent {  // u1(x,t) = z_hat(x) u(t)
  Field z_hat;
};
struct AffineFirstComponent {  // u1 = z_tilde + H[w1]
  SpaceTimeField z_tilde;
  KernelSpec kernel;
};

using Parametrization = std::variant<FullParametrization, FixedFirstComponent, ProductFirstComponent, AffineFirstComponent>;

inline std::string parametrization_name(const Parametrization& p) {
  switch (p.index()) {
    case 0: return "full";
    case 1: return "scenario1";
    case 2: return "scenario2";
    default: return "scenario3";
  }
}

/// Expanded control pair on the cylinder, one slice per time step.
struct ControlPair {
  SpaceTimeField u1;
  SpaceTimeField u2;
};

inline ControlPair zero_controls(const Grid& g, const TimeGrid& tg) {
  return {constant_in_time(Field(g), tg.steps), constant_in_time(Field(g), tg.steps)};
}

/// Sizes and quadrature weights of the raw control variables.
struct ControlLayout {
  Eigen::Index first_size = 0;
  Eigen::Index second_size = 0;
  double first_weight = 0.0;   // measure per raw entry
  double second_weight = 0.0;
};

inline ControlLayout layout_of(const Parametrization& p, const Grid& g, const TimeGrid& tg) {
  const double cell = tg.dt() * g.cell_volume();
  const Eigen::Index q = static_cast<Eigen::Index>(tg.steps) * g.size();
  ControlLayout out{0, q, 0.0, cell};
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, FullParametrization> || std::is_same_v<T, AffineFirstComponent>) {
          out.first_size = q;
          out.first_weight = cell;
        } else if constexpr (std::is_same_v<T, ProductFirstComponent>) {
          out.first_size = tg.steps;
          out.first_weight = tg.dt();
        }
      },
      p);
  return out;
}

/// A control: its parametrization plus the raw (free) variables. `first` is
/// u1, empty, u(t) or w1 by parametrization; `second` is u2. Space-time
/// vectors are flattened step-major.
struct Control {
  Parametrization parametrization = FullParametrization{};
  Vector first;
  Vector second;

  static Control zero(const Parametrization& p, const Grid& g, const TimeGrid& tg) {
    const auto lay = layout_of(p, g, tg);
    return {p, Vector::Zero(lay.first_size), Vector::Zero(lay.second_size)};
  }

  static Control full(const ControlPair& u) { return {FullParametrization{}, flatten(u.u1), flatten(u.u2)}; }

  /// Same parametrization, new raw values.
  Control with_values(Vector f, Vector s) const { return {parametrization, std::move(f), std::move(s)}; }
};

namespace detail {

inline void check_shapes(const Control& c, const Grid& g, const TimeGrid& tg) {
  const auto lay = layout_of(c.parametrization, g, tg);
  if (c.first.size() != lay.first_size || c.second.size() != lay.second_size)
    throw std::invalid_argument("control: raw variable shape does not match grid/time grid");
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, FixedFirstComponent>) {
          if (static_cast<int>(v.u1.size()) != tg.steps) throw std::invalid_argument("control: fixed u1 slice count");
          for (const auto& s : v.u1) require_same_grid(s.grid, g, "control");
        } else if constexpr (std::is_same_v<T, ProductFirstComponent>) {
          require_same_grid(v.z_hat.grid, g, "control");
        } else if constexpr (std::is_same_v<T, AffineFirstComponent>) {
          if (static_cast<int>(v.z_tilde.size()) != tg.steps) throw std::invalid_argument("control: z_tilde slice count");
          for (const auto& s : v.z_tilde) require_same_grid(s.grid, g, "control");
        }
      },
      c.parametrization);
}

// u1 as a linear function of the raw first variable (affine offset excluded).
inline SpaceTimeField first_linear_part(const Parametrization& p, const Vector& first, const Grid& g, const TimeGrid& tg) {
  return std::visit(
      [&](const auto& v) -> SpaceTimeField {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, FullParametrization>) {
          return unflatten(g, first, tg.steps);
        } else if constexpr (std::is_same_v<T, FixedFirstComponent>) {
          return constant_in_time(Field(g), tg.steps);
        } else if constexpr (std::is_same_v<T, ProductFirstComponent>) {
          SpaceTimeField out;
          out.reserve(tg.steps);
          for (int n = 0; n < tg.steps; ++n) out.emplace_back(g, Vector(v.z_hat.values * first[n]));
          return out;
        } else {
          return operator_H(v.kernel, unflatten(g, first, tg.steps));
        }
      },
      p);
}

}  // namespace detail

/// Expands the raw variables to the control pair (u1, u2) on the cylinder.
inline ControlPair expand(const Control& c, const TimeGrid& tg, const Grid& g) {
  detail::check_shapes(c, g, tg);
  ControlPair out{detail::first_linear_part(c.parametrization, c.first, g, tg), unflatten(g, c.second, tg.steps)};
  if (const auto* fixed = std::get_if<FixedFirstComponent>(&c.parametrization)) out.u1 = fixed->u1;
  if (const auto* aff = std::get_if<AffineFirstComponent>(&c.parametrization))
    for (int n = 0; n < tg.steps; ++n) out.u1[n].values += aff->z_tilde[n].values;
  return out;
}

/// Derivative of `expand` applied to a raw increment (same layout as c).
inline ControlPair expand_increment(const Control& c, const Control& increment, const TimeGrid& tg, const Grid& g) {
  detail::check_shapes(c.with_values(increment.first, increment.second), g, tg);
  return {detail::first_linear_part(c.parametrization, increment.first, g, tg), unflatten(g, increment.second, tg.steps)};
}

/// Chain rule: maps an L2(Q) representer of the u1-derivative to the
/// representer of the raw first variable in its own L2 geometry.
inline Vector pullback_first(const Parametrization& p, const SpaceTimeField& g1, const Grid& g, const TimeGrid& tg) {
  return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, FullParametrization>) {
          return flatten(g1);
        } else if constexpr (std::is_same_v<T, FixedFirstComponent>) {
          return Vector();
        } else if constexpr (std::is_same_v<T, ProductFirstComponent>) {
          Vector out(tg.steps);
          for (int n = 0; n < tg.steps; ++n) out[n] = inner(g, g1[n].values, v.z_hat.values);
          return out;
        } else {
          return flatten(operator_H_adjoint(v.kernel, g1));
        }
      },
      p);
}

/// L2 pairing of two raw control vectors in the parametrization's geometry.
inline double control_inner(const ControlLayout& lay, const Control& a, const Control& b) {
  double s = lay.second_weight * a.second.dot(b.second);
  if (lay.first_size > 0) s += lay.first_weight * a.first.dot(b.first);
  return s;
}

inline double control_norm(const ControlLayout& lay, const Control& a) { return std::sqrt(control_inner(lay, a, a)); }

inline double control_sup_norm(const Control& c) {
  double m = c.second.size() ? c.second.cwiseAbs().maxCoeff() : 0.0;
  if (c.first.size()) m = std::max(m, c.first.cwiseAbs().maxCoeff());
  return m;
}

// ---------------------------------------------------------------------------
// Box constraints, sparsity functional, prox

/// Lower/upper thresholds per raw component; each bound vector has size 1
/// (constant) or the raw component's size.
struct BoxConstraints {
  Vector lo1 = Vector::Constant(1, -1.0);
  Vector hi1 = Vector::Constant(1, 1.0);
  Vector lo2 = Vector::Constant(1, -1.0);
  Vector hi2 = Vector::Constant(1, 1.0);

  static BoxConstraints constant(double lo1, double hi1, double lo2, double hi2) {
    return {Vector::Constant(1, lo1), Vector::Constant(1, hi1), Vector::Constant(1, lo2), Vector::Constant(1, hi2)};
  }

  static double at(const Vector& b, Eigen::Index i) { return b.size() == 1 ? b[0] : b[i]; }

  /// lo <= hi everywhere.
  bool ordered() const {
    auto ok = [](const Vector& lo, const Vector& hi) {
      const Eigen::Index n = std::max(lo.size(), hi.size());
      for (Eigen::Index i = 0; i < n; ++i)
        if (at(lo, i) > at(hi, i)) return false;
      return true;
    };
    return ok(lo1, hi1) && ok(lo2, hi2);
  }

  /// lo < 0 < hi everywhere (needed for sparsity).
  bool straddles_zero() const {
    auto ok = [](const Vector& lo, const Vector& hi) { return lo.maxCoeff() < 0.0 && hi.minCoeff() > 0.0; };
    return ok(lo1, hi1) && ok(lo2, hi2);
  }
};

enum class SparsityKind { none, l1_full };

struct SparsitySpec {
  SparsityKind kind = SparsityKind::l1_full;
  double kappa = 0.0;

  double effective_kappa() const { return kind == SparsityKind::none ? 0.0 : kappa; }
};

namespace detail {

inline void check_bound_size(const Vector& b, Eigen::Index n) {
  if (b.size() != 1 && b.size() != n) throw std::invalid_argument("box: bound size does not match control");
}

inline Vector clamp_component(const Vector& v, const Vector& lo, const Vector& hi) {
  check_bound_size(lo, v.size());
  check_bound_size(hi, v.size());
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out[i] = std::clamp(v[i], BoxConstraints::at(lo, i), BoxConstraints::at(hi, i));
  return out;
}

inline Vector prox_component(const Vector& v, double weight, const Vector& lo, const Vector& hi) {
  if (weight < 0.0) throw std::invalid_argument("prox: weight must be nonnegative");
  check_bound_size(lo, v.size());
  check_bound_size(hi, v.size());
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double l = BoxConstraints::at(lo, i), h = BoxConstraints::at(hi, i);
    if (weight > 0.0 && !(l < 0.0 && 0.0 < h))
      throw std::invalid_argument("prox: sign condition lo < 0 < hi violated with positive weight");
    const double shrunk = std::copysign(std::max(std::abs(v[i]) - weight, 0.0), v[i]);
    out[i] = std::clamp(shrunk, l, h);
  }
  return out;
}

}  // namespace detail

inline Control project_box(const Control& u, const BoxConstraints& box) {
  return u.with_values(detail::clamp_component(u.first, box.lo1, box.hi1), detail::clamp_component(u.second, box.lo2, box.hi2));
}

/// Soft-threshold by `weight`, then clamp: the proximal map of
/// weight*|.| + indicator(box) when the box contains 0.
inline Control prox_l1_box(const Control& u, double weight, const BoxConstraints& box) {
  return u.with_values(detail::prox_component(u.first, weight, box.lo1, box.hi1),
                       detail::prox_component(u.second, weight, box.lo2, box.hi2));
}

/// Discrete L1 norm of the raw control over its cylinder (kappa not applied).
inline double sparsity_value(const SparsitySpec& s, const Control& u, const ControlLayout& lay) {
  if (s.kind == SparsityKind::none) return 0.0;
  double v = lay.second_weight * u.second.lpNorm<1>();
  if (lay.first_size > 0) v += lay.first_weight * u.first.lpNorm<1>();
  return v;
}

/// Canonical subgradient of |.|: sign(u), and 0 where u = 0.
inline Vector subgradient_select(const Vector& u) {
  return u.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

}  // namespace tumorctl
