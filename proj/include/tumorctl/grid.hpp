#pragma once

// Uniform cell-centered grids on an interval or rectangle, the Neumann
// Laplacian with mirror (ghost-cell) closure, discrete L2/H1 pairings and
// the implicit (shift - c*Laplacian + diag) solver used by every time stepper.

#include <Eigen/Core>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace tumorctl {

using Vector = Eigen::VectorXd;

struct Grid {
  int dim = 1;
  std::array<int, 2> cells{4, 1};
  std::array<double, 2> lengths{1.0, 1.0};

  static Grid line(int n, double length = 1.0) {
    Grid g;
    g.dim = 1;
    g.cells = {n, 1};
    g.lengths = {length, 1.0};
    g.validate();
    return g;
  }

  static Grid rectangle(int nx, int ny, double lx = 1.0, double ly = 1.0) {
    Grid g;
    g.dim = 2;
    g.cells = {nx, ny};
    g.lengths = {lx, ly};
    g.validate();
    return g;
  }

  void validate() const {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid: dim must be 1 or 2");
    for (int a = 0; a < dim; ++a) {
      if (cells[a] < 4) throw std::invalid_argument("grid: at least 4 cells per axis required");
      if (!(lengths[a] > 0.0) || !std::isfinite(lengths[a]))
        throw std::invalid_argument("grid: side lengths must be positive");
    }
  }

  int size() const { return dim == 1 ? cells[0] : cells[0] * cells[1]; }
  double spacing(int axis) const { return lengths[axis] / cells[axis]; }
  double cell_volume() const { return dim == 1 ? spacing(0) : spacing(0) * spacing(1); }
  double measure() const { return dim == 1 ? lengths[0] : lengths[0] * lengths[1]; }
  double center(int axis, int i) const { return (i + 0.5) * spacing(axis); }

  // Row-major: x varies fastest.
  int index(int i, int j = 0) const { return j * cells[0] + i; }

  bool operator==(const Grid& o) const {
    if (dim != o.dim) return false;
    for (int a = 0; a < dim; ++a)
      if (cells[a] != o.cells[a] || lengths[a] != o.lengths[a]) return false;
    return true;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

/// A scalar, cell-centered function on a grid.
struct Field {
  Grid grid;
  Vector values;

  Field() = default;
  explicit Field(const Grid& g, double value = 0.0) : grid(g), values(Vector::Constant(g.size(), value)) {}
  Field(const Grid& g, Vector v) : grid(g), values(std::move(v)) {
    if (values.size() != g.size()) throw std::invalid_argument("field: value count does not match grid");
  }

  /// Samples f(x, y) at cell centers (y = 0 in 1D).
  static Field sample(const Grid& g, const std::function<double(double, double)>& f) {
    Field out(g);
    const int ny = g.dim == 2 ? g.cells[1] : 1;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < g.cells[0]; ++i)
        out.values[g.index(i, j)] = f(g.center(0, i), g.dim == 2 ? g.center(1, j) : 0.0);
    return out;
  }

  bool finite() const { return values.allFinite(); }
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": grid mismatch");
}

/// Neumann Laplacian on raw cell values. The mirror ghost cell equals its
/// boundary neighbour, so boundary faces carry zero flux.
inline Vector laplacian(const Grid& g, const Vector& f) {
  Vector out = Vector::Zero(f.size());
  const int nx = g.cells[0];
  const double ax = 1.0 / (g.spacing(0) * g.spacing(0));
  const int ny = g.dim == 2 ? g.cells[1] : 1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = g.index(i, j), b = g.index(i + 1, j);
      const double flux = ax * (f[b] - f[a]);
      out[a] += flux;
      out[b] -= flux;
    }
  }
  if (g.dim == 2) {
    const double ay = 1.0 / (g.spacing(1) * g.spacing(1));
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int a = g.index(i, j), b = g.index(i, j + 1);
        const double flux = ay * (f[b] - f[a]);
        out[a] += flux;
        out[b] -= flux;
      }
    }
  }
  return out;
}

inline Field laplacian_neumann(const Field& f) { return Field(f.grid, laplacian(f.grid, f.values)); }

inline Field laplacian_neumann(const Grid& op_grid, const Field& f) {
  require_same_grid(op_grid, f.grid, "laplacian_neumann");
  return laplacian_neumann(f);
}

inline double inner(const Grid& g, const Vector& f, const Vector& h) { return f.dot(h) * g.cell_volume(); }

inline double inner(const Field& f, const Field& h) {
  require_same_grid(f.grid, h.grid, "inner");
  return inner(f.grid, f.values, h.values);
}

inline double l2_norm(const Grid& g, const Vector& f) { return std::sqrt(inner(g, f, f)); }
inline double l2_norm(const Field& f) { return l2_norm(f.grid, f.values); }

/// Squared discrete gradient norm from one-sided face differences.
inline double gradient_norm_squared(const Grid& g, const Vector& f) {
  double sum = 0.0;
  const int nx = g.cells[0];
  const int ny = g.dim == 2 ? g.cells[1] : 1;
  const double dx = g.spacing(0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      const double d = (f[g.index(i + 1, j)] - f[g.index(i, j)]) / dx;
      sum += d * d;
    }
  if (g.dim == 2) {
    const double dy = g.spacing(1);
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double d = (f[g.index(i, j + 1)] - f[g.index(i, j)]) / dy;
        sum += d * d;
      }
  }
  return sum * g.cell_volume();
}

inline double h1_norm(const Grid& g, const Vector& f) {
  return std::sqrt(inner(g, f, f) + gradient_norm_squared(g, f));
}
inline double h1_norm(const Field& f) { return h1_norm(f.grid, f.values); }

/// Solves (shift*I - diffusion*Laplacian + diag(extra)) x = b with Neumann
/// closure. 1D uses a factored tridiagonal sweep; 2D a sparse LDLT up to
/// 1e4 unknowns and conjugate gradients beyond.
class ImplicitOperator {
 public:
  ImplicitOperator(const Grid& g, double shift, double diffusion, const Vector* extra = nullptr)
      : grid_(g), shift_(shift), diffusion_(diffusion) {
    const int n = g.size();
    Vector diag = Vector::Constant(n, shift);
    if (extra) {
      if (extra->size() != n) throw std::invalid_argument("implicit operator: diagonal size mismatch");
      diag += *extra;
    }
    if (g.dim == 1) {
      factor_tridiagonal(diag);
    } else {
      build_sparse(diag);
    }
  }

  Vector solve(const Vector& rhs) const {
    if (rhs.size() != grid_.size()) throw std::invalid_argument("implicit operator: rhs size mismatch");
    if (grid_.dim == 1) return solve_tridiagonal(rhs);
    if (ldlt_) return ldlt_->solve(rhs);
    Vector x = cg_->solve(rhs);
    return x;
  }

  /// Applies the operator itself (used for residual checks).
  Vector apply(const Vector& x) const {
    return shift_ * x - diffusion_ * laplacian(grid_, x) + (diag_extra_.array() * x.array()).matrix();
  }

 private:
  void factor_tridiagonal(const Vector& diag) {
    const int n = grid_.size();
    const double off = -diffusion_ / (grid_.spacing(0) * grid_.spacing(0));
    diag_extra_ = diag - Vector::Constant(n, shift_);
    Vector d = diag;
    for (int i = 0; i < n; ++i) {
      const int neighbours = (i == 0 || i == n - 1) ? 1 : 2;
      d[i] -= neighbours * off;
    }
    off_ = off;
    // Forward elimination coefficients.
    cprime_.resize(n);
    denom_.resize(n);
    denom_[0] = d[0];
    cprime_[0] = off / denom_[0];
    for (int i = 1; i < n; ++i) {
      denom_[i] = d[i] - off * cprime_[i - 1];
      cprime_[i] = off / denom_[i];
    }
  }

  Vector solve_tridiagonal(const Vector& rhs) const {
    const int n = grid_.size();
    Vector y(n);
    y[0] = rhs[0] / denom_[0];
    for (int i = 1; i < n; ++i) y[i] = (rhs[i] - off_ * y[i - 1]) / denom_[i];
    for (int i = n - 2; i >= 0; --i) y[i] -= cprime_[i] * y[i + 1];
    return y;
  }

  void build_sparse(const Vector& diag) {
    const int n = grid_.size();
    diag_extra_ = diag - Vector::Constant(n, shift_);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * static_cast<std::size_t>(n));
    Vector d = diag;
    const int nx = grid_.cells[0], ny = grid_.cells[1];
    const double ax = diffusion_ / (grid_.spacing(0) * grid_.spacing(0));
    const double ay = diffusion_ / (grid_.spacing(1) * grid_.spacing(1));
    auto couple = [&](int a, int b, double w) {
      trip.emplace_back(a, b, -w);
      trip.emplace_back(b, a, -w);
      d[a] += w;
      d[b] += w;
    };
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) couple(grid_.index(i, j), grid_.index(i + 1, j), ax);
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i < nx; ++i) couple(grid_.index(i, j), grid_.index(i, j + 1), ay);
    for (int i = 0; i < n; ++i) trip.emplace_back(i, i, d[i]);
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    if (n <= kDirectLimit) {
      ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(m);
      if (ldlt_->info() != Eigen::Success) throw std::runtime_error("implicit operator: factorization failed");
    } else {
      cg_ = std::make_shared<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>>();
      cg_->setTolerance(1e-10);
      matrix_ = std::make_shared<Eigen::SparseMatrix<double>>(std::move(m));
      cg_->compute(*matrix_);
    }
  }

  static constexpr int kDirectLimit = 10000;

  Grid grid_;
  double shift_;
  double diffusion_;
  Vector diag_extra_;
  double off_ = 0.0;
  Vector cprime_, denom_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  std::shared_ptr<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>> cg_;
  // The iterative solver references the matrix; shared ownership keeps copies valid.
  std::shared_ptr<Eigen::SparseMatrix<double>> matrix_;
};

/// Uniform time grid on [0, T].
struct TimeGrid {
  double t_final = 1.0;
  int steps = 100;

  double dt() const { return t_final / steps; }
  double time(int n) const { return n * dt(); }

  void validate() const {
    if (!(t_final > 0.0) || !std::isfinite(t_final)) throw std::invalid_argument("time grid: T must be positive");
    if (steps < 1) throw std::invalid_argument("time grid: steps must be positive");
  }
};

/// Time-indexed sequence of fields on one grid.
using SpaceTimeField = std::vector<Field>;

inline SpaceTimeField constant_in_time(const Field& f, int slices) { return SpaceTimeField(slices, f); }

inline Vector flatten(const SpaceTimeField& s) {
  if (s.empty()) return Vector();
  const int n = s.front().grid.size();
  Vector out(static_cast<Eigen::Index>(s.size()) * n);
  for (std::size_t k = 0; k < s.size(); ++k) out.segment(static_cast<Eigen::Index>(k) * n, n) = s[k].values;
  return out;
}

inline SpaceTimeField unflatten(const Grid& g, const Vector& v, int slices) {
  const int n = g.size();
  if (v.size() != static_cast<Eigen::Index>(slices) * n)
    throw std::invalid_argument("space-time field: size does not match grid and time grid");
  SpaceTimeField out;
  out.reserve(slices);
  for (int k = 0; k < slices; ++k) out.emplace_back(g, Vector(v.segment(static_cast<Eigen::Index>(k) * n, n)));
  return out;
}

}  // namespace tumorctl
