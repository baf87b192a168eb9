#pragma once

// Grids, finite-difference assembly of the cooperative system and the shared
// sparse linear solver.

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "effham/env.hpp"
#include "effham/error.hpp"
#include "effham/types.hpp"

namespace effham {

enum class Topology { torus, dirichlet_box };

/// Node lattice. Torus node i sits at lo + i*h (n nodes per axis, side n*h).
/// Box node i sits at lo + (i+1)*h; the box boundary lo, lo + (n+1)*h carries
/// homogeneous Dirichlet data and is eliminated.
struct Grid {
  int d = 1;
  Index n{4, 1};
  double h = 1.0;
  Topology topology = Topology::torus;
  Point lo{0.0, 0.0};

  std::size_t nodes() const { return static_cast<std::size_t>(n[0]) * n[1]; }
  std::size_t node(int i, int j = 0) const { return static_cast<std::size_t>(i) * n[1] + j; }
  Index multi_index(std::size_t k) const { return {static_cast<int>(k / n[1]), static_cast<int>(k % n[1])}; }
  Point position(std::size_t k) const {
    const Index ij = multi_index(k);
    const double s = topology == Topology::torus ? 0.0 : 1.0;
    return {lo[0] + (ij[0] + s) * h, d == 2 ? lo[1] + (ij[1] + s) * h : 0.0};
  }
  /// Neighbour of node k shifted by (di, dj); -1 when it falls on the Dirichlet boundary.
  long neighbour(std::size_t k, int di, int dj) const {
    const Index ij = multi_index(k);
    int i = ij[0] + di, j = ij[1] + dj;
    if (topology == Topology::torus) return static_cast<long>(node(wrap(i, n[0]), d == 2 ? wrap(j, n[1]) : 0));
    if (i < 0 || i >= n[0] || j < 0 || j >= n[1]) return -1;
    return static_cast<long>(node(i, j));
  }

  static Grid torus(int d, int nodes_per_axis, double h) {
    require(nodes_per_axis >= 4, ErrorKind::rejected_input, "grid needs at least 4 nodes per axis");
    require(h > 0.0, ErrorKind::rejected_input, "grid spacing must be positive");
    return Grid{d, {nodes_per_axis, d == 2 ? nodes_per_axis : 1}, h, Topology::torus, {0.0, 0.0}};
  }
  /// Box [lo, hi] with spacing h; side lengths must be integer multiples of h.
  static Grid box(int d, Point lo, Point hi, double h) {
    require(h > 0.0, ErrorKind::rejected_input, "grid spacing must be positive");
    Grid g{d, {1, 1}, h, Topology::dirichlet_box, lo};
    for (int k = 0; k < d; ++k) {
      const double cells = (hi[k] - lo[k]) / h;
      const double rc = std::round(cells);
      require(std::abs(cells - rc) <= 1e-8 * std::max(1.0, cells), ErrorKind::rejected_input,
              "box side is not an integer multiple of h");
      g.n[k] = static_cast<int>(rc) - 1;
      require(g.n[k] >= 4, ErrorKind::rejected_input, "grid needs at least 4 interior nodes per axis");
    }
    return g;
  }
};

/// Sparse (m N) x (m N) operator, group-major: row alpha*N + k.
struct BlockOperator {
  SpMat matrix;
  int m = 1;
  std::size_t N = 0;
  bool is_M_compatible = true;
};

struct MassOperator {
  SpMat matrix;
  int m = 1;
  std::size_t N = 0;
};

/// Coefficients of a field evaluated at the nodes of a grid. The field is
/// periodic; grid points off the field lattice use multilinear interpolation.
inline NodeCoefficients coefficients_on(const CoefficientField& field, const Grid& grid) {
  require(grid.d == field.d(), ErrorKind::rejected_input, "grid and field dimensions differ");
  const double ratio = field.h / grid.h;
  require(std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, ratio) && std::round(ratio) >= 1.0,
          ErrorKind::rejected_input, "grid spacing must equal or integer-refine the field spacing");
  NodeCoefficients out(field.d(), field.m(), grid.nodes());
  for (std::size_t k = 0; k < grid.nodes(); ++k) interpolate_at(field, grid.position(k), out, k);
  return out;
}

struct AssemblyOptions {
  bool drift = true;
  bool coupling = true;
};

namespace detail {

/// Spatial stencil of -tr(A D^2) (+ upwind b.D) for one group at one node.
/// emit(col, value, di, dj) receives col = -1 for neighbours on the Dirichlet
/// boundary. Returns false when the mixed term had to use the non-monotone
/// cross stencil.
template <class Emit>
bool node_stencil(const NodeCoefficients& coef, const Grid& g, int alpha, std::size_t k, bool drift, Emit&& emit) {
  const double h2 = g.h * g.h;
  bool monotone = true;
  double diag = 0.0;
  auto off = [&](int di, int dj, double v) {
    if (v != 0.0) emit(g.neighbour(k, di, dj), v, di, dj);
  };
  const double a11 = coef.a(alpha, k, 0);
  if (g.d == 1) {
    diag += 2.0 * a11 / h2;
    off(-1, 0, -a11 / h2);
    off(1, 0, -a11 / h2);
  } else {
    const double a12 = coef.a(alpha, k, 1), a22 = coef.a(alpha, k, 2);
    const double s = std::abs(a12);
    if (s <= std::min(a11, a22)) {
      diag += (2.0 * a11 + 2.0 * a22 - 2.0 * s) / h2;
      off(-1, 0, -(a11 - s) / h2);
      off(1, 0, -(a11 - s) / h2);
      off(0, -1, -(a22 - s) / h2);
      off(0, 1, -(a22 - s) / h2);
      if (a12 >= 0.0) {
        off(1, 1, -s / h2);
        off(-1, -1, -s / h2);
      } else {
        off(1, -1, -s / h2);
        off(-1, 1, -s / h2);
      }
    } else {
      monotone = false;
      diag += (2.0 * a11 + 2.0 * a22) / h2;
      off(-1, 0, -a11 / h2);
      off(1, 0, -a11 / h2);
      off(0, -1, -a22 / h2);
      off(0, 1, -a22 / h2);
      off(1, 1, -a12 / (2.0 * h2));
      off(-1, -1, -a12 / (2.0 * h2));
      off(1, -1, a12 / (2.0 * h2));
      off(-1, 1, a12 / (2.0 * h2));
    }
  }
  if (drift) {
    for (int ax = 0; ax < g.d; ++ax) {
      const double b = coef.drift(alpha, k, ax);
      diag += std::abs(b) / g.h;
      if (b > 0.0)
        off(ax == 0 ? -1 : 0, ax == 1 ? -1 : 0, -b / g.h);
      else if (b < 0.0)
        off(ax == 0 ? 1 : 0, ax == 1 ? 1 : 0, b / g.h);
    }
  }
  emit(static_cast<long>(k), diag, 0, 0);
  return monotone;
}

}  // namespace detail

/// Monotone finite-difference assembly of -tr(A D^2) + b.D + c on the grid.
inline BlockOperator assemble_system(const NodeCoefficients& coef, const Grid& grid, AssemblyOptions opt = {}) {
  require(coef.nodes == grid.nodes() && coef.d == grid.d, ErrorKind::rejected_input,
          "coefficient samples do not match the grid");
  const std::size_t N = grid.nodes();
  const int m = coef.m;
  std::vector<Triplet> trips;
  trips.reserve(N * m * (grid.d == 1 ? 3 : 9) + N * m * m);
  bool monotone = true;
  for (int a = 0; a < m; ++a) {
    const std::size_t row0 = a * N;
    for (std::size_t k = 0; k < N; ++k) {
      const bool ok = detail::node_stencil(coef, grid, a, k, opt.drift, [&](long col, double v, int, int) {
        if (col >= 0) trips.emplace_back(static_cast<int>(row0 + k), static_cast<int>(row0 + col), v);
      });
      monotone = monotone && ok;
      if (opt.coupling)
        for (int b = 0; b < m; ++b) {
          const double c = coef.coupling(k, a, b);
          if (c != 0.0) trips.emplace_back(static_cast<int>(row0 + k), static_cast<int>(b * N + k), c);
        }
    }
  }
  BlockOperator op;
  op.m = m;
  op.N = N;
  op.matrix.resize(static_cast<Eigen::Index>(m * N), static_cast<Eigen::Index>(m * N));
  op.matrix.setFromTriplets(trips.begin(), trips.end());
  op.matrix.makeCompressed();
  bool signs = true;
  for (Eigen::Index col = 0; col < op.matrix.outerSize(); ++col)
    for (SpMat::InnerIterator it(op.matrix, col); it; ++it)
      if (it.row() == it.col() ? it.value() <= 0.0 : it.value() > 0.0) signs = false;
  op.is_M_compatible = monotone && signs;
  return op;
}

inline BlockOperator assemble_system(const CoefficientField& field, const Grid& grid, AssemblyOptions opt = {}) {
  return assemble_system(coefficients_on(field, grid), grid, opt);
}

inline MassOperator assemble_mass(const NodeCoefficients& coef, const Grid& grid) {
  require(coef.nodes == grid.nodes(), ErrorKind::rejected_input, "coefficient samples do not match the grid");
  const std::size_t N = grid.nodes();
  const int m = coef.m;
  std::vector<Triplet> trips;
  for (std::size_t k = 0; k < N; ++k)
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) {
        const double s = coef.fission(k, a, b);
        require(s >= 0.0, ErrorKind::consistency, "negative fission entry at node " + std::to_string(k));
        if (s != 0.0) trips.emplace_back(static_cast<int>(a * N + k), static_cast<int>(b * N + k), s);
      }
  MassOperator op;
  op.m = m;
  op.N = N;
  op.matrix.resize(static_cast<Eigen::Index>(m * N), static_cast<Eigen::Index>(m * N));
  op.matrix.setFromTriplets(trips.begin(), trips.end());
  op.matrix.makeCompressed();
  return op;
}

inline MassOperator assemble_mass(const CoefficientField& field, const Grid& grid) {
  return assemble_mass(coefficients_on(field, grid), grid);
}

/// Systems above this size go to the iterative path.
inline constexpr Eigen::Index kDirectSolveLimit = 200000;

/// Factorizes once, solves many right-hand sides to relative residual 1e-10.
class LinearSolver {
 public:
  LinearSolver() = default;
  explicit LinearSolver(const SpMat& a) { compute(a); }

  void compute(const SpMat& matrix) {
    a_ = matrix;
    const SpMat& a = a_;
    ready_ = true;
    a_norm_ = norm_inf(a);
    direct_ = a.rows() <= kDirectSolveLimit;
    if (direct_) {
      lu_.analyzePattern(a);
      lu_.factorize(a);
      if (lu_.info() != Eigen::Success) throw SolverBreakdown("sparse LU factorization failed", condition_estimate(a));
      const double ld = lu_.logAbsDeterminant();
      if (!std::isfinite(ld)) throw SolverBreakdown("singular matrix", condition_estimate(a));
    } else {
      krylov_.preconditioner().setDroptol(1e-6);
      krylov_.preconditioner().setFillfactor(20);
      krylov_.setTolerance(1e-12);
      krylov_.setMaxIterations(5000);
      krylov_.compute(a);
      if (krylov_.info() != Eigen::Success)
        throw SolverBreakdown("incomplete factorization failed", condition_estimate(a));
    }
  }

  /// Solve with relative residual |A x - b| / |b| <= 1e-10.
  Vec solve(const Vec& rhs) const { return solve_checked(rhs, false); }

  /// Solve with normwise backward error |A x - b|_inf / (|A|_inf |x|_inf + |b|_inf) <= 1e-12.
  /// This is the right contract for nearly singular shifted systems, where
  /// the relative residual is bounded below by round-off times the condition number.
  Vec solve_backward(const Vec& rhs) const { return solve_checked(rhs, true); }

  /// Cheap 1-norm condition surrogate: max |a_ii| + off-diagonal mass over min diagonal dominance.
  static double norm_inf(const SpMat& a) {
    Vec rows = Vec::Zero(a.rows());
    for (Eigen::Index col = 0; col < a.outerSize(); ++col)
      for (SpMat::InnerIterator it(a, col); it; ++it) rows(it.row()) += std::abs(it.value());
    return rows.size() ? rows.maxCoeff() : 0.0;
  }

  static double condition_estimate(const SpMat& a) {
    Vec diag = Vec::Zero(a.rows()), off = Vec::Zero(a.rows());
    for (Eigen::Index col = 0; col < a.outerSize(); ++col)
      for (SpMat::InnerIterator it(a, col); it; ++it)
        (it.row() == it.col() ? diag : off)(it.row()) += std::abs(it.value());
    double big = 0.0, dom = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      big = std::max(big, diag(i) + off(i));
      dom = std::min(dom, diag(i) - off(i));
    }
    return dom > 0.0 ? big / dom : std::numeric_limits<double>::infinity();
  }

 private:
  Vec solve_checked(const Vec& rhs, bool backward) const {
    require(ready_, ErrorKind::precondition, "solver used before compute()");
    const double rn = backward ? rhs.cwiseAbs().maxCoeff() : rhs.norm();
    if (rn == 0.0) return Vec::Zero(rhs.size());
    auto raw = [&](const Vec& b) { return direct_ ? Vec(lu_.solve(b)) : Vec(krylov_.solve(b)); };
    auto error = [&](const Vec& x) {
      const Vec r = rhs - a_ * x;
      if (backward) return r.cwiseAbs().maxCoeff() / (a_norm_ * x.cwiseAbs().maxCoeff() + rn);
      return r.norm() / rn;
    };
    const double target = backward ? 1e-12 : 1e-10;
    Vec x = raw(rhs);
    double err = error(x);
    for (int it = 0; it < 3 && std::isfinite(err) && err > target; ++it) {
      Vec x2 = x + raw(rhs - a_ * x);
      const double e2 = error(x2);
      if (!(e2 < err)) break;
      x = std::move(x2);
      err = e2;
    }
    if (!(err <= target)) throw SolverBreakdown("linear solve missed the residual target", condition_estimate(a_));
    return x;
  }

  SpMat a_;
  bool ready_ = false;
  double a_norm_ = 0.0;
  bool direct_ = true;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
  Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> krylov_;
};

inline Vec solve_linear(const BlockOperator& op, const Vec& rhs) {
  LinearSolver solver(op.matrix);
  return solver.solve(rhs);
}

/// Coordinate-list export, one "row col value" triple per line.
inline void write_coo(const SpMat& a, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path);
  char buf[96];
  for (Eigen::Index col = 0; col < a.outerSize(); ++col)
    for (SpMat::InnerIterator it(a, col); it; ++it) {
      std::snprintf(buf, sizeof buf, "%ld %ld %.17g\n", static_cast<long>(it.row()), static_cast<long>(it.col()),
                    it.value());
      os << buf;
    }
  require(static_cast<bool>(os), ErrorKind::io, "write failed for " + path);
}

}  // namespace effham
