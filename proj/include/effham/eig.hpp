#pragma once

// Principal eigenpair of the cooperative system M Phi = lambda S Phi.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "effham/discretize.hpp"
#include "effham/env.hpp"
#include "effham/error.hpp"

namespace effham {

/// Box U = [lo, hi] in macroscopic units, scale eps and normalization point x0.
struct DomainSpec {
  Point lo{0.0, 0.0};
  Point hi{1.0, 1.0};
  double eps = 1.0;
  Point x0{0.5, 0.5};

  void check(int d) const {
    require(eps > 0.0 && eps <= 1.0, ErrorKind::rejected_input, "eps must lie in (0, 1]");
    for (int k = 0; k < d; ++k) {
      require(lo[k] < hi[k], ErrorKind::rejected_input, "empty box");
      require(lo[k] < x0[k] && x0[k] < hi[k], ErrorKind::rejected_input, "x0 must lie strictly inside the box");
    }
  }
};

struct EigenPair {
  double lambda = 0.0;
  /// Group-major node values, size m * N.
  Vec Phi;
  double residual = 0.0;
  int iterations = 0;
  int m = 1;
  Grid grid;
  std::size_t normalization_node = 0;
  /// Defect of the S-weighted Rayleigh estimate against the group-1 ratio at
  /// the normalization node; large values point at ill-conditioning.
  double secondary_gap = 0.0;
  /// lambda * eps^2, the other normalization of the scaled eigenvalue.
  double lambda_eps2 = 0.0;

  double phi(int alpha, std::size_t node) const { return Phi(static_cast<Eigen::Index>(alpha * grid.nodes() + node)); }
};

struct EigenOptions {
  int max_iterations = 10000;
  double tol_lambda = 1e-10;
  double tol_residual = 1e-8;
  /// Starting vector; the all-ones vector when empty.
  Vec start;
  /// Normalization node (group 1); defaults to the grid centre.
  long normalization_node = -1;
};

namespace detail {

inline std::size_t nearest_node(const Grid& g, const Point& x) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    const Point p = g.position(k);
    const double dd = (p[0] - x[0]) * (p[0] - x[0]) + (g.d == 2 ? (p[1] - x[1]) * (p[1] - x[1]) : 0.0);
    if (dd < bd) {
      bd = dd;
      best = k;
    }
  }
  return best;
}

}  // namespace detail

/// Inverse iteration with a Collatz-Wielandt lower-bound shift. The shift
/// sigma stays below lambda_1, so M - sigma S remains a nonsingular M-matrix
/// and every iterate is strictly positive.
inline EigenPair principal_eigenpair(const BlockOperator& M, const MassOperator& S, const Grid& grid,
                                     const EigenOptions& opt = {}) {
  const Eigen::Index n = M.matrix.rows();
  require(S.matrix.rows() == n, ErrorKind::rejected_input, "operator sizes differ");
  Vec phi = opt.start.size() == n ? opt.start : Vec::Ones(n);
  require(phi.minCoeff() > 0.0, ErrorKind::precondition, "starting vector must be positive");

  const std::size_t norm_node =
      opt.normalization_node >= 0 ? static_cast<std::size_t>(opt.normalization_node) : grid.nodes() / 2;

  auto bracket = [&](const Vec& Mx, const Vec& Sx) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = Mx(i) / Sx(i);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    return std::pair{lo, hi};
  };

  EigenPair out;
  out.m = M.m;
  out.grid = grid;
  out.normalization_node = norm_node;
  double lambda_prev = std::numeric_limits<double>::quiet_NaN();
  LinearSolver solver;
  SpMat shifted;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Vec Mx = M.matrix * phi;
    Vec Sx = S.matrix * phi;
    auto [lo, hi] = bracket(Mx, Sx);
    const double lambda = Sx.dot(Mx) / Sx.dot(Sx);
    const double res = (Mx - lambda * Sx).norm() / Sx.norm();
    const double scale = std::max(1.0, std::abs(lambda));
    const double gap = std::max(hi - lo, 0.0);
    const bool settled = gap <= opt.tol_lambda * scale || (it > 1 && std::abs(lambda - lambda_prev) <= opt.tol_lambda * scale);
    if (settled && res <= opt.tol_residual) {
      out.lambda = lambda;
      out.residual = res;
      out.iterations = it - 1;
      break;
    }
    if (it == opt.max_iterations)
      fail(ErrorKind::convergence,
           "principal eigenpair did not converge in " + std::to_string(opt.max_iterations) +
               " iterations (residual " + std::to_string(res) + ")");
    lambda_prev = lambda;
    const double sigma = lo - std::max(0.01 * gap, 1e-9 * scale);
    shifted = M.matrix - sigma * S.matrix;
    solver.compute(shifted);
    Vec next = solver.solve_backward(Sx);
    if (next.sum() < 0.0) next = -next;
    const double mx = next.maxCoeff();
    if (!(next.minCoeff() > -1e-13 * mx) || !(mx > 0.0))
      fail(ErrorKind::consistency, std::string("nonpositive eigen iterate; operator M-compatible: ") +
                                       (M.is_M_compatible ? "yes" : "no"));
    for (Eigen::Index i = 0; i < n; ++i) next(i) = std::max(next(i) / mx, std::numeric_limits<double>::min());
    phi = std::move(next);
  }
  phi /= phi(static_cast<Eigen::Index>(norm_node));
  out.Phi = phi;
  const Vec Mx = M.matrix * phi, Sx = S.matrix * phi;
  out.secondary_gap = std::abs(Mx(static_cast<Eigen::Index>(norm_node)) / Sx(static_cast<Eigen::Index>(norm_node)) -
                               out.lambda);
  require(phi.minCoeff() > 0.0, ErrorKind::consistency, "eigenfunction lost positivity");
  return out;
}

/// Eigenpair of the unit-scale problem on the dilated box U / eps, sampled
/// from the field at micro spacing h_micro.
inline EigenPair epsilon_eigenvalue(const CoefficientField& field, const DomainSpec& dom, double h_micro,
                                    EigenOptions opt = {}) {
  const int d = field.d();
  dom.check(d);
  const double cap = d == 1 ? 1e6 / field.m() : 1e4;
  for (int k = 0; k < d; ++k) {
    const double cells = (dom.hi[k] - dom.lo[k]) / dom.eps / h_micro;
    require(cells <= cap, ErrorKind::unsupported_size,
            "dilated box needs " + std::to_string(cells) + " nodes per axis; use a larger eps or h");
  }
  const Point lo = (1.0 / dom.eps) * dom.lo, hi = (1.0 / dom.eps) * dom.hi;
  const Grid grid = Grid::box(d, lo, hi, h_micro);
  const NodeCoefficients coef = coefficients_on(field, grid);
  const BlockOperator M = assemble_system(coef, grid);
  const MassOperator S = assemble_mass(coef, grid);
  if (opt.normalization_node < 0)
    opt.normalization_node = static_cast<long>(detail::nearest_node(grid, (1.0 / dom.eps) * dom.x0));
  EigenPair pair = principal_eigenpair(M, S, grid, opt);
  pair.lambda_eps2 = pair.lambda * dom.eps * dom.eps;
  return pair;
}

struct Certificate {
  bool certified = false;
  double margin = 0.0;
};

/// Nodewise check of (M Psi)_alpha >= lambda (S Psi)_alpha; success certifies
/// lambda_1 >= lambda for the discrete pencil.
inline Certificate certify_lower_bound(const BlockOperator& M, const MassOperator& S, double lambda, const Vec& Psi) {
  require(Psi.size() == M.matrix.rows(), ErrorKind::rejected_input, "vector size mismatch");
  require(Psi.minCoeff() > 0.0, ErrorKind::precondition, "certificate vector must be strictly positive");
  const Vec defect = M.matrix * Psi - lambda * (S.matrix * Psi);
  Certificate c;
  c.margin = defect.minCoeff();
  c.certified = c.margin >= 0.0;
  return c;
}

struct LogEigenfunction {
  /// Group-major psi values at grid nodes.
  Vec psi;
  int m = 1;
  double eps = 1.0;
  Point x0{0.0, 0.0};
  Grid grid;  // dilated (micro) grid
  /// Nodes within two micro spacings of the boundary.
  std::vector<bool> boundary_layer;

  std::size_t nodes() const { return grid.nodes(); }
  double value(int alpha, std::size_t node) const { return psi(static_cast<Eigen::Index>(alpha * grid.nodes() + node)); }
  /// Macroscopic position of a node.
  Point x(std::size_t node) const { return eps * grid.position(node); }
};

/// psi_alpha = -eps log phi_alpha, re-centred so that psi_1 vanishes at the
/// normalization node.
inline LogEigenfunction hopf_cole(const EigenPair& pair, const DomainSpec& dom) {
  require(pair.Phi.size() > 0 && pair.Phi.minCoeff() > 0.0, ErrorKind::precondition,
          "Hopf-Cole transform needs a strictly positive eigenfunction");
  LogEigenfunction out;
  out.m = pair.m;
  out.eps = dom.eps;
  out.x0 = dom.x0;
  out.grid = pair.grid;
  out.psi = -dom.eps * pair.Phi.array().log();
  const double ref = out.psi(static_cast<Eigen::Index>(pair.normalization_node));
  out.psi.array() -= ref;
  const Grid& g = pair.grid;
  out.boundary_layer.assign(g.nodes(), false);
  for (std::size_t k = 0; k < g.nodes(); ++k) {
    const Index ij = g.multi_index(k);
    for (int ax = 0; ax < g.d; ++ax)
      if (ij[ax] < 2 || ij[ax] >= g.n[ax] - 2) out.boundary_layer[k] = true;
  }
  return out;
}

}  // namespace effham
