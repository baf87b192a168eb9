#pragma once

// The discounted (delta) cell problem for the weakly coupled viscous
// Hamilton-Jacobi system, its diagnostics, and the exponential periodic cell
// problem used as an oracle.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "effham/discretize.hpp"
#include "effham/eig.hpp"
#include "effham/env.hpp"
#include "effham/error.hpp"
#include "effham/types.hpp"

namespace effham {

/// Structural constants measured on nodal coefficient samples.
struct FieldConstants {
  double ellip_min = 0.0;   // smallest eigenvalue of any A
  double ellip_max = 0.0;   // largest eigenvalue of any A
  double drift_max = 0.0;   // max |b|
  double sigma_row_min = 0.0;
  double sigma_row_max = 0.0;
  double sigma_diag_min = 0.0;
  bool sigma_offdiag = false;  // any positive off-diagonal sigma
  double c_row_max = 0.0;
  double c_min = 0.0;
  /// max(drift_max, sigma_row_max, c_row_max)
  double C = 0.0;
};

inline FieldConstants field_constants(const NodeCoefficients& coef, double c_min) {
  FieldConstants k;
  k.ellip_min = std::numeric_limits<double>::infinity();
  k.sigma_row_min = std::numeric_limits<double>::infinity();
  k.sigma_diag_min = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < coef.nodes; ++n)
    for (int a = 0; a < coef.m; ++a) {
      const auto [lo, hi] = coef.ellipticity(a, n);
      k.ellip_min = std::min(k.ellip_min, lo);
      k.ellip_max = std::max(k.ellip_max, hi);
      k.drift_max = std::max(k.drift_max, norm(coef.drift_vec(a, n), coef.d));
      const double rs = coef.fission_row_sum(n, a);
      k.sigma_row_min = std::min(k.sigma_row_min, rs);
      k.sigma_row_max = std::max(k.sigma_row_max, rs);
      k.sigma_diag_min = std::min(k.sigma_diag_min, coef.fission(n, a, a));
      for (int b = 0; b < coef.m; ++b)
        if (b != a && coef.fission(n, a, b) > 0.0) k.sigma_offdiag = true;
      k.c_row_max = std::max(k.c_row_max, coef.coupling_row_sum(n, a));
    }
  k.c_min = c_min;
  k.C = std::max({k.drift_max, k.sigma_row_max, k.c_row_max});
  return k;
}

/// Value and optimal control of the monotone upwind Hamiltonian
///   max_beta  sum_k (beta_k^+ q-_k + beta_k^- q+_k) - (beta - b).A^{-1}(beta - b)/4,
/// which equals A q.q + b.q whenever q- = q+ = q.
struct UpwindHamiltonian {
  double value = 0.0;
  std::array<double, 2> beta{0.0, 0.0};
};

inline UpwindHamiltonian upwind_hamiltonian(int d, double a11, double a12, double a22, const Point& b,
                                            const Point& qm, const Point& qp) {
  UpwindHamiltonian best;
  best.value = -std::numeric_limits<double>::infinity();
  if (d == 1) {
    const double inv4a = 0.25 / a11;
    auto consider = [&](double beta, double q) {
      const double v = beta * q - (beta - b[0]) * (beta - b[0]) * inv4a;
      if (v > best.value) best = {v, {beta, 0.0}};
    };
    const double up = b[0] + 2.0 * a11 * qm[0];
    consider(up >= 0.0 ? up : 0.0, qm[0]);
    const double dn = b[0] + 2.0 * a11 * qp[0];
    consider(dn <= 0.0 ? dn : 0.0, qp[0]);
    return best;
  }
  const double det = a11 * a22 - a12 * a12;
  // B = A^{-1} / 4
  const double B00 = 0.25 * a22 / det, B01 = -0.25 * a12 / det, B11 = 0.25 * a11 / det;
  for (int s0 = 0; s0 < 2; ++s0)
    for (int s1 = 0; s1 < 2; ++s1) {
      const Point q{s0 == 0 ? qm[0] : qp[0], s1 == 0 ? qm[1] : qp[1]};
      auto feasible = [&](const Point& beta) {
        return (s0 == 0 ? beta[0] >= 0.0 : beta[0] <= 0.0) && (s1 == 0 ? beta[1] >= 0.0 : beta[1] <= 0.0);
      };
      auto consider = [&](const Point& beta) {
        if (!feasible(beta)) return;
        const double e0 = beta[0] - b[0], e1 = beta[1] - b[1];
        const double v = beta[0] * q[0] + beta[1] * q[1] - (B00 * e0 * e0 + 2.0 * B01 * e0 * e1 + B11 * e1 * e1);
        if (v > best.value) best = {v, {beta[0], beta[1]}};
      };
      consider({b[0] + 2.0 * (a11 * q[0] + a12 * q[1]), b[1] + 2.0 * (a12 * q[0] + a22 * q[1])});
      consider({0.0, b[1] + (q[1] + 2.0 * B01 * b[0]) / (2.0 * B11)});
      consider({b[0] + (q[0] + 2.0 * B01 * b[1]) / (2.0 * B00), 0.0});
      consider({0.0, 0.0});
    }
  return best;
}

/// Unknown of the HJ system stored as a constant offset plus a shape vector.
/// In the delta problem v is of order 1/delta while its differences stay of
/// order one; keeping them apart preserves the differences to round-off.
struct HJState {
  double c = 0.0;
  Vec w;

  Vec full() const { return w.array() + c; }
};

/// Discrete system
///   delta v_a + (-tr(A_a D^2) v_a) + H_a(p + D v_a) + f_a(v, mu) = rhs
/// on a torus or a box with prescribed boundary values.
class HJSystem {
 public:
  using Boundary = std::function<double(int alpha, int i, int j)>;

  HJSystem(Grid grid, NodeCoefficients coef, double delta, Point p, double mu)
      : grid_(std::move(grid)), coef_(std::move(coef)), delta_(delta), p_(p), mu_(mu) {
    require(coef_.nodes == grid_.nodes(), ErrorKind::rejected_input, "coefficients do not match grid");
    rhs_.assign(grid_.nodes(), 0.0);
    build_stencils();
  }

  void set_rhs(std::vector<double> rhs) { rhs_ = std::move(rhs); }
  void set_boundary(Boundary bc) { boundary_ = std::move(bc); }

  const Grid& grid() const { return grid_; }
  const NodeCoefficients& coefficients() const { return coef_; }
  int m() const { return coef_.m; }
  std::size_t N() const { return grid_.nodes(); }
  double delta() const { return delta_; }
  const Point& p() const { return p_; }
  double mu() const { return mu_; }

  static constexpr double kExpClamp = 50.0;

  /// Residual; counts clamped exponentials in *clamps when given.
  Vec residual(const HJState& s, long* clamps = nullptr) const {
    Vec F(s.w.size());
    long nclamp = 0;
    for (int a = 0; a < m(); ++a)
      for (std::size_t k = 0; k < N(); ++k) F(idx(a, k)) = node_residual(s, a, k, nclamp);
    if (clamps) *clamps = nclamp;
    return F;
  }

  SpMat jacobian(const HJState& s, double extra_diag = 0.0) const {
    const Vec& v = s.w;
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(v.size()) * (grid_.d == 1 ? 3 : 9) + N() * m() * m());
    for (int a = 0; a < m(); ++a)
      for (std::size_t k = 0; k < N(); ++k) {
        const int row = static_cast<int>(idx(a, k));
        double diag = delta_ + extra_diag;
        for (const auto& e : stencil_[a * N() + k]) {
          diag -= e.w;
          if (e.col >= 0) trips.emplace_back(row, static_cast<int>(idx(a, static_cast<std::size_t>(e.col))), e.w);
        }
        trips.emplace_back(row, row, diag);
        Point qm, qp;
        gradients(s, a, k, qm, qp);
        const auto H = hamiltonian(a, k, qm, qp);
        for (int ax = 0; ax < grid_.d; ++ax) {
          const double bp = std::max(H.beta[ax], 0.0), bn = std::min(H.beta[ax], 0.0);
          trips.emplace_back(row, row, (bp - bn) / grid_.h);
          const long lo = grid_.neighbour(k, ax == 0 ? -1 : 0, ax == 1 ? -1 : 0);
          const long hi = grid_.neighbour(k, ax == 0 ? 1 : 0, ax == 1 ? 1 : 0);
          if (lo >= 0 && bp != 0.0) trips.emplace_back(row, static_cast<int>(idx(a, lo)), -bp / grid_.h);
          if (hi >= 0 && bn != 0.0) trips.emplace_back(row, static_cast<int>(idx(a, hi)), bn / grid_.h);
        }
        for (int b = 0; b < m(); ++b) {
          if (b == a) continue;
          const double wt = mu_ * coef_.fission(k, a, b) - coef_.coupling(k, a, b);
          if (wt == 0.0) continue;
          const double e = std::exp(std::clamp(v(idx(a, k)) - v(idx(b, k)), -kExpClamp, kExpClamp));
          trips.emplace_back(row, row, wt * e);
          trips.emplace_back(row, static_cast<int>(idx(b, k)), -wt * e);
        }
      }
    SpMat J(v.size(), v.size());
    J.setFromTriplets(trips.begin(), trips.end());
    J.makeCompressed();
    return J;
  }

  /// One-sided gradients p + D^- v and p + D^+ v at node k.
  void gradients(const HJState& s, int a, std::size_t k, Point& qm, Point& qp) const {
    const double vk = s.w(idx(a, k));
    qm = p_;
    qp = p_;
    for (int ax = 0; ax < grid_.d; ++ax) {
      const double lo = neighbour_value(s, a, k, ax == 0 ? -1 : 0, ax == 1 ? -1 : 0);
      const double hi = neighbour_value(s, a, k, ax == 0 ? 1 : 0, ax == 1 ? 1 : 0);
      qm[ax] += (vk - lo) / grid_.h;
      qp[ax] += (hi - vk) / grid_.h;
    }
  }

  UpwindHamiltonian hamiltonian(int a, std::size_t k, const Point& qm, const Point& qp) const {
    return upwind_hamiltonian(grid_.d, coef_.a(a, k, 0), coef_.a(a, k, 1), coef_.a(a, k, 2), coef_.drift_vec(a, k),
                              qm, qp);
  }

  Eigen::Index idx(int a, std::size_t k) const { return static_cast<Eigen::Index>(a * N() + k); }

 private:
  struct Entry {
    long col;
    double w;
    int di, dj;
  };

  void build_stencils() {
    stencil_.resize(static_cast<std::size_t>(m()) * N());
    for (int a = 0; a < m(); ++a)
      for (std::size_t k = 0; k < N(); ++k) {
        auto& list = stencil_[a * N() + k];
        detail::node_stencil(coef_, grid_, a, k, false, [&](long col, double w, int di, int dj) {
          // the diagonal is implied: rows of the diffusion stencil sum to zero
          if (!(col == static_cast<long>(k) && di == 0 && dj == 0)) list.push_back({col, w, di, dj});
        });
      }
  }

  /// Shape value at a neighbour; boundary data are absolute and get the offset removed.
  double neighbour_value(const HJState& s, int a, std::size_t k, int di, int dj) const {
    const long nb = grid_.neighbour(k, di, dj);
    if (nb >= 0) return s.w(idx(a, static_cast<std::size_t>(nb)));
    const Index ij = grid_.multi_index(k);
    return (boundary_ ? boundary_(a, ij[0] + di, ij[1] + dj) : 0.0) - s.c;
  }

  double node_residual(const HJState& s, int a, std::size_t k, long& nclamp) const {
    const double wk = s.w(idx(a, k));
    double r = delta_ * s.c + delta_ * wk - rhs_[k];
    for (const auto& e : stencil_[a * N() + k]) r += e.w * (neighbour_value(s, a, k, e.di, e.dj) - wk);
    Point qm, qp;
    gradients(s, a, k, qm, qp);
    r += hamiltonian(a, k, qm, qp).value;
    for (int b = 0; b < m(); ++b) {
      const double wt = mu_ * coef_.fission(k, a, b) - coef_.coupling(k, a, b);
      if (wt == 0.0) continue;
      const double z = wk - s.w(idx(b, k));
      if (std::abs(z) > kExpClamp) ++nclamp;
      r += wt * std::exp(std::clamp(z, -kExpClamp, kExpClamp));
    }
    return r;
  }

  Grid grid_;
  NodeCoefficients coef_;
  double delta_;
  Point p_;
  double mu_;
  std::vector<double> rhs_;
  Boundary boundary_;
  std::vector<std::vector<Entry>> stencil_;
};

struct SolverTrace {
  int iterations = 0;
  int damping_events = 0;
  int pseudo_time_steps = 0;
  long clamp_events = 0;
  bool lifted_start = false;
};

struct NewtonOptions {
  double tol = 1e-8;
  int max_iterations = 200;
  /// Initial pseudo-time step; infinity means plain Newton from a supersolution.
  double tau0 = std::numeric_limits<double>::infinity();
};

/// Newton (= Howard policy iteration for the max-form Hamiltonian) with a
/// pseudo-time fallback. Converged when max|F| <= tol * max(1, |delta v|_inf).
/// On a torus the mean of each update moves into the offset.
inline HJState solve_hj_system(const HJSystem& sys, HJState s, const NewtonOptions& opt, SolverTrace& trace,
                               double* final_residual) {
  const bool split = sys.grid().topology == Topology::torus;
  auto target = [&](const HJState& x) {
    return opt.tol * std::max(1.0, sys.delta() * (std::abs(x.c) + x.w.cwiseAbs().maxCoeff()));
  };
  auto apply = [&](const HJState& x, const Vec& dv) {
    HJState y = x;
    if (split) {
      const double mean = dv.mean();
      y.c += mean;
      y.w.array() += dv.array() - mean;
    } else {
      y.w += dv;
    }
    return y;
  };
  double tau = opt.tau0;
  long clamps = 0;
  Vec F = sys.residual(s, &clamps);
  double r = F.cwiseAbs().maxCoeff();
  LinearSolver solver;
  int it = 0;
  for (; it < opt.max_iterations && !(r <= target(s)); ++it) {
    const bool newton = std::isinf(tau);
    SpMat J = sys.jacobian(s, newton ? 0.0 : 1.0 / tau);
    solver.compute(J);
    const Vec dv = solver.solve_backward(-F);
    HJState trial = apply(s, dv);
    long tc = 0;
    Vec Ft = sys.residual(trial, &tc);
    const double rt = Ft.cwiseAbs().maxCoeff();
    if (newton) {
      if (std::isfinite(rt)) {
        s = std::move(trial);
        F = std::move(Ft);
        r = rt;
        clamps = tc;
        continue;
      }
      // fall back to pseudo-time continuation
      tau = 1.0;
      ++trace.damping_events;
      continue;
    }
    ++trace.pseudo_time_steps;
    if (std::isfinite(rt) && rt < r) {
      s = std::move(trial);
      F = std::move(Ft);
      r = rt;
      clamps = tc;
      tau *= 4.0;
      if (tau > 1e12) tau = std::numeric_limits<double>::infinity();
    } else {
      ++trace.damping_events;
      tau *= 0.25;
      if (tau < std::ldexp(1.0, -30)) break;
    }
  }
  trace.iterations += it;
  trace.clamp_events = clamps;
  if (final_residual) *final_residual = r;
  if (!(r <= target(s)))
    fail(ErrorKind::convergence, "HJ system solver stopped after " + std::to_string(it) + " iterations with residual " +
                                     std::to_string(r));
  if (clamps > 0)
    fail(ErrorKind::divergence, "group gap above the exponential guard at convergence; the collapse bound is violated");
  return s;
}

struct CellSolution {
  double delta = 0.0;
  Point p{0.0, 0.0};
  double mu = 0.0;
  int m = 1;
  Grid grid;
  /// v = state.c + state.w, group-major.
  HJState state;
  double residual = 0.0;
  SolverTrace trace;
  /// Smallest slack in the two-sided delta-bound sandwich.
  double bound_margin = 0.0;

  std::size_t N() const { return grid.nodes(); }
  double value(int alpha, std::size_t k) const { return state.c + shape(alpha, k); }
  /// v minus its offset; differences of v are exact differences of the shape.
  double shape(int alpha, std::size_t k) const { return state.w(static_cast<Eigen::Index>(alpha * N() + k)); }
  Vec v() const { return state.full(); }
  /// Mean of delta * v over nodes and groups.
  double torus_mean_delta_v() const {
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < state.w.size(); ++i) s += state.w(i);
    return delta * (state.c + static_cast<double>(s / static_cast<long double>(state.w.size())));
  }
  double delta_v_at(std::size_t k) const { return delta * value(0, k); }
};

struct CellOptions {
  /// Torus side must satisfy L >= K / delta for environments without a period.
  double K = 10.0;
  bool enforce_torus_size = true;
  NewtonOptions newton;
  /// Warm start; lifted by a constant to a supersolution before use.
  HJState initial;
};

/// Delta-bound sandwich margin:
///   -(Lam|p|^2 + C(|p| + mu)) <= delta v <= -(lam|p|^2 - C(|p| + 1)).
inline double delta_bound_margin(const HJState& s, double delta, const Point& p, double mu, int d,
                                 const FieldConstants& k) {
  const double pn = norm(p, d);
  const double lower = -(k.ellip_max * pn * pn + k.C * (pn + mu));
  const double upper = -(k.ellip_min * pn * pn - k.C * (pn + 1.0));
  const double dmin = delta * (s.c + s.w.minCoeff()), dmax = delta * (s.c + s.w.maxCoeff());
  return std::min(dmin - lower, upper - dmax);
}

/// Solves the delta problem on the torus carried by the field.
inline CellSolution solve_delta_problem(const CoefficientField& field, double delta, Point p, double mu,
                                        const CellOptions& opt = {}) {
  require(delta > 0.0 && delta <= 1.0, ErrorKind::rejected_input, "delta must lie in (0, 1]");
  require(mu >= 0.0, ErrorKind::rejected_input, "mu must be nonnegative");
  const bool has_period = field.spec.kind == EnvKind::constant || field.spec.kind == EnvKind::periodic;
  if (opt.enforce_torus_size && !has_period)
    require(field.L >= opt.K / delta - 1e-9, ErrorKind::rejected_input,
            "torus side L is below K / delta for this environment");
  const Grid grid{field.d(), field.n, field.h, Topology::torus, {0.0, 0.0}};
  const int d = field.d(), m = field.m();
  if (d == 1) p[1] = 0.0;
  HJSystem sys(grid, field.coef, delta, p, mu);
  const std::size_t N = grid.nodes();

  CellSolution sol;
  sol.delta = delta;
  sol.p = p;
  sol.mu = mu;
  sol.m = m;
  sol.grid = grid;

  HJState s;
  if (opt.initial.w.size() == static_cast<Eigen::Index>(m * N)) {
    s = opt.initial;
    // F(v + k) = F(v) + delta k, so a constant lift gives a supersolution
    const double lift = std::max(0.0, -sys.residual(s).minCoeff()) / delta;
    if (lift > 0.0) {
      s.c += lift * (1.0 + 1e-12) + 1e-14 * (1.0 + std::abs(s.c));
      sol.trace.lifted_start = true;
    }
  } else {
    // constant supersolution
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < N; ++k)
      for (int a = 0; a < m; ++a) {
        double f = 0.0;
        for (int b = 0; b < m; ++b) f += mu * field.coef.fission(k, a, b) - field.coef.coupling(k, a, b);
        lo = std::min(lo, field.coef.hamiltonian(a, k, p) + f);
      }
    s.c = -lo / delta;
    s.w = Vec::Zero(static_cast<Eigen::Index>(m * N));
  }
  sol.state = solve_hj_system(sys, std::move(s), opt.newton, sol.trace, &sol.residual);
  const FieldConstants consts = field_constants(field.coef, field.spec.c_min);
  sol.bound_margin = delta_bound_margin(sol.state, delta, p, mu, d, consts);
  const double scale = std::max(1.0, delta * (std::abs(sol.state.c) + sol.state.w.cwiseAbs().maxCoeff()));
  if (sol.bound_margin < -1e-9 * scale)
    fail(ErrorKind::property_failure, "delta-bound sandwich violated by " + std::to_string(-sol.bound_margin));
  return sol;
}

/// max over groups and nodes of |v_a - v_b|.
inline double collapse_gap(const CellSolution& sol) {
  double g = 0.0;
  for (std::size_t k = 0; k < sol.N(); ++k) {
    double lo = sol.shape(0, k), hi = lo;
    for (int a = 1; a < sol.m; ++a) {
      lo = std::min(lo, sol.shape(a, k));
      hi = std::max(hi, sol.shape(a, k));
    }
    g = std::max(g, hi - lo);
  }
  return g;
}

/// max over nodes, groups and axes of |forward difference| / h.
inline double lipschitz_seminorm(const CellSolution& sol) {
  double L = 0.0;
  for (int a = 0; a < sol.m; ++a)
    for (std::size_t k = 0; k < sol.N(); ++k)
      for (int ax = 0; ax < sol.grid.d; ++ax) {
        const long nb = sol.grid.neighbour(k, ax == 0 ? 1 : 0, ax == 1 ? 1 : 0);
        if (nb < 0) continue;
        L = std::max(L, std::abs(sol.shape(a, static_cast<std::size_t>(nb)) - sol.shape(a, k)) / sol.grid.h);
      }
  return L;
}

/// Torus average of the forward differences, per axis (group 1).
inline Point mean_gradient(const CellSolution& sol) {
  require(sol.grid.topology == Topology::torus, ErrorKind::precondition, "mean gradient needs a torus solution");
  Point out{0.0, 0.0};
  for (int ax = 0; ax < sol.grid.d; ++ax) {
    // Neumaier summation keeps the telescoping sum at round-off level
    double s = 0.0, comp = 0.0;
    for (std::size_t k = 0; k < sol.N(); ++k) {
      const auto nb = static_cast<std::size_t>(sol.grid.neighbour(k, ax == 0 ? 1 : 0, ax == 1 ? 1 : 0));
      const double term = (sol.shape(0, nb) - sol.shape(0, k)) / sol.grid.h;
      const double t = s + term;
      comp += std::abs(s) >= std::abs(term) ? (s - t) + term : (term - t) + s;
      s = t;
    }
    out[ax] = (s + comp) / static_cast<double>(sol.N());
  }
  return out;
}

struct ContinuityReport {
  bool pass = true;
  double tol = 1e-6;
  // mu direction: c_lo (mu2 - mu1) - tol <= delta (v(mu1) - v(mu2)) <= C_hi (mu2 - mu1) + tol
  double mu_lower_margin = 0.0;
  double mu_upper_margin = 0.0;
  double mu_c_lo = 0.0;
  double mu_C_hi = 0.0;
  long mu_worst_node = -1;
  // same sandwich with the discrete constants min / max of sum_b sigma e^{v_a - v_b}
  double mu_exact_lower_margin = 0.0;
  double mu_exact_upper_margin = 0.0;
  // p direction: delta |v(p1) - v(p2)| <= C (1 + |p1| + |p2|) |p1 - p2| + tol
  double p_margin = 0.0;
  double p_C = 0.0;
  long p_worst_node = -1;
  // sharp discrete version: <= max |H(p2 + Dv1) - H(p1 + Dv1)|
  double p_exact_margin = 0.0;
};

/// Continuous-dependence checks in mu and in p at fixed delta.
inline ContinuityReport continuity_checks(const CoefficientField& field, double delta, std::pair<double, double> mu_pair,
                                          std::pair<Point, Point> p_pair, const CellOptions& opt = {},
                                          double tol = 1e-6) {
  const auto [mu1, mu2] = mu_pair;
  require(0.0 <= mu1 && mu1 <= mu2, ErrorKind::rejected_input, "mu pair must satisfy 0 <= mu1 <= mu2");
  const auto [p1, p2] = p_pair;
  const int d = field.d(), m = field.m();
  ContinuityReport rep;
  rep.tol = tol;
  const FieldConstants K = field_constants(field.coef, field.spec.c_min);

  const CellSolution s11 = solve_delta_problem(field, delta, p1, mu1, opt);
  CellOptions warm = opt;
  warm.initial = s11.state;
  const CellSolution s12 = solve_delta_problem(field, delta, p1, mu2, warm);
  const CellSolution s21 = solve_delta_problem(field, delta, p2, mu1, warm);
  const std::size_t N = s11.N();
  const double dmu = mu2 - mu1;

  // constants for the mu sandwich
  const double G = collapse_gap(s11);
  const bool diag_ok = K.sigma_diag_min >= K.c_min;
  rep.mu_c_lo = diag_ok ? K.c_min : K.c_min * std::exp(-G);
  rep.mu_C_hi = K.sigma_offdiag ? K.sigma_row_max * std::exp(G) : K.sigma_row_max;
  double s_lo = std::numeric_limits<double>::infinity(), s_hi = -s_lo;
  for (std::size_t k = 0; k < N; ++k)
    for (int a = 0; a < m; ++a) {
      double s = 0.0;
      for (int b = 0; b < m; ++b) s += field.coef.fission(k, a, b) * std::exp(s11.shape(a, k) - s11.shape(b, k));
      s_lo = std::min(s_lo, s);
      s_hi = std::max(s_hi, s);
    }
  rep.mu_lower_margin = rep.mu_exact_lower_margin = std::numeric_limits<double>::infinity();
  rep.mu_upper_margin = rep.mu_exact_upper_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < N; ++k)
    for (int a = 0; a < m; ++a) {
      const double diff = delta * ((s11.state.c - s12.state.c) + (s11.shape(a, k) - s12.shape(a, k)));
      const double lo_m = diff - (rep.mu_c_lo * dmu - tol);
      const double hi_m = rep.mu_C_hi * dmu + tol - diff;
      if (std::min(lo_m, hi_m) < std::min(rep.mu_lower_margin, rep.mu_upper_margin)) rep.mu_worst_node = static_cast<long>(k);
      rep.mu_lower_margin = std::min(rep.mu_lower_margin, lo_m);
      rep.mu_upper_margin = std::min(rep.mu_upper_margin, hi_m);
      rep.mu_exact_lower_margin = std::min(rep.mu_exact_lower_margin, diff - (s_lo * dmu - tol));
      rep.mu_exact_upper_margin = std::min(rep.mu_exact_upper_margin, s_hi * dmu + tol - diff);
    }

  // p direction
  const double dp = norm(p1 - p2, d);
  const double lip = lipschitz_seminorm(s11);
  rep.p_C = std::max(K.drift_max + 2.0 * K.ellip_max * std::sqrt(static_cast<double>(d)) * lip, 2.0 * K.ellip_max);
  const double bound = rep.p_C * (1.0 + norm(p1, d) + norm(p2, d)) * dp;
  const Grid& g = s11.grid;
  HJSystem sys1(g, field.coef, delta, p1, mu1), sys2(g, field.coef, delta, p2, mu1);
  double sharp = 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < N; ++k)
    for (int a = 0; a < m; ++a) {
      Point qm1, qp1, qm2, qp2;
      sys1.gradients(s11.state, a, k, qm1, qp1);
      sys2.gradients(s11.state, a, k, qm2, qp2);
      sharp = std::max(sharp, std::abs(sys2.hamiltonian(a, k, qm2, qp2).value - sys1.hamiltonian(a, k, qm1, qp1).value));
      const double diff = delta * std::abs((s11.state.c - s21.state.c) + (s11.shape(a, k) - s21.shape(a, k)));
      if (diff > worst) {
        worst = diff;
        rep.p_worst_node = static_cast<long>(k);
      }
    }
  rep.p_margin = bound + tol - worst;
  rep.p_exact_margin = sharp + tol - worst;
  rep.pass = rep.mu_lower_margin >= 0.0 && rep.mu_upper_margin >= 0.0 && rep.mu_exact_lower_margin >= 0.0 &&
             rep.mu_exact_upper_margin >= 0.0 && rep.p_margin >= 0.0 && rep.p_exact_margin >= 0.0;
  return rep;
}

struct ThetaCellResult {
  Point theta{0.0, 0.0};
  double lambda_theta = 0.0;
  /// Periodic factor u (group-major), normalized to 1 at node 0 of group 1.
  Vec u;
  /// psi = e^{-theta.y} u at the torus nodes.
  Vec psi_theta;
  double residual = 0.0;
  Grid grid;
};

/// Principal eigenvalue of the conjugated periodic problem: psi = e^{-theta.y} u
/// turns b into b + 2 A theta and adds -(A theta.theta + b.theta) to c_aa.
inline ThetaCellResult solve_theta_exponential(const CoefficientField& field, Point theta) {
  require(field.spec.kind == EnvKind::periodic || field.spec.kind == EnvKind::constant, ErrorKind::precondition,
          "exponential cell problem needs a periodic field");
  const int d = field.d(), m = field.m();
  if (d == 1) theta[1] = 0.0;
  NodeCoefficients coef = field.coef;
  for (std::size_t k = 0; k < coef.nodes; ++k)
    for (int a = 0; a < m; ++a) {
      const Point b = field.coef.drift_vec(a, k);
      const double at0 = coef.a_ij(a, k, 0, 0) * theta[0] + (d == 2 ? coef.a_ij(a, k, 0, 1) * theta[1] : 0.0);
      const double at1 = d == 2 ? coef.a_ij(a, k, 1, 0) * theta[0] + coef.a_ij(a, k, 1, 1) * theta[1] : 0.0;
      coef.drift(a, k, 0) = b[0] + 2.0 * at0;
      if (d == 2) coef.drift(a, k, 1) = b[1] + 2.0 * at1;
      coef.coupling(k, a, a) -= at0 * theta[0] + at1 * theta[1] + dot(b, theta, d);
    }
  const Grid grid{d, field.n, field.h, Topology::torus, {0.0, 0.0}};
  const BlockOperator M = assemble_system(coef, grid);
  const MassOperator S = assemble_mass(coef, grid);
  EigenOptions eo;
  eo.normalization_node = 0;
  const EigenPair pair = principal_eigenpair(M, S, grid, eo);
  ThetaCellResult out;
  out.theta = theta;
  out.lambda_theta = pair.lambda;
  out.u = pair.Phi;
  out.residual = pair.residual;
  out.grid = grid;
  out.psi_theta = out.u;
  for (int a = 0; a < m; ++a)
    for (std::size_t k = 0; k < grid.nodes(); ++k)
      out.psi_theta(static_cast<Eigen::Index>(a * grid.nodes() + k)) *= std::exp(-dot(theta, grid.position(k), d));
  return out;
}

}  // namespace effham
