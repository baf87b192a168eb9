#pragma once

// Experiments: criticality ladder, concentration, monotonicity suite, 1D HJ
// homogenization, and report emission.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "effham/cell.hpp"
#include "effham/config.hpp"
#include "effham/eig.hpp"
#include "effham/env.hpp"
#include "effham/hamiltonian.hpp"

namespace effham {

inline constexpr const char* kToolVersion = "0.1.0";

struct Verdict {
  std::string name;
  bool pass = true;
  double value = 0.0;
  double limit = 0.0;
  /// Reported verdicts are recorded but do not decide the run.
  bool asserted = true;
  std::string note;
};

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Plot {
  std::string name, title, xlabel, ylabel;
  std::vector<Series> series;
};

struct RunRecord {
  std::string id;
  std::string experiment;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<Verdict> verdicts;
  std::vector<Plot> plots;
  json provenance;
  json extra = json::object();
  bool skipped = false;
  std::string skip_reason;
  double wall_seconds = 0.0;
  std::string tool_version = kToolVersion;

  void add_row(std::vector<double> r) {
    require(r.size() == columns.size(), ErrorKind::consistency, "row width differs from the column list");
    rows.push_back(std::move(r));
  }
  Verdict& add_verdict(Verdict v) {
    verdicts.push_back(std::move(v));
    return verdicts.back();
  }
  const Verdict* verdict(const std::string& name) const {
    for (const auto& v : verdicts)
      if (v.name == name) return &v;
    return nullptr;
  }
  bool pass() const {
    for (const auto& v : verdicts)
      if (v.asserted && !v.pass) return false;
    return true;
  }
};

namespace detail {

inline json provenance_of(const ExperimentConfig& cfg) {
  return {{"config", config_to_json(cfg)}, {"seeds", cfg.seeds}, {"tool_version", kToolVersion}};
}

/// Torus realization covering the dilated box [lo, hi] / eps from the origin.
inline CoefficientField field_for_box(const EnvironmentSpec& spec, std::uint64_t seed, Point lo, Point hi,
                                      double eps, double h) {
  double extent = 0.0;
  for (int k = 0; k < spec.dimension; ++k) extent = std::max(extent, (std::max(hi[k], 0.0) - std::min(lo[k], 0.0)) / eps);
  double unit = 2.0 * h;
  if (spec.kind == EnvKind::periodic) unit = spec.period;
  if (spec.kind == EnvKind::checkerboard) unit = spec.checkerboard_cell;
  const long cells = std::lround(unit / h);
  require(std::abs(unit / h - static_cast<double>(cells)) < 1e-9 * std::max(1.0, unit / h) && cells >= 1,
          ErrorKind::configuration, "period or cell size must be a multiple of the grid spacing");
  if (cells % 2 != 0) unit *= 2.0;
  const double L = std::max(4.0, std::ceil((extent + 2.0 * h) / unit - 1e-9)) * unit;
  return sample_realization(spec, seed, L, h);
}

inline bool in_interior(const Point& x, const ExperimentConfig& cfg, int d) {
  for (int k = 0; k < d; ++k) {
    const double w = cfg.domain.hi[k] - cfg.domain.lo[k];
    if (x[k] < cfg.domain.lo[k] + cfg.interior_margin * w - 1e-12 ||
        x[k] > cfg.domain.hi[k] - cfg.interior_margin * w + 1e-12)
      return false;
  }
  return true;
}

/// Multilinear interpolation of box-grid node values (zero on the boundary)
/// from a coarse grid onto a finer grid covering the same box.
inline Vec interpolate_box(const Grid& coarse, const Vec& values, int m, const Grid& fine) {
  Vec out(static_cast<Eigen::Index>(m * fine.nodes()));
  auto at = [&](int a, int i, int j) -> double {
    if (i < 0 || i >= coarse.n[0] || (coarse.d == 2 && (j < 0 || j >= coarse.n[1]))) return 0.0;
    return values(static_cast<Eigen::Index>(a * coarse.nodes() + coarse.node(i, coarse.d == 2 ? j : 0)));
  };
  for (std::size_t k = 0; k < fine.nodes(); ++k) {
    const Point y = fine.position(k);
    // coarse node index i sits at lo + (i + 1) h
    const double s0 = (y[0] - coarse.lo[0]) / coarse.h - 1.0;
    const int i0 = static_cast<int>(std::floor(s0));
    const double t0 = s0 - i0;
    double s1 = 0.0, t1 = 0.0;
    int j0 = 0;
    if (coarse.d == 2) {
      s1 = (y[1] - coarse.lo[1]) / coarse.h - 1.0;
      j0 = static_cast<int>(std::floor(s1));
      t1 = s1 - j0;
    }
    for (int a = 0; a < m; ++a) {
      double v = (1 - t0) * at(a, i0, j0) + t0 * at(a, i0 + 1, j0);
      if (coarse.d == 2) v = (1 - t1) * v + t1 * ((1 - t0) * at(a, i0, j0 + 1) + t0 * at(a, i0 + 1, j0 + 1));
      out(static_cast<Eigen::Index>(a * fine.nodes() + k)) = v;
    }
  }
  return out;
}

inline EigenOptions eigen_options(const ExperimentConfig& cfg) {
  EigenOptions o;
  o.tol_lambda = cfg.tol.eig_lambda;
  o.tol_residual = cfg.tol.eig_residual;
  return o;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// lambda_bar, theta_bar and the flatness gap of the configured environment.
inline CriticalTriple critical_triple(const ExperimentConfig& cfg) {
  EffHamEstimator est(cfg.env, cfg.schedule);
  return compute_lambda_bar(est, cfg.lambda_bar);
}

inline json triple_to_json(const CriticalTriple& t, int d) {
  return {{"lambda_bar", t.lambda_bar},
          {"theta_bar", detail::point_to(t.theta_bar, d)},
          {"flatness_gap", t.flatness_gap},
          {"tolerances", {{"tol_root", t.tol_root}, {"tol_flat", t.tol_flat}, {"grid_step", t.grid_step}}},
          {"g_final", t.g_final},
          {"bisection_steps", t.bisection_steps}};
}

/// eps-ladder of scaled eigenvalues per seed, monotonicity in eps and the gap
/// to lambda_bar; a nested sub-box probes domain independence at the smallest eps.
inline RunRecord run_criticality_convergence(const ExperimentConfig& cfg,
                                             std::optional<CriticalTriple> triple = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = cfg.env.dimension;
  RunRecord rec;
  rec.id = cfg.id;
  rec.experiment = "criticality";
  rec.provenance = detail::provenance_of(cfg);
  rec.columns = {"eps", "lambda", "lambda_eps2", "residual", "iterations", "seed", "gap_to_lambda_bar"};
  if (!triple) triple = critical_triple(cfg);
  rec.extra["critical_triple"] = triple_to_json(*triple, d);

  double worst_increase = -std::numeric_limits<double>::infinity();
  Plot plot{"lambda_vs_eps", "scaled eigenvalue against eps", "eps", "lambda", {}};
  std::vector<double> nested_gap;
  for (std::uint64_t seed : cfg.seeds) {
    const CoefficientField field =
        detail::field_for_box(cfg.env, seed, cfg.domain.lo, cfg.domain.hi, cfg.eps.back(), cfg.h_micro);
    Series s{"seed " + std::to_string(seed), {}, {}};
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (double eps : cfg.eps) {
      DomainSpec dom = cfg.domain;
      dom.eps = eps;
      const EigenPair pair = epsilon_eigenvalue(field, dom, cfg.h_micro, detail::eigen_options(cfg));
      rec.add_row({eps, pair.lambda, pair.lambda_eps2, pair.residual, static_cast<double>(pair.iterations),
                   static_cast<double>(seed), pair.lambda - triple->lambda_bar});
      if (!std::isnan(prev)) worst_increase = std::max(worst_increase, pair.lambda - prev);
      prev = pair.lambda;
      s.x.push_back(eps);
      s.y.push_back(pair.lambda);
    }
    plot.series.push_back(std::move(s));

    DomainSpec inner = cfg.domain;
    inner.lo = cfg.nested_lo;
    inner.hi = cfg.nested_hi;
    inner.x0 = 0.5 * (inner.lo + inner.hi);
    inner.eps = cfg.eps.back();
    DomainSpec outer = cfg.domain;
    outer.eps = cfg.eps.back();
    const double lu = epsilon_eigenvalue(field, outer, cfg.h_micro, detail::eigen_options(cfg)).lambda;
    const double lv = epsilon_eigenvalue(field, inner, cfg.h_micro, detail::eigen_options(cfg)).lambda;
    nested_gap.push_back(std::abs(lu - lv));
  }
  rec.plots.push_back(std::move(plot));
  if (cfg.eps.size() > 1)
    rec.add_verdict({"eps_monotone", worst_increase <= cfg.tol.slack, worst_increase, cfg.tol.slack, true,
                     "largest increase of lambda as eps decreases"});
  double gap_small = 0.0;
  for (const auto& r : rec.rows)
    if (r[0] == cfg.eps.back()) gap_small = std::max(gap_small, std::abs(r[6]));
  rec.add_verdict({"gap_to_lambda_bar", true, gap_small, 0.0, false, "at the smallest eps, max over seeds"});
  const double ng = *std::max_element(nested_gap.begin(), nested_gap.end());
  rec.add_verdict({"nested_domain_agreement", ng <= 2.0 * cfg.tol.tol_root, ng, 2.0 * cfg.tol.tol_root, false,
                   "|lambda(U) - lambda(V)| at the smallest eps"});
  rec.wall_seconds = detail::seconds_since(t0);
  return rec;
}

/// Interior sup error of psi^eps against theta_bar . (x - x0), averaged over seeds.
inline RunRecord run_concentration(const ExperimentConfig& cfg, std::optional<CriticalTriple> triple = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = cfg.env.dimension;
  RunRecord rec;
  rec.id = cfg.id;
  rec.experiment = "concentration";
  rec.provenance = detail::provenance_of(cfg);
  rec.columns = {"eps", "seed", "error", "group_gap", "lambda"};
  if (!triple) triple = critical_triple(cfg);
  rec.extra["critical_triple"] = triple_to_json(*triple, d);
  if (triple->flatness_gap > 2.0 * triple->grid_step) {
    rec.skipped = true;
    rec.skip_reason = "flat spot: flatness gap " + std::to_string(triple->flatness_gap) + " exceeds 2 grid steps";
    rec.add_verdict({"flat_spot", true, triple->flatness_gap, 2.0 * triple->grid_step, false, rec.skip_reason});
    rec.wall_seconds = detail::seconds_since(t0);
    return rec;
  }
  const Point theta = triple->theta_bar;
  std::vector<double> mean_err(cfg.eps.size(), 0.0), sq_err(cfg.eps.size(), 0.0);
  Plot plot{"psi_profiles", "psi against the limit profile", "x", "psi", {}};
  for (std::uint64_t seed : cfg.seeds) {
    const CoefficientField field =
        detail::field_for_box(cfg.env, seed, cfg.domain.lo, cfg.domain.hi, cfg.eps.back(), cfg.h_micro);
    for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
      DomainSpec dom = cfg.domain;
      dom.eps = cfg.eps[e];
      const EigenPair pair = epsilon_eigenvalue(field, dom, cfg.h_micro, detail::eigen_options(cfg));
      const LogEigenfunction lf = hopf_cole(pair, dom);
      double err = 0.0, gap = 0.0;
      Series s{"eps " + std::to_string(cfg.eps[e]), {}, {}};
      for (std::size_t k = 0; k < lf.nodes(); ++k) {
        const Point x = lf.x(k);
        if (lf.boundary_layer[k] || !detail::in_interior(x, cfg, d)) continue;
        const double limit = dot(theta, x - cfg.domain.x0, d);
        double lo = lf.value(0, k), hi = lo;
        for (int a = 0; a < lf.m; ++a) {
          err = std::max(err, std::abs(lf.value(a, k) - limit));
          lo = std::min(lo, lf.value(a, k));
          hi = std::max(hi, lf.value(a, k));
        }
        gap = std::max(gap, hi - lo);
        if (d == 1 && seed == cfg.seeds.front()) {
          s.x.push_back(x[0]);
          s.y.push_back(lf.value(0, k));
        }
      }
      if (d == 1 && seed == cfg.seeds.front()) plot.series.push_back(std::move(s));
      rec.add_row({cfg.eps[e], static_cast<double>(seed), err, gap, pair.lambda});
      mean_err[e] += err / static_cast<double>(cfg.seeds.size());
      sq_err[e] += err * err / static_cast<double>(cfg.seeds.size());
    }
  }
  if (d == 1) {
    Series lim{"limit", {}, {}};
    const double a = cfg.domain.lo[0] + cfg.interior_margin * (cfg.domain.hi[0] - cfg.domain.lo[0]);
    const double b = cfg.domain.hi[0] - cfg.interior_margin * (cfg.domain.hi[0] - cfg.domain.lo[0]);
    for (double x : {a, b}) {
      lim.x.push_back(x);
      lim.y.push_back(theta[0] * (x - cfg.domain.x0[0]));
    }
    plot.series.push_back(std::move(lim));
    rec.plots.push_back(std::move(plot));
  }
  json ladder = json::array();
  bool decreasing = true;
  double worst_step = -std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
    const double sd = std::sqrt(std::max(0.0, sq_err[e] - mean_err[e] * mean_err[e]));
    ladder.push_back({{"eps", cfg.eps[e]}, {"mean_error", mean_err[e]}, {"dispersion", sd}});
    if (e > 0) {
      worst_step = std::max(worst_step, mean_err[e] - mean_err[e - 1]);
      if (!(mean_err[e] < mean_err[e - 1])) decreasing = false;
    }
  }
  rec.extra["ladder"] = ladder;
  if (cfg.eps.size() > 1)
    rec.add_verdict({"error_strictly_decreasing", decreasing, worst_step, 0.0, true,
                     "largest change of the seed-averaged error along the ladder"});
  rec.add_verdict({"error_cap", mean_err.back() <= cfg.tol.concentration_cap, mean_err.back(),
                   cfg.tol.concentration_cap, true, "seed-averaged error at the smallest eps"});
  rec.wall_seconds = detail::seconds_since(t0);
  return rec;
}

/// Domain monotonicity, eps monotonicity and the max-min certificate, per seed.
inline RunRecord run_monotonicity_suite(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = cfg.env.dimension;
  RunRecord rec;
  rec.id = cfg.id;
  rec.experiment = "monotonicity";
  rec.provenance = detail::provenance_of(cfg);
  rec.columns = {"seed", "eps", "lambda_U", "lambda_V", "lambda_coarse", "certified_bound", "certificate_margin"};
  const double h = cfg.h_micro, hc = 2.0 * h;
  double domain_worst = -std::numeric_limits<double>::infinity();
  double eps_worst = -std::numeric_limits<double>::infinity();
  double cert_worst = -std::numeric_limits<double>::infinity();
  bool all_certified = true;
  for (std::uint64_t seed : cfg.seeds) {
    // sampled at the coarse spacing so both grids read the same coefficients
    const CoefficientField field = detail::field_for_box(cfg.env, seed, cfg.domain.lo, cfg.domain.hi, cfg.eps.back(), hc);
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (double eps : cfg.eps) {
      const Point lo = (1.0 / eps) * cfg.domain.lo, hi = (1.0 / eps) * cfg.domain.hi;
      const Grid fine = Grid::box(d, lo, hi, h);
      const Grid coarse = Grid::box(d, lo, hi, hc);
      const NodeCoefficients cf = coefficients_on(field, fine);
      const BlockOperator M = assemble_system(cf, fine);
      const MassOperator S = assemble_mass(cf, fine);
      const EigenPair pu = principal_eigenpair(M, S, fine, detail::eigen_options(cfg));

      // sub-box snapped to fine nodes, so its nodes are a subset of the box nodes
      Point vlo = lo, vhi = hi;
      for (int k = 0; k < d; ++k) {
        vlo[k] = lo[k] + std::round((cfg.nested_lo[k] / eps - lo[k]) / h) * h;
        vhi[k] = lo[k] + std::round((cfg.nested_hi[k] / eps - lo[k]) / h) * h;
      }
      const Grid sub = Grid::box(d, vlo, vhi, h);
      const NodeCoefficients cs = coefficients_on(field, sub);
      const EigenPair pv =
          principal_eigenpair(assemble_system(cs, sub), assemble_mass(cs, sub), sub, detail::eigen_options(cfg));
      domain_worst = std::max(domain_worst, pu.lambda - pv.lambda);

      if (!std::isnan(prev)) eps_worst = std::max(eps_worst, pu.lambda - prev);
      prev = pu.lambda;

      // coarse eigenfunction interpolated to the fine grid; its Collatz-Wielandt
      // value min (M Psi) / (S Psi) is certified and may not exceed lambda_fine
      const NodeCoefficients cc = coefficients_on(field, coarse);
      const EigenPair pc =
          principal_eigenpair(assemble_system(cc, coarse), assemble_mass(cc, coarse), coarse, detail::eigen_options(cfg));
      Vec psi = detail::interpolate_box(coarse, pc.Phi, pc.m, fine);
      auto cw_bound = [&](const Vec& v) {
        const Vec Mp = M.matrix * v, Sp = S.matrix * v;
        double lo = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < v.size(); ++i) lo = std::min(lo, Mp(i) / Sp(i));
        return lo;
      };
      // two smoothing steps (M - sigma S)^{-1} S with sigma below the current bound
      for (int step = 0; step < 2; ++step) {
        const double lo = cw_bound(psi);
        const double sigma = lo - 1e-3 * std::max(1.0, std::abs(lo));
        const SpMat shifted = M.matrix - sigma * S.matrix;
        LinearSolver solver(shifted);
        psi = solver.solve_backward(S.matrix * psi);
        psi /= psi.maxCoeff();
        require(psi.minCoeff() > 0.0, ErrorKind::consistency, "smoothed certificate vector lost positivity");
      }
      // deflate by a rounding bound on (M psi)_i, gamma (|M| |psi|)_i, so the
      // recomputed defect cannot dip below zero at the minimizing node
      const double gamma = 16.0 * std::numeric_limits<double>::epsilon();
      const Vec Mp = M.matrix * psi, Sp = S.matrix * psi;
      const Vec absMp = M.matrix.cwiseAbs() * psi.cwiseAbs();
      double bound = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < psi.size(); ++i) bound = std::min(bound, (Mp(i) - gamma * absMp(i)) / Sp(i));
      const Certificate cert = certify_lower_bound(M, S, bound, psi);
      all_certified = all_certified && cert.certified;
      cert_worst = std::max(cert_worst, bound - pu.lambda);
      rec.add_row({static_cast<double>(seed), eps, pu.lambda, pv.lambda, pc.lambda, bound, cert.margin});
    }
  }
  rec.add_verdict({"domain_monotone", domain_worst <= cfg.tol.slack, domain_worst, cfg.tol.slack, true,
                   "max of lambda(U) - lambda(V) for V inside U"});
  if (cfg.eps.size() > 1)
    rec.add_verdict({"eps_monotone", eps_worst <= cfg.tol.slack, eps_worst, cfg.tol.slack, true,
                     "largest increase of lambda as eps decreases"});
  rec.add_verdict({"certificate", all_certified && cert_worst <= cfg.tol.slack, cert_worst, cfg.tol.slack, true,
                   "certified lower bound minus the fine eigenvalue"});
  rec.wall_seconds = detail::seconds_since(t0);
  return rec;
}

struct HJ1DSolutionPair {
  double eps = 0.0;
  /// Macroscopic node positions.
  std::vector<double> x;
  /// u_eps per group, group-major.
  std::vector<std::vector<double>> u_eps;
  std::vector<double> u_eff;
  double sup_error = 0.0;
  /// max over interior nodes of |u_a - u_b|.
  double group_gap = 0.0;
  bool hypothesis_met = true;
  int iterations = 0;
};

/// Effective solution of Hbar(u', mu) = g on [a, b], u(a) = 0, u(b) = u_right,
/// built from the two branches of Hbar^{-1}(g) with a single switch point.
struct EffectiveProfile {
  double a = 0.0, b = 1.0;
  std::vector<double> xs, p_minus, p_plus;
  std::vector<double> P_minus, P_plus;  // cumulative integrals from a
  double x_star = 0.0;
  double theta_min = 0.0, h_min = 0.0;

  static double interp(const std::vector<double>& xs, const std::vector<double>& v, double x) {
    if (x <= xs.front()) return v.front();
    if (x >= xs.back()) return v.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
    const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    return (1 - t) * v[i] + t * v[i + 1];
  }

  double operator()(double x) const {
    if (x <= x_star) return interp(xs, P_plus, x);
    return interp(xs, P_plus, x_star) + interp(xs, P_minus, x) - interp(xs, P_minus, x_star);
  }
};

inline EffectiveProfile effective_profile(EffHamEstimator& est, const ExperimentConfig& cfg, int samples = 129) {
  require(cfg.env.dimension == 1, ErrorKind::configuration, "1D homogenization needs dimension 1");
  EffectiveProfile prof;
  prof.a = cfg.domain.lo[0];
  prof.b = cfg.domain.hi[0];
  const double mu = cfg.hj_mu;
  const Minimum mn = min_over_p(est, mu, cfg.lambda_bar.minimize);
  prof.theta_min = mn.theta[0];
  prof.h_min = mn.value;
  for (int i = 0; i < samples; ++i) prof.xs.push_back(prof.a + (prof.b - prof.a) * i / (samples - 1));
  double gmin = std::numeric_limits<double>::infinity();
  for (double x : prof.xs) gmin = std::min(gmin, cfg.g(x));
  require(gmin > mn.value + cfg.tol.g_margin, ErrorKind::configuration,
          "min g = " + std::to_string(gmin) + " must exceed min_p Hbar = " + std::to_string(mn.value) + " by " +
              std::to_string(cfg.tol.g_margin));

  std::map<double, std::pair<double, double>> roots;
  const double step = cfg.lambda_bar.minimize.dp;
  auto root = [&](double gv, double dir) {
    double lo = prof.theta_min, hi = lo + dir * step;
    int guard = 0;
    while (est({hi, 0.0}, mu) <= gv) {
      lo = hi;
      hi += dir * step;
      require(++guard < 10000, ErrorKind::divergence, "Hbar does not reach g; coercivity violated");
    }
    for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-10; ++it) {
      const double mid = 0.5 * (lo + hi);
      (est({mid, 0.0}, mu) <= gv ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  for (double x : prof.xs) {
    const double gv = cfg.g(x);
    auto it = roots.find(gv);
    if (it == roots.end()) it = roots.emplace(gv, std::pair{root(gv, -1.0), root(gv, 1.0)}).first;
    prof.p_minus.push_back(it->second.first);
    prof.p_plus.push_back(it->second.second);
  }
  prof.P_minus.assign(samples, 0.0);
  prof.P_plus.assign(samples, 0.0);
  for (int i = 1; i < samples; ++i) {
    const double dx = prof.xs[i] - prof.xs[i - 1];
    prof.P_minus[i] = prof.P_minus[i - 1] + 0.5 * dx * (prof.p_minus[i] + prof.p_minus[i - 1]);
    prof.P_plus[i] = prof.P_plus[i - 1] + 0.5 * dx * (prof.p_plus[i] + prof.p_plus[i - 1]);
  }
  const double lo_val = prof.P_minus.back(), hi_val = prof.P_plus.back();
  require(cfg.u_right >= lo_val - 1e-12 && cfg.u_right <= hi_val + 1e-12, ErrorKind::configuration,
          "u_right = " + std::to_string(cfg.u_right) + " is not reachable; admissible range [" +
              std::to_string(lo_val) + ", " + std::to_string(hi_val) + "]");
  // value at b is increasing in the switch point
  double s0 = prof.a, s1 = prof.b;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (s0 + s1);
    prof.x_star = mid;
    (prof(prof.b) < cfg.u_right ? s0 : s1) = mid;
  }
  prof.x_star = 0.5 * (s0 + s1);
  return prof;
}

/// u_eps from the eps-scaled system on (a, b) / eps by pseudo-time continuation
/// from u_eff / eps, compared with u_eff on the interior.
inline HJ1DSolutionPair solve_hj1d(const ExperimentConfig& cfg, const EffectiveProfile& prof, double eps,
                                   std::uint64_t seed) {
  const double h = cfg.schedule.h;
  const double a = cfg.domain.lo[0], b = cfg.domain.hi[0];
  const CoefficientField field = detail::field_for_box(cfg.env, seed, cfg.domain.lo, cfg.domain.hi, eps, h);
  const Grid grid = Grid::box(1, {a / eps, 0.0}, {b / eps, 0.0}, h);
  const NodeCoefficients coef = coefficients_on(field, grid);
  HJSystem sys(grid, coef, 0.0, {0.0, 0.0}, cfg.hj_mu);
  std::vector<double> rhs(grid.nodes());
  for (std::size_t k = 0; k < grid.nodes(); ++k) rhs[k] = cfg.g(eps * grid.position(k)[0]);
  sys.set_rhs(std::move(rhs));
  const double right = cfg.u_right / eps;
  const int n = grid.n[0];
  sys.set_boundary([right, n](int, int i, int) { return i >= n ? right : 0.0; });
  const int m = coef.m;
  HJState s;
  s.w = Vec(static_cast<Eigen::Index>(m * grid.nodes()));
  for (int al = 0; al < m; ++al)
    for (std::size_t k = 0; k < grid.nodes(); ++k)
      s.w(static_cast<Eigen::Index>(al * grid.nodes() + k)) = prof(eps * grid.position(k)[0]) / eps;
  NewtonOptions no;
  no.tol = cfg.tol.newton;
  no.tau0 = 1.0;
  no.max_iterations = 400;
  SolverTrace trace;
  double res = 0.0;
  s = solve_hj_system(sys, std::move(s), no, trace, &res);

  HJ1DSolutionPair out;
  out.eps = eps;
  out.iterations = trace.iterations;
  out.u_eps.assign(m, {});
  for (std::size_t k = 0; k < grid.nodes(); ++k) {
    const double x = eps * grid.position(k)[0];
    out.x.push_back(x);
    out.u_eff.push_back(prof(x));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int al = 0; al < m; ++al) {
      const double u = eps * s.w(static_cast<Eigen::Index>(al * grid.nodes() + k));
      out.u_eps[al].push_back(u);
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
    if (detail::in_interior({x, 0.0}, cfg, 1)) {
      out.group_gap = std::max(out.group_gap, hi - lo);
      for (int al = 0; al < m; ++al) out.sup_error = std::max(out.sup_error, std::abs(out.u_eps[al].back() - prof(x)));
    }
  }
  out.hypothesis_met = out.group_gap <= cfg.tol.group_gap;
  return out;
}

inline RunRecord run_hj1d_homogenization(const ExperimentConfig& cfg, std::vector<HJ1DSolutionPair>* pairs = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.id = cfg.id;
  rec.experiment = "hj1d";
  rec.provenance = detail::provenance_of(cfg);
  rec.columns = {"eps", "seed", "sup_error", "group_gap", "iterations"};
  EffHamEstimator est(cfg.env, cfg.schedule);
  const EffectiveProfile prof = effective_profile(est, cfg);
  rec.extra["effective"] = {{"theta_min", prof.theta_min},
                            {"h_min", prof.h_min},
                            {"x_star", prof.x_star},
                            {"p_minus", prof.p_minus.front()},
                            {"p_plus", prof.p_plus.front()}};
  std::vector<double> mean(cfg.eps.size(), 0.0);
  bool hypothesis = true;
  Plot plot{"hj1d_profiles", "u_eps against u_eff", "x", "u", {}};
  for (std::uint64_t seed : cfg.seeds)
    for (std::size_t e = 0; e < cfg.eps.size(); ++e) {
      HJ1DSolutionPair pr = solve_hj1d(cfg, prof, cfg.eps[e], seed);
      rec.add_row({pr.eps, static_cast<double>(seed), pr.sup_error, pr.group_gap, static_cast<double>(pr.iterations)});
      mean[e] += pr.sup_error / static_cast<double>(cfg.seeds.size());
      hypothesis = hypothesis && pr.hypothesis_met;
      if (seed == cfg.seeds.front()) {
        plot.series.push_back({"u_eps eps " + std::to_string(pr.eps), pr.x, pr.u_eps[0]});
        if (e + 1 == cfg.eps.size()) plot.series.push_back({"u_eff", pr.x, pr.u_eff});
      }
      if (pairs) pairs->push_back(std::move(pr));
    }
  rec.plots.push_back(std::move(plot));
  if (!hypothesis) rec.extra["hypothesis"] = "unmet: group profiles diverge";
  rec.add_verdict({"group_collapse", hypothesis, 0.0, cfg.tol.group_gap, false, hypothesis ? "met" : "hypothesis unmet"});
  if (cfg.eps.size() > 1) {
    bool dec = true;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 1; e < mean.size(); ++e) {
      worst = std::max(worst, mean[e] - mean[e - 1]);
      if (!(mean[e] < mean[e - 1])) dec = false;
    }
    rec.add_verdict({"error_strictly_decreasing", dec, worst, 0.0, true, "seed-averaged sup error along the ladder"});
  }
  rec.add_verdict({"error_cap", mean.back() <= cfg.tol.hj1d_cap, mean.back(), cfg.tol.hj1d_cap, true,
                   "sup error at the smallest eps"});
  rec.wall_seconds = detail::seconds_since(t0);
  return rec;
}

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_csv(const RunRecord& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  for (std::size_t i = 0; i < r.columns.size(); ++i) out << (i ? "," : "") << r.columns[i];
  out << "\n";
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << "\n";
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

inline void write_svg(const Plot& p, const std::filesystem::path& path) {
  const double W = 640, H = 400, ml = 60, mr = 20, mt = 30, mb = 45;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto Y = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << p.title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">" << p.xlabel
      << " [" << format_number(x0) << ", " << format_number(x1) << "]</text>\n";
  out << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2 << ")\">"
      << p.ylabel << " [" << format_number(y0) << ", " << format_number(y1) << "]</text>\n";
  for (std::size_t s = 0; s < p.series.size(); ++s) {
    const auto& se = p.series[s];
    const char* c = colours[s % 7];
    out << "<polyline fill=\"none\" stroke=\"" << c << "\" points=\"";
    for (std::size_t i = 0; i < se.x.size(); ++i) out << X(se.x[i]) << "," << Y(se.y[i]) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << W - mr - 150 << "\" y=\"" << mt + 14 * (s + 1) << "\" font-size=\"11\" fill=\"" << c
        << "\">" << se.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace detail

inline json record_summary(const RunRecord& r) {
  json v = json::array();
  for (const auto& x : r.verdicts)
    v.push_back({{"name", x.name},
                 {"pass", x.pass},
                 {"asserted", x.asserted},
                 {"value", detail::number_or_null(x.value)},
                 {"limit", detail::number_or_null(x.limit)},
                 {"note", x.note}});
  return {{"id", r.id},
          {"experiment", r.experiment},
          {"pass", r.pass()},
          {"skipped", r.skipped},
          {"skip_reason", r.skip_reason},
          {"verdicts", v},
          {"provenance", r.provenance},
          {"extra", r.extra},
          {"wall_seconds", r.wall_seconds},
          {"tool_version", r.tool_version},
          {"rows", r.rows.size()}};
}

/// Writes <id>_<experiment>.csv per record, optional SVG plots and summary.json.
inline json emit_report(const std::vector<RunRecord>& records, const std::string& dir, bool plots = false) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create output directory " + dir + ": " + ec.message());
  json summary{{"tool_version", kToolVersion}, {"records", json::array()}, {"pass", true}};
  for (const auto& r : records) {
    const std::string stem = r.id + "_" + r.experiment;
    detail::write_csv(r, fs::path(dir) / (stem + ".csv"));
    json s = record_summary(r);
    s["csv"] = stem + ".csv";
    if (plots)
      for (const auto& p : r.plots) {
        if (p.series.empty()) continue;
        const std::string name = stem + "_" + p.name + ".svg";
        detail::write_svg(p, fs::path(dir) / name);
        s["plots"].push_back(name);
      }
    summary["pass"] = summary["pass"].get<bool>() && r.pass();
    summary["records"].push_back(s);
  }
  const fs::path path = fs::path(dir) / "summary.json";
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << summary.dump(2) << "\n";
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
  return summary;
}

}  // namespace effham
