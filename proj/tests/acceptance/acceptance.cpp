// Runs every acceptance criterion at its stated tolerance and prints one
// pass/fail line per criterion. Exit status is nonzero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "effham/effham.hpp"

using namespace effham;

namespace {

constexpr double kPi = std::numbers::pi;

ExperimentConfig config(const std::string& name) {
  return load_config(std::string(EFFHAM_CONFIG_DIR) + "/" + name + ".json");
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

/// Aggregates checks across all torus solutions seen by a criterion.
struct TorusInvariants {
  double worst_mean_gradient = 0.0;
  double worst_bound_margin = std::numeric_limits<double>::infinity();
  long solutions = 0;

  void add(const CellSolution& s) {
    const Point g = mean_gradient(s);
    for (int k = 0; k < s.grid.d; ++k) worst_mean_gradient = std::max(worst_mean_gradient, std::abs(g[k]));
    worst_bound_margin = std::min(worst_bound_margin, s.bound_margin);
    ++solutions;
  }
};

TorusInvariants g_invariants;

// 1. constant-coefficient criticality oracle
void constant_criticality(Outcome& o) {
  ExperimentConfig cfg = config("constant_drift");
  o.check(cfg.h_micro <= 1.0 / 512.0 + 1e-15, "h_micro <= 1/512");
  const CriticalTriple tr = critical_triple(cfg);
  const RunRecord r = run_criticality_convergence(cfg, tr);
  double worst = 0.0;
  for (const auto& row : r.rows) {
    const double eps = row[0];
    const double oracle = 1.0 + eps * eps * kPi * kPi;
    worst = std::max(worst, std::abs(row[1] - oracle) / oracle);
  }
  o.detail << "max rel err " << worst << " (<= 2e-2); lambda_bar " << tr.lambda_bar << ", theta_bar "
           << tr.theta_bar[0];
  o.check(worst <= 2e-2, "lambda_eps");
  o.check(std::abs(tr.lambda_bar - 1.0) <= 0.02, "lambda_bar");
  o.check(std::abs(tr.theta_bar[0] + 1.0) <= 0.02, "theta_bar");
}

// 2. two-group constant oracle
void two_group(Outcome& o) {
  const ExperimentConfig cfg = config("two_group");
  double worst = 0.0;
  for (double delta : cfg.schedule.deltas) {
    const CoefficientField f = sample_realization(cfg.env, 1, torus_side(cfg.env, delta, cfg.schedule), cfg.schedule.h);
    for (double p : {-1.5, -0.5, 0.0, 0.25, 1.0})
      for (double mu : {0.0, 0.3, 1.0}) {
        const CellSolution s = solve_delta_problem(f, delta, {p, 0.0}, mu);
        g_invariants.add(s);
        for (int a = 0; a < 2; ++a)
          for (std::size_t k = 0; k < s.N(); ++k)
            worst = std::max(worst, std::abs(-delta * s.value(a, k) - (p * p + mu)));
      }
  }
  EffHamEstimator est(cfg.env, cfg.schedule);
  for (double p : {-1.0, 0.5})
    for (double mu : {0.0, 0.7}) worst = std::max(worst, std::abs(est(Point{p, 0.0}, mu) - (p * p + mu)));
  const CriticalTriple tr = compute_lambda_bar(est, cfg.lambda_bar);
  o.detail << "max |Hbar - (p^2 + mu)| " << worst << " (<= 1e-6); lambda_bar " << tr.lambda_bar << ", theta_bar "
           << tr.theta_bar[0];
  o.check(worst <= 1e-6, "pointwise");
  o.check(std::abs(tr.lambda_bar) <= 1e-3, "lambda_bar");
  o.check(std::abs(tr.theta_bar[0]) <= cfg.lambda_bar.minimize.dp, "theta_bar");
}

// 3. periodic bridge identity
void periodic_bridge(Outcome& o) {
  const ExperimentConfig cfg = config("periodic");
  const CoefficientField f = sample_realization(cfg.env, 1, cfg.env.period, cfg.schedule.h);
  auto lambda = [&](double t) { return solve_theta_exponential(f, {t, 0.0}).lambda_theta; };
  // lambda(0) = 0 for c = 0; the admissible branch lambda >= 0 is [t_root, 0]
  double lo = -4.0, hi = -1e-3;
  require(lambda(lo) < 0.0 && lambda(hi) > 0.0, ErrorKind::consistency, "no sign change of lambda(theta)");
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    (lambda(mid) < 0.0 ? lo : hi) = mid;
  }
  const double t_root = hi;
  const auto [t_max, neg] = golden_section([&](double t) { return -lambda(t); }, t_root, 0.0, 1e-9);
  const double lambda_max = -neg;

  EffHamEstimator est(cfg.env, cfg.schedule);
  double worst = 0.0;
  for (int i = 0; i < 9; ++i) {
    const double t = t_root + (0.05 + 0.9 * i / 8.0) * (0.0 - t_root);
    const double mu = lambda(t);
    worst = std::max(worst, std::abs(est(Point{t, 0.0}, mu)));
  }
  const CriticalTriple tr = compute_lambda_bar(est, cfg.lambda_bar);
  const double rel = std::abs(tr.lambda_bar - lambda_max) / lambda_max;
  o.detail << "max |Hbar(theta, lambda(theta))| " << worst << " (<= 3e-3); lambda_bar " << tr.lambda_bar
           << " vs max lambda(theta) " << lambda_max << " at " << t_max << ", rel " << rel << " (<= 1e-2)";
  o.check(worst <= 3e-3, "bridge");
  o.check(rel <= 1e-2, "lambda_bar");
}

// 5. estimate suite
void estimate_suite(Outcome& o) {
  const ExperimentConfig cfg = config("checkerboard_two_group");
  const std::vector<double> deltas{0.2, 0.1, 0.05};
  double worst_collapse = 1.0, worst_lip = 1.0;
  for (std::uint64_t seed : cfg.seeds)
    for (double p : {-0.5, 0.5, 1.0})
      for (double mu : {0.0, 0.5}) {
        double cmin = 1e300, cmax = 0.0, lmin = 1e300, lmax = 0.0;
        for (double delta : deltas) {
          const CoefficientField f =
              sample_realization(cfg.env, seed, torus_side(cfg.env, delta, cfg.schedule), cfg.schedule.h);
          const CellSolution s = solve_delta_problem(f, delta, {p, 0.0}, mu);
          g_invariants.add(s);
          const double c = collapse_gap(s), l = lipschitz_seminorm(s);
          cmin = std::min(cmin, c);
          cmax = std::max(cmax, c);
          lmin = std::min(lmin, l);
          lmax = std::max(lmax, l);
        }
        worst_collapse = std::max(worst_collapse, cmax / cmin);
        worst_lip = std::max(worst_lip, lmax / lmin);
      }
  o.detail << "max ratio collapse " << worst_collapse << ", lipschitz " << worst_lip
           << " (<= 2); delta-bound sandwich enforced on every solve";
  o.check(worst_collapse <= 2.0, "collapse");
  o.check(worst_lip <= 2.0, "lipschitz");
}

// 6. continuity suite
void continuity_suite(Outcome& o) {
  double worst = std::numeric_limits<double>::infinity();
  for (const char* name : {"constant_drift", "checkerboard_two_group"}) {
    const ExperimentConfig cfg = config(name);
    for (double delta : {0.2, 0.1}) {
      const CoefficientField f =
          sample_realization(cfg.env, cfg.seeds.front(), torus_side(cfg.env, delta, cfg.schedule), cfg.schedule.h);
      for (const auto& pp : {std::pair{Point{0.0, 0.0}, Point{0.5, 0.0}}, std::pair{Point{-1.0, 0.0}, Point{-0.75, 0.0}}}) {
        const ContinuityReport r = continuity_checks(f, delta, {0.0, 0.5}, pp, {}, cfg.tol.continuity);
        worst = std::min({worst, r.mu_lower_margin, r.mu_upper_margin, r.p_margin});
        o.check(r.pass, std::string(name) + " delta " + std::to_string(delta));
      }
    }
  }
  o.detail << "smallest margin " << worst << " (>= 0 with 1e-6 slack)";
}

// 7. structure of Hbar
void structure(Outcome& o) {
  for (const char* name : {"checkerboard_two_group", "quasiperiodic"}) {
    const ExperimentConfig cfg = config(name);
    EffHamEstimator est(cfg.env, cfg.schedule);
    const EffHamTable t = tabulate(est, cfg.table_mu, cfg.table_p_max, cfg.table_dp);
    const ConvexityReport cr = convexity_report(t, cfg.env.kind, cfg.tol.convexity_floor);
    const FieldConstants K = est.constants();
    const double tol = std::max(3.0 * t.max_spread(), cfg.tol.convexity_floor);
    double coer = std::numeric_limits<double>::infinity();
    double G = 0.0;
    for (const auto& s : t.samples) {
      coer = std::min(coer, coercivity_margin(s, 1, K, tol));
      G = std::max(G, s.collapse);
    }
    // mu slope against [c_min e^{-G}, sigma_row_max e^{G}]
    const double dmu = 0.5;
    const double lo = K.sigma_diag_min >= K.c_min ? K.c_min : K.c_min * std::exp(-G);
    const double hi = K.sigma_offdiag ? K.sigma_row_max * std::exp(G) : K.sigma_row_max;
    double smin = 1e300, smax = -1e300;
    for (std::size_t i = 0; i < t.p.size(); i += 2) {
      const double slope = (est(t.p[i], cfg.table_mu + dmu) - t.value(i)) / dmu;
      smin = std::min(smin, slope);
      smax = std::max(smax, slope);
    }
    o.detail << name << ": convexity min defect " << cr.min_defect << " (tol " << cr.tol << "), coercivity margin "
             << coer << ", mu slope [" << smin << ", " << smax << "] in [" << lo << ", " << hi << "]; ";
    o.check(cr.pass, std::string(name) + " convexity");
    o.check(coer >= 0.0, std::string(name) + " coercivity");
    o.check(smin >= lo - tol / dmu && smax <= hi + tol / dmu, std::string(name) + " mu slope");
    if (cfg.env.kind == EnvKind::quasiperiodic) o.check(cr.min_defect > 0.0, "strict gap");
  }
}

// 8. concentration
void concentration(Outcome& o) {
  const ExperimentConfig cb = config("checkerboard");
  const CriticalTriple tr = critical_triple(cb);
  const RunRecord r = run_concentration(cb, tr);
  o.check(!r.skipped, "checkerboard has a flat spot: " + r.skip_reason);
  if (!r.skipped) {
    o.detail << "checkerboard (" << cb.seeds.size() << " seeds) mean errors";
    for (const auto& e : r.extra["ladder"])
      o.detail << " " << e["mean_error"].get<double>() << " (sd " << e["dispersion"].get<double>() << ")";
    o.check(r.verdict("error_strictly_decreasing")->pass, "strict decrease");
  }
  ExperimentConfig cd = config("constant_drift");
  const RunRecord rc = run_concentration(cd);
  double last = 0.0;
  for (const auto& row : rc.rows)
    if (row[0] == cd.eps.back()) last = row[2];
  o.detail << "; constant error at eps " << cd.eps.back() << ": " << last << " (<= 0.06)";
  o.check(std::abs(cd.eps.back() - 0.025) < 1e-12 && last <= 0.06, "constant cap");
  // the log-eigenfunction vanishes at x0 after normalization
  DomainSpec dom = cd.domain;
  dom.eps = cd.eps.back();
  const CoefficientField f = detail::field_for_box(cd.env, 1, dom.lo, dom.hi, dom.eps, cd.h_micro);
  const EigenPair pair = epsilon_eigenvalue(f, dom, cd.h_micro);
  const LogEigenfunction lf = hopf_cole(pair, dom);
  o.check(lf.value(0, pair.normalization_node) == 0.0, "psi(x0) == 0");
}

// 9. monotonicity suite
void monotonicity(Outcome& o) {
  for (const char* name : {"constant_drift", "checkerboard_two_group"}) {
    const ExperimentConfig cfg = config(name);
    const RunRecord r = run_monotonicity_suite(cfg);
    o.detail << name << ":";
    for (const auto& v : r.verdicts) {
      o.detail << " " << v.name << "=" << v.value;
      o.check(v.pass, std::string(name) + " " + v.name);
    }
    o.detail << "; ";
  }
}

// 10. 1D HJ homogenization
void hj1d(Outcome& o) {
  const ExperimentConfig tent = config("tent");
  std::vector<HJ1DSolutionPair> pairs;
  run_hj1d_homogenization(tent, &pairs);
  double at002 = -1.0;
  for (const auto& p : pairs)
    if (std::abs(p.eps - 0.02) < 1e-12) at002 = p.sup_error;
  o.detail << "tent sup error at eps 0.02: " << at002 << " (<= 0.05)";
  o.check(at002 >= 0.0 && at002 <= 0.05, "tent");
  const RunRecord r = run_hj1d_homogenization(config("periodic_hj1d"));
  o.detail << "; periodic errors";
  for (const auto& row : r.rows) o.detail << " " << row[2];
  o.check(r.verdict("error_strictly_decreasing")->pass, "periodic strict decrease");
}

// 4. exact discrete identities, gathered over every torus solve above
void identities(Outcome& o) {
  const ExperimentConfig cfg = config("checkerboard");
  const double delta = cfg.schedule.deltas.back();
  const CoefficientField f =
      sample_realization(cfg.env, cfg.seeds.front(), torus_side(cfg.env, delta, cfg.schedule), cfg.schedule.h);
  g_invariants.add(solve_delta_problem(f, delta, {0.3, 0.0}, 0.1));
  o.detail << g_invariants.solutions << " torus solutions, max |mean gradient| " << g_invariants.worst_mean_gradient
           << " (<= 1e-12), min delta-bound margin " << g_invariants.worst_bound_margin << " (>= -1e-9)";
  o.check(g_invariants.worst_mean_gradient <= 1e-12, "mean gradient");
  // same round-off allowance as the solver's own invariant check
  o.check(g_invariants.worst_bound_margin >= -1e-9, "delta bounds");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> list{
      {1, "constant-coefficient criticality oracle", 60, constant_criticality},
      {2, "two-group constant oracle", 30, two_group},
      {3, "periodic bridge identity", 300, periodic_bridge},
      {5, "estimate suite", 600, estimate_suite},
      {6, "continuity suite", 600, continuity_suite},
      {7, "structure of Hbar", 600, structure},
      {8, "concentration", 300, concentration},
      {9, "monotonicity suite", 600, monotonicity},
      {10, "1D HJ homogenization", 180, hj1d},
      {4, "exact discrete identities", 600, identities},
  };
  int failures = 0;
  double total = 0.0;
  for (const auto& c : list) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    total += secs;
    if (secs > c.budget_s) o.check(false, "runtime");
    if (!o.pass) ++failures;
    std::printf("[%s] criterion %d: %s (%.1f s, budget %.0f s) %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                c.budget_s, o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %d of %zu criteria failed, %.1f s total\n", failures ? "FAIL" : "PASS", failures, list.size(), total);
  return failures ? 1 : 0;
}
