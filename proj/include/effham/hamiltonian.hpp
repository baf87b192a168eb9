#pragma once

// Effective Hamiltonian: estimation from the delta-problem, tabulation,
// minimization in p, the critical value and its diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "effham/cell.hpp"
#include "effham/env.hpp"
#include "effham/error.hpp"
#include "effham/parallel.hpp"

namespace effham {

struct Schedule {
  std::vector<double> deltas{0.2, 0.1, 0.05};
  std::vector<std::uint64_t> seeds{1};
  double K = 10.0;
  /// Node spacing of the cell problems.
  double h = 0.125;
  /// 0: raw value at the smallest delta; 1: linear extrapolation through the
  /// two smallest deltas; 2: quadratic through the three smallest.
  int richardson_order = 1;
  /// Solve constant and periodic environments on one period: the delta
  /// problem has a unique solution, which inherits the period.
  bool reduce_periodic = true;
  /// Flag samples whose seed spread exceeds budget * |value|.
  double ergodicity_budget = 0.05;
};

/// Torus side used for the delta problem at this delta.
inline double torus_side(const EnvironmentSpec& s, double delta, const Schedule& sched) {
  const double h = sched.h;
  auto even_multiple = [h](double unit) {
    const long cells = std::lround(unit / h);
    return (cells % 2 == 0) ? unit : 2.0 * unit;
  };
  if (sched.reduce_periodic && s.kind == EnvKind::constant) return 8.0 * h;
  if (sched.reduce_periodic && s.kind == EnvKind::periodic) {
    double L = even_multiple(s.period);
    while (L / h < 4.0 - 1e-9) L *= 2.0;
    return L;
  }
  double corr = h, unit = 2.0 * h;
  switch (s.kind) {
    case EnvKind::checkerboard:
      corr = s.checkerboard_cell;
      unit = even_multiple(s.checkerboard_cell);
      break;
    case EnvKind::periodic:
      corr = s.period;
      unit = even_multiple(s.period);
      break;
    case EnvKind::quasiperiodic: {
      double fmin = std::numeric_limits<double>::infinity();
      for (const auto& f : s.frequencies) fmin = std::min(fmin, std::abs(f.value()));
      corr = 1.0 / fmin;
      break;
    }
    case EnvKind::constant: break;
  }
  const double target = std::max(sched.K / delta, 4.0 * corr);
  return std::ceil(target / unit - 1e-9) * unit;
}

struct EffHamSample {
  Point p{0.0, 0.0};
  double mu = 0.0;
  /// Extrapolated estimate of Hbar(p, mu).
  double value = 0.0;
  /// Seed-averaged -delta v torus mean per delta of the schedule.
  std::vector<double> per_delta;
  /// Seed-averaged -delta v at the origin node per delta.
  std::vector<double> origin_per_delta;
  std::vector<double> delta_schedule;
  std::vector<std::uint64_t> seeds;
  /// max - min across seeds of the torus mean at the smallest delta.
  double spread = 0.0;
  bool extrapolated = false;
  bool flagged = false;
  /// Largest collapse gap and Lipschitz seminorm seen.
  double collapse = 0.0;
  double lipschitz = 0.0;

  double raw() const { return per_delta.empty() ? value : per_delta.back(); }
};

/// Extrapolation to delta = 0 of values sampled at decreasing deltas.
inline double richardson(const std::vector<double>& deltas, const std::vector<double>& values, int order) {
  const std::size_t n = values.size();
  require(n == deltas.size() && n > 0, ErrorKind::rejected_input, "richardson needs matching samples");
  const int k = std::min<int>(order, static_cast<int>(n) - 1);
  if (k <= 0) return values.back();
  // Neville evaluation at 0 of the polynomial through the last k+1 points
  std::vector<double> x(deltas.end() - (k + 1), deltas.end()), y(values.end() - (k + 1), values.end());
  for (int level = 1; level <= k; ++level)
    for (int i = 0; i + level <= k; ++i)
      y[i] = (x[i + level] * y[i] - x[i] * y[i + 1]) / (x[i + level] - x[i]);
  return y[0];
}

/// Estimates Hbar(p, mu) = lim -delta v^delta through a delta schedule and a
/// seed ensemble. Realizations and warm starts are cached per (delta, seed).
class EffHamEstimator {
 public:
  EffHamEstimator(EnvironmentSpec spec, Schedule schedule, CellOptions cell = {})
      : spec_(std::move(spec)), sched_(std::move(schedule)), cell_(std::move(cell)) {
    check_spec(spec_);
    require(!sched_.deltas.empty() && !sched_.seeds.empty(), ErrorKind::rejected_input,
            "schedule needs at least one delta and one seed");
    for (std::size_t i = 0; i < sched_.deltas.size(); ++i) {
      require(sched_.deltas[i] > 0.0 && sched_.deltas[i] <= 1.0, ErrorKind::rejected_input, "delta outside (0, 1]");
      if (i > 0)
        require(sched_.deltas[i] < sched_.deltas[i - 1], ErrorKind::rejected_input, "delta schedule must decrease");
    }
    slots_.resize(sched_.deltas.size() * sched_.seeds.size());
  }

  const EnvironmentSpec& spec() const { return spec_; }
  const Schedule& schedule() const { return sched_; }
  long solves() const { return solves_; }

  /// Constants taken over every realization in the cache (built on demand).
  FieldConstants constants() {
    FieldConstants k;
    bool first = true;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      const FieldConstants f = field_constants(field(s).coef, spec_.c_min);
      if (first) {
        k = f;
        first = false;
        continue;
      }
      k.ellip_min = std::min(k.ellip_min, f.ellip_min);
      k.ellip_max = std::max(k.ellip_max, f.ellip_max);
      k.drift_max = std::max(k.drift_max, f.drift_max);
      k.sigma_row_min = std::min(k.sigma_row_min, f.sigma_row_min);
      k.sigma_row_max = std::max(k.sigma_row_max, f.sigma_row_max);
      k.sigma_diag_min = std::min(k.sigma_diag_min, f.sigma_diag_min);
      k.sigma_offdiag = k.sigma_offdiag || f.sigma_offdiag;
      k.c_row_max = std::max(k.c_row_max, f.c_row_max);
      k.C = std::max(k.C, f.C);
    }
    return k;
  }

  const CoefficientField& field(std::size_t slot) {
    auto& s = slots_[slot];
    if (!s.field) {
      const double delta = sched_.deltas[slot / sched_.seeds.size()];
      const std::uint64_t seed = sched_.seeds[slot % sched_.seeds.size()];
      s.field = std::make_unique<CoefficientField>(
          sample_realization(spec_, seed, torus_side(spec_, delta, sched_), sched_.h));
    }
    return *s.field;
  }
  const CoefficientField& field(std::size_t delta_index, std::size_t seed_index) {
    return field(delta_index * sched_.seeds.size() + seed_index);
  }

  /// Solve of the delta problem for one (delta, seed) slot with warm start.
  CellSolution solve(std::size_t delta_index, std::size_t seed_index, const Point& p, double mu) {
    const std::size_t slot = delta_index * sched_.seeds.size() + seed_index;
    return solve_slot(slot, p, mu);
  }

  EffHamSample estimate(Point p, double mu) {
    if (spec_.dimension == 1) p[1] = 0.0;
    const std::array<double, 3> key{p[0], p[1], mu};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    const std::size_t nd = sched_.deltas.size(), ns = sched_.seeds.size();
    for (std::size_t s = 0; s < slots_.size(); ++s) field(s);
    struct Out {
      double mean, origin, collapse, lip;
    };
    const auto outs = parallel_map<Out>(slots_.size(), [&](std::size_t slot) {
      const CellSolution sol = solve_slot(slot, p, mu);
      return Out{-sol.torus_mean_delta_v(), -sol.delta_v_at(0), collapse_gap(sol), lipschitz_seminorm(sol)};
    });
    solves_ += static_cast<long>(slots_.size());

    EffHamSample out;
    out.p = p;
    out.mu = mu;
    out.delta_schedule = sched_.deltas;
    out.seeds = sched_.seeds;
    for (std::size_t i = 0; i < nd; ++i) {
      double sm = 0.0, so = 0.0;
      for (std::size_t j = 0; j < ns; ++j) {
        const Out& o = outs[i * ns + j];
        sm += o.mean;
        so += o.origin;
        out.collapse = std::max(out.collapse, o.collapse);
        out.lipschitz = std::max(out.lipschitz, o.lip);
      }
      out.per_delta.push_back(sm / static_cast<double>(ns));
      out.origin_per_delta.push_back(so / static_cast<double>(ns));
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t j = 0; j < ns; ++j) {
      lo = std::min(lo, outs[(nd - 1) * ns + j].mean);
      hi = std::max(hi, outs[(nd - 1) * ns + j].mean);
    }
    out.spread = hi - lo;
    out.value = richardson(sched_.deltas, out.per_delta, sched_.richardson_order);
    out.extrapolated = sched_.richardson_order > 0 && nd > 1;
    out.flagged = out.spread > sched_.ergodicity_budget * std::abs(out.value);
    memo_.emplace(key, out);
    return out;
  }

  double operator()(const Point& p, double mu) { return estimate(p, mu).value; }

 private:
  struct Slot {
    std::unique_ptr<CoefficientField> field;
    HJState warm;
  };

  CellSolution solve_slot(std::size_t slot, const Point& p, double mu) {
    auto& s = slots_[slot];
    const double delta = sched_.deltas[slot / sched_.seeds.size()];
    CellOptions opt = cell_;
    if (s.warm.w.size() > 0) opt.initial = s.warm;
    CellSolution sol = solve_delta_problem(*s.field, delta, p, mu, opt);
    s.warm = sol.state;
    return sol;
  }

  EnvironmentSpec spec_;
  Schedule sched_;
  CellOptions cell_;
  std::vector<Slot> slots_;
  std::map<std::array<double, 3>, EffHamSample> memo_;
  long solves_ = 0;
};

/// Lattice of p values: p = k * dp, |k * dp| <= p_max per axis.
struct EffHamTable {
  int d = 1;
  double mu = 0.0;
  double p_max = 0.0;
  double dp = 0.0;
  int n_axis = 0;  // points per axis
  std::vector<Point> p;
  std::vector<EffHamSample> samples;

  double value(std::size_t i) const { return samples[i].value; }
  /// Flat index of lattice point (i, j), axis-major.
  std::size_t at(int i, int j = 0) const { return static_cast<std::size_t>(i) * (d == 2 ? n_axis : 1) + j; }
  bool quality_ok() const {
    for (const auto& s : samples)
      if (s.flagged) return false;
    return true;
  }
  double max_spread() const {
    double s = 0.0;
    for (const auto& x : samples) s = std::max(s, x.spread);
    return s;
  }
};

inline EffHamTable tabulate(EffHamEstimator& est, double mu, double p_max, double dp) {
  require(dp > 0.0 && p_max >= 0.0, ErrorKind::rejected_input, "tabulation needs dp > 0 and p_max >= 0");
  const int d = est.spec().dimension;
  const int half = static_cast<int>(std::floor(p_max / dp + 1e-9));
  EffHamTable t;
  t.d = d;
  t.mu = mu;
  t.p_max = p_max;
  t.dp = dp;
  t.n_axis = 2 * half + 1;
  require(std::pow(static_cast<double>(t.n_axis), d) <= 1e4, ErrorKind::unsupported_size,
          "tabulation limited to 10^4 points");
  for (int i = -half; i <= half; ++i)
    for (int j = (d == 2 ? -half : 0); j <= (d == 2 ? half : 0); ++j) t.p.push_back({i * dp, j * dp});
  for (const auto& p : t.p) t.samples.push_back(est.estimate(p, mu));
  return t;
}

struct Minimum {
  Point theta{0.0, 0.0};
  double value = 0.0;
};

struct MinimizeOptions {
  double p_max = 3.0;
  double dp = 0.25;
  int rounds = 3;
  double tol_p = 1e-4;
  /// Centre of the coarse lattice.
  Point centre{0.0, 0.0};
};

/// Golden-section minimization of a unimodal function on [a, b].
inline std::pair<double, double> golden_section(const std::function<double(double)>& f, double a, double b,
                                                double tol) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? std::pair{c, fc} : std::pair{d, fd};
}

/// Coarse lattice argmin refined by coordinatewise golden-section search.
inline Minimum min_over_p(const std::function<double(const Point&)>& H, int d, const MinimizeOptions& opt) {
  const int half = static_cast<int>(std::floor(opt.p_max / opt.dp + 1e-9));
  require(half >= 1, ErrorKind::rejected_input, "p_max must cover at least one lattice step");
  Minimum best;
  best.value = std::numeric_limits<double>::infinity();
  Index arg{0, 0};
  for (int i = -half; i <= half; ++i)
    for (int j = (d == 2 ? -half : 0); j <= (d == 2 ? half : 0); ++j) {
      const Point p{opt.centre[0] + i * opt.dp, d == 2 ? opt.centre[1] + j * opt.dp : 0.0};
      const double v = H(p);
      if (v < best.value) {
        best = {p, v};
        arg = {i, j};
      }
    }
  for (int k = 0; k < d; ++k)
    if (std::abs(arg[k]) == half)
      fail(ErrorKind::range, "minimizer on the lattice boundary; increase p_max (currently " +
                                 std::to_string(opt.p_max) + ")");
  const int rounds = d == 1 ? 1 : opt.rounds;
  for (int r = 0; r < rounds; ++r)
    for (int k = 0; k < d; ++k) {
      Point p = best.theta;
      const double c = p[k];
      auto [x, v] = golden_section(
          [&](double t) {
            Point q = p;
            q[k] = t;
            return H(q);
          },
          c - opt.dp, c + opt.dp, opt.tol_p);
      if (v < best.value) {
        best.theta[k] = x;
        best.value = v;
      }
    }
  return best;
}

inline Minimum min_over_p(EffHamEstimator& est, double mu, const MinimizeOptions& opt) {
  return min_over_p([&](const Point& p) { return est(p, mu); }, est.spec().dimension, opt);
}

struct CriticalTriple {
  double lambda_bar = 0.0;
  Point theta_bar{0.0, 0.0};
  double flatness_gap = 0.0;
  /// min_p Hbar(p, lambda_bar) at the returned value.
  double g_final = 0.0;
  double tol_root = 1e-3;
  double tol_flat = 3e-3;
  double grid_step = 0.0;
  int bisection_steps = 0;
  /// (mu, g(mu)) probes in evaluation order.
  std::vector<std::pair<double, double>> probes;
};

struct LambdaBarOptions {
  MinimizeOptions minimize;
  double tol_root = 1e-3;
  double bracket_tol = 1e-4;
  double mu_hi = 1.0;
  /// Lattice step of the flatness scan; minimize.dp when <= 0.
  double flat_step = 0.0;
};

/// Diameter of the lattice sublevel set {p : Hbar(p, mu) <= level} around theta,
/// scanning outward along the axes from the nearest lattice point.
inline double flatness_gap(const std::function<double(const Point&)>& H, int d, const Point& theta, double step,
                           double level, int max_steps = 200) {
  double diam = 0.0;
  Point c{std::round(theta[0] / step) * step, d == 2 ? std::round(theta[1] / step) * step : 0.0};
  if (H(c) > level) return 0.0;
  for (int k = 0; k < d; ++k) {
    int lo = 0, hi = 0;
    for (int s = 1; s <= max_steps; ++s) {
      Point q = c;
      q[k] += s * step;
      if (H(q) > level) break;
      hi = s;
    }
    for (int s = 1; s <= max_steps; ++s) {
      Point q = c;
      q[k] -= s * step;
      if (H(q) > level) break;
      lo = s;
    }
    diam = std::max(diam, (hi + lo) * step);
  }
  return diam;
}

/// lambda_bar = sup{mu >= 0 : min_p Hbar(p, mu) <= 0} by bisection on g(mu) = min_p Hbar(., mu).
inline CriticalTriple compute_lambda_bar(const std::function<double(const Point&, double)>& H, int d,
                                         const LambdaBarOptions& opt) {
  CriticalTriple out;
  out.tol_root = opt.tol_root;
  out.tol_flat = 3.0 * opt.tol_root;
  out.grid_step = opt.flat_step > 0.0 ? opt.flat_step : opt.minimize.dp;
  MinimizeOptions mo = opt.minimize;
  auto g = [&](double mu) {
    const Minimum m = min_over_p([&](const Point& p) { return H(p, mu); }, d, mo);
    out.probes.emplace_back(mu, m.value);
    return m;
  };
  Minimum m0 = g(0.0);
  double mu_star = 0.0;
  Minimum at = m0;
  if (m0.value > opt.tol_root)
    fail(ErrorKind::consistency, "min_p Hbar(p, 0) = " + std::to_string(m0.value) +
                                     " > tol_root; discretization bias suspected");
  if (m0.value < 0.0) {
    double lo = 0.0, hi = opt.mu_hi, glo = m0.value;
    Minimum mhi = g(hi);
    while (mhi.value <= 0.0) {
      lo = hi;
      glo = mhi.value;
      hi *= 2.0;
      require(hi < 1e8, ErrorKind::divergence, "no upper bracket for lambda_bar");
      mhi = g(hi);
    }
    double ghi = mhi.value;
    Minimum mid_min = mhi;
    double mid = hi;
    while (true) {
      mid = 0.5 * (lo + hi);
      mid_min = g(mid);
      ++out.bisection_steps;
      if (std::abs(mid_min.value) <= opt.tol_root || hi - lo <= opt.bracket_tol) break;
      if (mid_min.value <= 0.0) {
        lo = mid;
        glo = mid_min.value;
      } else {
        hi = mid;
        ghi = mid_min.value;
      }
    }
    // secant correction on the final bracket
    mu_star = mid;
    at = mid_min;
    const double other_mu = mid_min.value <= 0.0 ? hi : lo;
    const double other_g = mid_min.value <= 0.0 ? ghi : glo;
    if (other_g != mid_min.value) {
      const double cand = mid - mid_min.value * (other_mu - mid) / (other_g - mid_min.value);
      if (cand >= std::min(lo, hi) && cand <= std::max(lo, hi) && cand >= 0.0) {
        mo.centre = {std::round(mid_min.theta[0] / mo.dp) * mo.dp, std::round(mid_min.theta[1] / mo.dp) * mo.dp};
        Minimum mc = g(cand);
        if (std::abs(mc.value) <= std::abs(mid_min.value)) {
          mu_star = cand;
          at = mc;
        }
      }
    }
  }
  out.lambda_bar = mu_star;
  out.theta_bar = at.theta;
  out.g_final = at.value;
  out.flatness_gap = flatness_gap([&](const Point& p) { return H(p, mu_star); }, d, at.theta, out.grid_step,
                                  out.tol_flat);
  return out;
}

inline CriticalTriple compute_lambda_bar(EffHamEstimator& est, const LambdaBarOptions& opt) {
  return compute_lambda_bar([&](const Point& p, double mu) { return est(p, mu); }, est.spec().dimension, opt);
}

struct ConvexityReport {
  bool pass = true;
  bool uniquely_ergodic = false;
  bool strict = false;
  double tol = 0.0;
  /// min over triples of 0.5 (H(p - D) + H(p + D)) - H(p)
  double min_defect = std::numeric_limits<double>::infinity();
  std::vector<std::array<Point, 3>> violations;
};

/// Midpoint convexity over all collinear lattice triples (axes and, in 2D, diagonals).
inline ConvexityReport convexity_report(const EffHamTable& t, EnvKind kind, double tol_floor = 1e-9) {
  ConvexityReport r;
  r.uniquely_ergodic = uniquely_ergodic(kind);
  r.tol = std::max(3.0 * t.max_spread(), tol_floor);
  const int n = t.n_axis;
  std::vector<Index> dirs{{1, 0}};
  if (t.d == 2) dirs = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < (t.d == 2 ? n : 1); ++j)
      for (const auto& dv : dirs) {
        const int i0 = i - dv[0], j0 = j - dv[1], i1 = i + dv[0], j1 = j + dv[1];
        auto inside = [&](int a, int b) { return a >= 0 && a < n && b >= 0 && b < (t.d == 2 ? n : 1); };
        if (!inside(i0, j0) || !inside(i1, j1)) continue;
        const double defect = 0.5 * (t.value(t.at(i0, j0)) + t.value(t.at(i1, j1))) - t.value(t.at(i, j));
        r.min_defect = std::min(r.min_defect, defect);
        if (defect < -r.tol) {
          r.pass = false;
          r.violations.push_back({t.p[t.at(i0, j0)], t.p[t.at(i, j)], t.p[t.at(i1, j1)]});
        }
      }
  r.strict = r.min_defect > 0.0;
  return r;
}

/// Coercivity envelope margin: lam|p|^2 - C(1+|p|) - tol <= value <= Lam|p|^2 + C(|p|+mu) + tol.
inline double coercivity_margin(const EffHamSample& s, int d, const FieldConstants& k, double tol) {
  const double pn = norm(s.p, d);
  const double lo = k.ellip_min * pn * pn - k.C * (1.0 + pn) - tol;
  const double hi = k.ellip_max * pn * pn + k.C * (pn + s.mu) + tol;
  return std::min(s.value - lo, hi - s.value);
}

struct UniformProbe {
  std::vector<double> deltas;
  /// oscillation (max - min) of window averages of delta v
  std::vector<double> oscillation;
};

/// Oscillation of delta v^delta averaged over random torus windows of side 1/delta.
inline UniformProbe uniform_convergence_probe(const EnvironmentSpec& spec, const Point& p, double mu,
                                              const Schedule& sched, int windows = 50, std::uint64_t rng_seed = 7) {
  UniformProbe out;
  Schedule s = sched;
  s.reduce_periodic = false;
  for (double delta : s.deltas) {
    const double L = torus_side(spec, delta, s);
    const CoefficientField f = sample_realization(spec, s.seeds.front(), L, s.h);
    const CellSolution sol = solve_delta_problem(f, delta, p, mu);
    const int span = std::max(1, static_cast<int>(std::lround(1.0 / delta / f.h)));
    std::mt19937_64 rng(rng_seed);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int w = 0; w < windows; ++w) {
      const int i0 = static_cast<int>(rng() % static_cast<std::uint64_t>(f.n[0]));
      const int j0 = spec.dimension == 2 ? static_cast<int>(rng() % static_cast<std::uint64_t>(f.n[1])) : 0;
      double sum = 0.0;
      long count = 0;
      for (int i = 0; i < span; ++i)
        for (int j = 0; j < (spec.dimension == 2 ? span : 1); ++j) {
          sum += sol.shape(0, f.node(i0 + i, j0 + j));
          ++count;
        }
      // the offset is common to every window and cancels in the oscillation
      const double avg = sum / static_cast<double>(count);
      lo = std::min(lo, avg);
      hi = std::max(hi, avg);
    }
    out.deltas.push_back(delta);
    out.oscillation.push_back(delta * (hi - lo));
  }
  return out;
}

}  // namespace effham
