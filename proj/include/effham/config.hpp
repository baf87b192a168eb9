#pragma once

// JSON configuration for environments and experiments.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "effham/eig.hpp"
#include "effham/env.hpp"
#include "effham/error.hpp"
#include "effham/hamiltonian.hpp"

namespace effham {

using json = nlohmann::json;

/// Continuous piecewise polynomial on [breaks.front(), breaks.back()];
/// coeffs[i] holds the ascending coefficients in (x - breaks[i]).
struct PiecewisePolynomial {
  std::vector<double> breaks{0.0, 1.0};
  std::vector<std::vector<double>> coeffs{{1.0}};

  static PiecewisePolynomial constant(double c, double a = 0.0, double b = 1.0) { return {{a, b}, {{c}}}; }

  double piece(std::size_t i, double x) const {
    double v = 0.0;
    const double t = x - breaks[i];
    for (std::size_t k = coeffs[i].size(); k-- > 0;) v = v * t + coeffs[i][k];
    return v;
  }

  double operator()(double x) const {
    std::size_t i = 0;
    while (i + 1 < coeffs.size() && x >= breaks[i + 1]) ++i;
    return piece(i, x);
  }

  void check(double tol = 1e-9) const {
    require(breaks.size() >= 2 && coeffs.size() + 1 == breaks.size(), ErrorKind::configuration,
            "g needs one coefficient list per interval between breaks");
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
      require(breaks[i] < breaks[i + 1], ErrorKind::configuration, "g breaks must increase");
      require(!coeffs[i].empty(), ErrorKind::configuration, "empty g piece");
    }
    for (std::size_t i = 0; i + 2 < breaks.size(); ++i)
      require(std::abs(piece(i, breaks[i + 1]) - piece(i + 1, breaks[i + 1])) <= tol, ErrorKind::configuration,
              "g must be continuous at x = " + std::to_string(breaks[i + 1]));
  }
};

struct Tolerances {
  double tol_root = 1e-3;
  double bracket_tol = 1e-4;
  /// Slack of the monotonicity and certificate inequalities.
  double slack = 1e-6;
  double continuity = 1e-6;
  double mean_gradient = 1e-12;
  double eig_lambda = 1e-10;
  double eig_residual = 1e-8;
  double newton = 1e-8;
  double ergodicity_budget = 0.05;
  double convexity_floor = 1e-9;
  /// Cap on the concentration error at the smallest eps.
  double concentration_cap = 0.06;
  /// Cap on the 1D homogenization sup-error at the smallest eps.
  double hj1d_cap = 0.05;
  /// Required gap min g - min_p Hbar for the 1D homogenization run.
  double g_margin = 1e-3;
  /// Group gap (macroscopic units) above which the 1D run reports an unmet hypothesis.
  double group_gap = 0.25;
};

struct ExperimentConfig {
  std::string id = "run";
  EnvironmentSpec env;
  /// Strictly decreasing eps ladder.
  std::vector<double> eps{0.1, 0.05, 0.025};
  DomainSpec domain;
  /// Sub-box V of U for the domain-monotonicity and nested-domain runs.
  Point nested_lo{0.25, 0.25};
  Point nested_hi{0.75, 0.75};
  /// Sup norms are taken on the middle part of each axis, dropping this fraction at each end.
  double interior_margin = 1.0 / 3.0;
  std::vector<std::uint64_t> seeds{1};
  Schedule schedule;
  /// Node spacing of the eigenproblems, in micro units.
  double h_micro = 0.125;
  LambdaBarOptions lambda_bar;
  double table_mu = 0.0;
  double table_p_max = 2.0;
  double table_dp = 0.25;
  /// Right-hand side and data of the 1D homogenization run.
  PiecewisePolynomial g;
  double hj_mu = 0.0;
  double u_right = 0.0;
  std::string out_dir = "out";
  bool plots = false;
  Tolerances tol;

  void check() const {
    check_spec(env);
    require(!eps.empty(), ErrorKind::configuration, "eps ladder is empty");
    for (std::size_t i = 0; i < eps.size(); ++i) {
      require(eps[i] > 0.0 && eps[i] <= 1.0, ErrorKind::configuration, "eps must lie in (0, 1]");
      if (i > 0) require(eps[i] < eps[i - 1], ErrorKind::configuration, "eps ladder must strictly decrease");
    }
    require(!seeds.empty(), ErrorKind::configuration, "at least one seed required");
    require(h_micro > 0.0 && schedule.h > 0.0, ErrorKind::configuration, "grid spacings must be positive");
    require(interior_margin >= 0.0 && interior_margin < 0.5, ErrorKind::configuration,
            "interior margin must lie in [0, 0.5)");
    DomainSpec d = domain;
    d.eps = eps.front();
    d.check(env.dimension);
    for (int k = 0; k < env.dimension; ++k) {
      const double w = domain.hi[k] - domain.lo[k];
      const double a = domain.lo[k] + interior_margin * w, b = domain.hi[k] - interior_margin * w;
      require(a < domain.x0[k] && domain.x0[k] < b, ErrorKind::configuration, "x0 must lie inside the interior margin");
      require(domain.lo[k] <= nested_lo[k] && nested_lo[k] < nested_hi[k] && nested_hi[k] <= domain.hi[k],
              ErrorKind::configuration, "nested box must lie inside the domain");
    }
    g.check();
  }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  require(j.is_object(), ErrorKind::configuration, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    require(known.count(it.key()) > 0, ErrorKind::configuration, "unknown key '" + it.key() + "' in " + where);
}

inline ScalarLaw law_from(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  reject_unknown(j, {"base", "amp"}, "coefficient law");
  return {j.value("base", 0.0), j.value("amp", 0.0)};
}

inline json law_to(const ScalarLaw& l) {
  if (l.amp == 0.0) return l.base;
  return {{"base", l.base}, {"amp", l.amp}};
}

inline std::vector<ScalarLaw> matrix_from(const json& j, int m, const std::string& what) {
  require(j.is_array() && static_cast<int>(j.size()) == m, ErrorKind::configuration, what + " must be an m x m array");
  std::vector<ScalarLaw> out;
  for (const auto& row : j) {
    require(row.is_array() && static_cast<int>(row.size()) == m, ErrorKind::configuration,
            what + " must be an m x m array");
    for (const auto& e : row) out.push_back(law_from(e));
  }
  return out;
}

inline json matrix_to(const std::vector<ScalarLaw>& v, int m) {
  json out = json::array();
  for (int a = 0; a < m; ++a) {
    json row = json::array();
    for (int b = 0; b < m; ++b) row.push_back(law_to(v[a * m + b]));
    out.push_back(row);
  }
  return out;
}

inline Point point_from(const json& j) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  require(j.is_array() && !j.empty() && j.size() <= 2, ErrorKind::configuration, "point must have 1 or 2 components");
  return {j[0].get<double>(), j.size() > 1 ? j[1].get<double>() : 0.0};
}

inline json point_to(const Point& p, int d) { return d == 1 ? json::array({p[0]}) : json::array({p[0], p[1]}); }

}  // namespace detail

inline EnvKind env_kind_from(const std::string& s) {
  for (EnvKind k : {EnvKind::constant, EnvKind::periodic, EnvKind::checkerboard, EnvKind::quasiperiodic})
    if (s == to_string(k)) return k;
  fail(ErrorKind::configuration, "unknown environment kind '" + s + "'");
}

inline EnvironmentSpec environment_from_json(const json& j) {
  using detail::law_from;
  detail::reject_unknown(j,
                         {"dimension", "groups", "kind", "ellipticity", "drift", "coupling", "fission", "lipschitz",
                          "checkerboard", "periodic", "quasiperiodic", "seed", "group"},
                         "environment");
  EnvironmentSpec s;
  s.dimension = j.value("dimension", 1);
  s.groups = j.value("groups", 1);
  require(s.groups >= 1, ErrorKind::configuration, "groups must be >= 1");
  s.kind = env_kind_from(j.value("kind", std::string("constant")));
  const int m = s.groups;
  if (j.contains("ellipticity")) {
    s.ellipticity_min = j["ellipticity"].value("min", s.ellipticity_min);
    s.ellipticity_max = j["ellipticity"].value("max", s.ellipticity_max);
  }
  if (j.contains("drift")) s.drift_amplitude = j["drift"].value("amplitude", s.drift_amplitude);
  s.coupling.assign(m * m, ScalarLaw{});
  s.fission.assign(m * m, ScalarLaw{});
  for (int a = 0; a < m; ++a) s.fission[a * m + a] = {1.0, 0.0};
  if (j.contains("coupling")) {
    const json& c = j["coupling"];
    s.c_min = c.value("c_min", s.c_min);
    if (c.contains("matrix")) s.coupling = detail::matrix_from(c["matrix"], m, "coupling.matrix");
  }
  if (j.contains("fission") && j["fission"].contains("matrix"))
    s.fission = detail::matrix_from(j["fission"]["matrix"], m, "fission.matrix");
  if (j.contains("lipschitz")) s.lipschitz_bound = j["lipschitz"].value("bound", s.lipschitz_bound);
  if (j.contains("checkerboard")) s.checkerboard_cell = j["checkerboard"].value("cell", s.checkerboard_cell);
  if (j.contains("periodic")) s.period = j["periodic"].value("period", s.period);
  if (j.contains("quasiperiodic"))
    for (const auto& f : j["quasiperiodic"].at("frequencies")) s.frequencies.push_back(Rational::approximate(f.get<double>()));
  s.seed = j.value("seed", std::uint64_t{0});
  s.group.assign(m, GroupLaws{ScalarLaw{1.0, 0.0}, {}, {}});
  if (j.contains("group")) {
    const json& g = j["group"];
    require(g.is_array() && static_cast<int>(g.size()) == m, ErrorKind::configuration,
            "environment.group needs one entry per group");
    for (int a = 0; a < m; ++a) {
      detail::reject_unknown(g[a], {"diffusion", "anisotropy", "drift"}, "environment.group");
      if (g[a].contains("diffusion")) s.group[a].diffusion = law_from(g[a]["diffusion"]);
      if (g[a].contains("anisotropy")) s.group[a].anisotropy = law_from(g[a]["anisotropy"]);
      if (g[a].contains("drift")) {
        const json& b = g[a]["drift"];
        if (b.is_array()) {
          for (std::size_t k = 0; k < b.size() && k < 2; ++k) s.group[a].drift[k] = law_from(b[k]);
        } else {
          s.group[a].drift[0] = law_from(b);
        }
      }
    }
  }
  try {
    check_spec(s);
  } catch (const Error& e) {
    fail(ErrorKind::configuration, e.what());
  }
  return s;
}

inline json environment_to_json(const EnvironmentSpec& s) {
  json j;
  j["dimension"] = s.dimension;
  j["groups"] = s.groups;
  j["kind"] = to_string(s.kind);
  j["ellipticity"] = {{"min", s.ellipticity_min}, {"max", s.ellipticity_max}};
  j["drift"] = {{"amplitude", s.drift_amplitude}};
  j["coupling"] = {{"c_min", s.c_min}, {"matrix", detail::matrix_to(s.coupling, s.groups)}};
  j["fission"] = {{"matrix", detail::matrix_to(s.fission, s.groups)}};
  j["lipschitz"] = {{"bound", s.lipschitz_bound}};
  if (s.kind == EnvKind::checkerboard) j["checkerboard"] = {{"cell", s.checkerboard_cell}};
  if (s.kind == EnvKind::periodic) j["periodic"] = {{"period", s.period}};
  if (s.kind == EnvKind::quasiperiodic) {
    json f = json::array();
    for (const auto& r : s.frequencies) f.push_back(r.value());
    j["quasiperiodic"] = {{"frequencies", f}};
  }
  j["seed"] = s.seed;
  json g = json::array();
  for (const auto& l : s.group) {
    json e{{"diffusion", detail::law_to(l.diffusion)}, {"drift", json::array()}};
    if (s.dimension == 2) e["anisotropy"] = detail::law_to(l.anisotropy);
    for (int k = 0; k < s.dimension; ++k) e["drift"].push_back(detail::law_to(l.drift[k]));
    g.push_back(e);
  }
  j["group"] = g;
  return j;
}

inline Tolerances tolerances_from_json(const json& j, Tolerances t = {}) {
  detail::reject_unknown(j,
                         {"tol_root", "bracket_tol", "slack", "continuity", "mean_gradient", "eig_lambda",
                          "eig_residual", "newton", "ergodicity_budget", "convexity_floor", "concentration_cap",
                          "hj1d_cap", "g_margin", "group_gap"},
                         "tolerances");
  t.tol_root = j.value("tol_root", t.tol_root);
  t.bracket_tol = j.value("bracket_tol", t.bracket_tol);
  t.slack = j.value("slack", t.slack);
  t.continuity = j.value("continuity", t.continuity);
  t.mean_gradient = j.value("mean_gradient", t.mean_gradient);
  t.eig_lambda = j.value("eig_lambda", t.eig_lambda);
  t.eig_residual = j.value("eig_residual", t.eig_residual);
  t.newton = j.value("newton", t.newton);
  t.ergodicity_budget = j.value("ergodicity_budget", t.ergodicity_budget);
  t.convexity_floor = j.value("convexity_floor", t.convexity_floor);
  t.concentration_cap = j.value("concentration_cap", t.concentration_cap);
  t.hj1d_cap = j.value("hj1d_cap", t.hj1d_cap);
  t.g_margin = j.value("g_margin", t.g_margin);
  t.group_gap = j.value("group_gap", t.group_gap);
  return t;
}

inline json tolerances_to_json(const Tolerances& t) {
  return {{"tol_root", t.tol_root},
          {"bracket_tol", t.bracket_tol},
          {"slack", t.slack},
          {"continuity", t.continuity},
          {"mean_gradient", t.mean_gradient},
          {"eig_lambda", t.eig_lambda},
          {"eig_residual", t.eig_residual},
          {"newton", t.newton},
          {"ergodicity_budget", t.ergodicity_budget},
          {"convexity_floor", t.convexity_floor},
          {"concentration_cap", t.concentration_cap},
          {"hj1d_cap", t.hj1d_cap},
          {"g_margin", t.g_margin},
          {"group_gap", t.group_gap}};
}

/// Builds an experiment from a parsed document. Layout:
///   { "id", "environment": {...}, "eps": [...], "domain": {lo, hi, x0, nested_lo, nested_hi, interior_margin},
///     "seeds": [...], "schedule": {deltas, K, h, richardson_order, reduce_periodic},
///     "eig": {h_micro}, "lambda_bar": {p_max, dp, mu_hi, centre},
///     "table": {mu, p_max, dp}, "hj1d": {g: {breaks, coeffs}, mu, u_right},
///     "output": {dir, plots}, "tolerances": {...} }
inline ExperimentConfig config_from_json(const json& j) {
  try {
    detail::reject_unknown(j,
                           {"id", "environment", "eps", "domain", "seeds", "schedule", "eig", "lambda_bar", "table",
                            "hj1d", "output", "tolerances"},
                           "config");
    ExperimentConfig c;
    c.id = j.value("id", c.id);
    require(j.contains("environment"), ErrorKind::configuration, "config needs an environment section");
    c.env = environment_from_json(j["environment"]);
    const int d = c.env.dimension;
    if (j.contains("eps")) c.eps = j["eps"].get<std::vector<double>>();
    if (d == 1) {
      c.domain.lo = {0.0, 0.0};
      c.domain.hi = {1.0, 0.0};
      c.domain.x0 = {0.5, 0.0};
      c.nested_lo = {0.25, 0.0};
      c.nested_hi = {0.75, 0.0};
    }
    if (j.contains("domain")) {
      const json& dm = j["domain"];
      detail::reject_unknown(dm, {"lo", "hi", "x0", "nested_lo", "nested_hi", "interior_margin"}, "domain");
      if (dm.contains("lo")) c.domain.lo = detail::point_from(dm["lo"]);
      if (dm.contains("hi")) c.domain.hi = detail::point_from(dm["hi"]);
      // x0 defaults to the centre of the box
      c.domain.x0 = 0.5 * (c.domain.lo + c.domain.hi);
      if (d == 1) c.domain.x0[1] = 0.0;
      if (dm.contains("x0")) c.domain.x0 = detail::point_from(dm["x0"]);
      const Point w = c.domain.hi - c.domain.lo;
      c.nested_lo = c.domain.lo + 0.25 * w;
      c.nested_hi = c.domain.lo + 0.75 * w;
      if (dm.contains("nested_lo")) c.nested_lo = detail::point_from(dm["nested_lo"]);
      if (dm.contains("nested_hi")) c.nested_hi = detail::point_from(dm["nested_hi"]);
      c.interior_margin = dm.value("interior_margin", c.interior_margin);
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      detail::reject_unknown(s, {"deltas", "K", "h", "richardson_order", "reduce_periodic"}, "schedule");
      if (s.contains("deltas")) c.schedule.deltas = s["deltas"].get<std::vector<double>>();
      c.schedule.K = s.value("K", c.schedule.K);
      c.schedule.h = s.value("h", c.schedule.h);
      c.schedule.richardson_order = s.value("richardson_order", c.schedule.richardson_order);
      c.schedule.reduce_periodic = s.value("reduce_periodic", c.schedule.reduce_periodic);
    }
    c.h_micro = c.schedule.h;
    if (j.contains("eig")) {
      detail::reject_unknown(j["eig"], {"h_micro"}, "eig");
      c.h_micro = j["eig"].value("h_micro", c.h_micro);
    }
    if (j.contains("lambda_bar")) {
      const json& l = j["lambda_bar"];
      detail::reject_unknown(l, {"p_max", "dp", "mu_hi", "centre"}, "lambda_bar");
      c.lambda_bar.minimize.p_max = l.value("p_max", c.lambda_bar.minimize.p_max);
      c.lambda_bar.minimize.dp = l.value("dp", c.lambda_bar.minimize.dp);
      c.lambda_bar.mu_hi = l.value("mu_hi", c.lambda_bar.mu_hi);
      if (l.contains("centre")) c.lambda_bar.minimize.centre = detail::point_from(l["centre"]);
    }
    if (j.contains("table")) {
      const json& t = j["table"];
      detail::reject_unknown(t, {"mu", "p_max", "dp"}, "table");
      c.table_mu = t.value("mu", c.table_mu);
      c.table_p_max = t.value("p_max", c.table_p_max);
      c.table_dp = t.value("dp", c.table_dp);
    }
    if (j.contains("hj1d")) {
      const json& h = j["hj1d"];
      detail::reject_unknown(h, {"g", "mu", "u_right"}, "hj1d");
      if (h.contains("g")) {
        const json& g = h["g"];
        if (g.is_number()) {
          c.g = PiecewisePolynomial::constant(g.get<double>(), c.domain.lo[0], c.domain.hi[0]);
        } else {
          c.g.breaks = g.at("breaks").get<std::vector<double>>();
          c.g.coeffs = g.at("coeffs").get<std::vector<std::vector<double>>>();
        }
      } else {
        c.g = PiecewisePolynomial::constant(1.0, c.domain.lo[0], c.domain.hi[0]);
      }
      c.hj_mu = h.value("mu", c.hj_mu);
      c.u_right = h.value("u_right", c.u_right);
    } else {
      c.g = PiecewisePolynomial::constant(1.0, c.domain.lo[0], c.domain.hi[0]);
    }
    if (j.contains("output")) {
      detail::reject_unknown(j["output"], {"dir", "plots"}, "output");
      c.out_dir = j["output"].value("dir", c.out_dir);
      c.plots = j["output"].value("plots", c.plots);
    }
    if (j.contains("tolerances")) c.tol = tolerances_from_json(j["tolerances"]);
    c.schedule.seeds = c.seeds;
    c.schedule.ergodicity_budget = c.tol.ergodicity_budget;
    c.lambda_bar.tol_root = c.tol.tol_root;
    c.lambda_bar.bracket_tol = c.tol.bracket_tol;
    c.check();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::configuration, std::string("malformed config: ") + e.what());
  }
}

inline json config_to_json(const ExperimentConfig& c) {
  const int d = c.env.dimension;
  json g{{"breaks", c.g.breaks}, {"coeffs", c.g.coeffs}};
  return {{"id", c.id},
          {"environment", environment_to_json(c.env)},
          {"eps", c.eps},
          {"domain",
           {{"lo", detail::point_to(c.domain.lo, d)},
            {"hi", detail::point_to(c.domain.hi, d)},
            {"x0", detail::point_to(c.domain.x0, d)},
            {"nested_lo", detail::point_to(c.nested_lo, d)},
            {"nested_hi", detail::point_to(c.nested_hi, d)},
            {"interior_margin", c.interior_margin}}},
          {"seeds", c.seeds},
          {"schedule",
           {{"deltas", c.schedule.deltas},
            {"K", c.schedule.K},
            {"h", c.schedule.h},
            {"richardson_order", c.schedule.richardson_order},
            {"reduce_periodic", c.schedule.reduce_periodic}}},
          {"eig", {{"h_micro", c.h_micro}}},
          {"lambda_bar",
           {{"p_max", c.lambda_bar.minimize.p_max},
            {"dp", c.lambda_bar.minimize.dp},
            {"mu_hi", c.lambda_bar.mu_hi},
            {"centre", detail::point_to(c.lambda_bar.minimize.centre, d)}}},
          {"table", {{"mu", c.table_mu}, {"p_max", c.table_p_max}, {"dp", c.table_dp}}},
          {"hj1d", {{"g", g}, {"mu", c.hj_mu}, {"u_right", c.u_right}}},
          {"output", {{"dir", c.out_dir}, {"plots", c.plots}}},
          {"tolerances", tolerances_to_json(c.tol)}};
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::configuration, path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace effham
