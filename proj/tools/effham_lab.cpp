// effham-lab: command-line front end for the experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "effham/effham.hpp"

using namespace effham;

namespace {

enum Exit { kOk = 0, kProperty = 2, kConfiguration = 3, kSolver = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::property_failure: return kProperty;
    case ErrorKind::rejected_input:
    case ErrorKind::configuration:
    case ErrorKind::range:
    case ErrorKind::unsupported_size:
    case ErrorKind::precondition:
    case ErrorKind::io: return kConfiguration;
    case ErrorKind::consistency:
    case ErrorKind::convergence:
    case ErrorKind::solver_breakdown:
    case ErrorKind::divergence: return kSolver;
  }
  return kSolver;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.push_back(std::stoull(tok));
  require(!out.empty(), ErrorKind::configuration, "--seeds needs at least one value");
  return out;
}

/// "a" or "a:b".
Point parse_point(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) return {std::stod(s), 0.0};
  return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
}

/// Writes to the named file, or stdout when the name is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      require(static_cast<bool>(file_), ErrorKind::io, "cannot write " + path);
    }
  }
  std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::string num(double v) { return detail::format_number(v); }

int finish(const std::vector<RunRecord>& records, const ExperimentConfig& cfg) {
  const json summary = emit_report(records, cfg.out_dir, cfg.plots);
  for (const auto& r : records) {
    std::printf("%s %s: %s\n", r.id.c_str(), r.experiment.c_str(),
                r.skipped ? ("skipped (" + r.skip_reason + ")").c_str() : (r.pass() ? "pass" : "FAIL"));
    for (const auto& v : r.verdicts)
      std::printf("  %-28s %s value=%s limit=%s%s\n", v.name.c_str(), v.pass ? "pass" : "FAIL", num(v.value).c_str(),
                  num(v.limit).c_str(), v.asserted ? "" : " (reported)");
  }
  std::printf("summary: %s/summary.json\n", cfg.out_dir.c_str());
  return summary["pass"].get<bool>() ? kOk : kProperty;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Effective Hamiltonian and criticality laboratory"};
  app.require_subcommand(1);

  std::string config_path, out, seeds_arg, dump_path;
  bool plots = false;
  std::vector<double> eps_list, delta_list;
  std::vector<std::string> p_list;
  double mu = 0.0, p_max = 2.0, dp = 0.25, torus = 0.0;

  auto common = [&](CLI::App* sub, const std::string& out_help) {
    sub->add_option("--config", config_path, "JSON configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, out_help);
    sub->add_option("--seeds", seeds_arg, "comma-separated seeds overriding the config");
    sub->add_flag("--plots", plots, "write SVG plots next to the CSV files");
  };
  auto* env = app.add_subcommand("env", "sample and validate realizations");
  common(env, "CSV of validation margins (stdout by default)");
  env->add_option("--L", torus, "torus side (default: 8 correlation units)");
  env->add_option("--dump", dump_path, "binary field dump of the first seed");
  auto* eig = app.add_subcommand("eig", "scaled principal eigenvalues over an eps list");
  common(eig, "CSV file (stdout by default)");
  eig->add_option("--eps", eps_list, "eps values (default: the config ladder)");
  auto* cell = app.add_subcommand("cell", "delta-problem diagnostics");
  common(cell, "CSV file (stdout by default)");
  cell->add_option("--delta", delta_list, "delta values")->required();
  cell->add_option("--p", p_list, "p values, 'a' or 'a:b'")->required();
  cell->add_option("--mu", mu, "mu");
  auto* eff = app.add_subcommand("effham", "tabulate Hbar(., mu)");
  common(eff, "CSV file (stdout by default)");
  eff->add_option("--mu", mu, "mu");
  eff->add_option("--pmax", p_max, "lattice extent");
  eff->add_option("--dp", dp, "lattice step");
  auto* lbar = app.add_subcommand("lambda-bar", "critical value, minimizer and flatness gap");
  common(lbar, "JSON file (stdout by default)");
  auto* crit = app.add_subcommand("criticality", "eps-ladder of scaled eigenvalues against lambda_bar");
  common(crit, "output directory (default: config output.dir)");
  auto* conc = app.add_subcommand("concentration", "log-eigenfunction against theta_bar . (x - x0)");
  common(conc, "output directory (default: config output.dir)");
  auto* mono = app.add_subcommand("monotonicity", "domain, eps and max-min certificate checks");
  common(mono, "output directory (default: config output.dir)");
  auto* hj = app.add_subcommand("hj1d", "1D homogenization of the HJ system");
  common(hj, "output directory (default: config output.dir)");
  auto* rep = app.add_subcommand("report", "run every experiment the config supports");
  common(rep, "output directory (default: config output.dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfiguration;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (!seeds_arg.empty()) {
      cfg.seeds = parse_seeds(seeds_arg);
      cfg.schedule.seeds = cfg.seeds;
    }
    if (plots) cfg.plots = true;
    const int d = cfg.env.dimension;

    if (env->parsed()) {
      double unit = 2.0 * cfg.schedule.h;
      if (cfg.env.kind == EnvKind::periodic) unit = cfg.env.period;
      if (cfg.env.kind == EnvKind::checkerboard) unit = cfg.env.checkerboard_cell;
      const double L = torus > 0.0 ? torus : 8.0 * std::max(unit, 1.0);
      Output o(out);
      o.get() << "seed,assumption,margin,node\n";
      bool pass = true;
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const CoefficientField f = sample_realization(cfg.env, cfg.seeds[i], L, cfg.schedule.h);
        const ValidationReport r = validate_assumptions(f);
        pass = pass && r.pass;
        for (const auto& e : r.entries)
          o.get() << cfg.seeds[i] << "," << e.name << "," << num(e.margin) << "," << e.node << "\n";
        if (i == 0 && !dump_path.empty()) write_field_dump(f, dump_path);
      }
      return pass ? kOk : kProperty;
    }
    if (eig->parsed()) {
      const std::vector<double> ladder = eps_list.empty() ? cfg.eps : eps_list;
      double smallest = ladder.front();
      for (double e : ladder) smallest = std::min(smallest, e);
      Output o(out);
      o.get() << "eps,lambda,residual,iterations,seed\n";
      for (std::uint64_t seed : cfg.seeds) {
        const CoefficientField f = detail::field_for_box(cfg.env, seed, cfg.domain.lo, cfg.domain.hi, smallest, cfg.h_micro);
        for (double e : ladder) {
          DomainSpec dom = cfg.domain;
          dom.eps = e;
          const EigenPair p = epsilon_eigenvalue(f, dom, cfg.h_micro, detail::eigen_options(cfg));
          o.get() << num(e) << "," << num(p.lambda) << "," << num(p.residual) << "," << p.iterations << "," << seed
                  << "\n";
        }
      }
      return kOk;
    }
    if (cell->parsed()) {
      Output o(out);
      o.get() << "delta,p,mu,seed,delta_v_at_0,torus_mean_delta_v,collapse_gap,lipschitz,residual\n";
      CellOptions opt;
      opt.K = cfg.schedule.K;
      opt.newton.tol = cfg.tol.newton;
      for (double delta : delta_list)
        for (const auto& ps : p_list) {
          const Point p = parse_point(ps);
          for (std::uint64_t seed : cfg.seeds) {
            const CoefficientField f = sample_realization(cfg.env, seed, torus_side(cfg.env, delta, cfg.schedule), cfg.schedule.h);
            const CellSolution s = solve_delta_problem(f, delta, p, mu, opt);
            const std::string pstr = d == 1 ? num(p[0]) : num(p[0]) + ":" + num(p[1]);
            o.get() << num(delta) << "," << pstr << "," << num(mu) << "," << seed << "," << num(s.delta_v_at(0)) << ","
                    << num(s.torus_mean_delta_v()) << "," << num(collapse_gap(s)) << "," << num(lipschitz_seminorm(s))
                    << "," << num(s.residual) << "\n";
          }
        }
      return kOk;
    }
    if (eff->parsed()) {
      EffHamEstimator est(cfg.env, cfg.schedule);
      const EffHamTable t = tabulate(est, mu, p_max, dp);
      Output o(out);
      o.get() << (d == 1 ? "p0" : "p0,p1") << ",mu,value,spread,flag\n";
      for (std::size_t i = 0; i < t.p.size(); ++i) {
        o.get() << num(t.p[i][0]) << ",";
        if (d == 2) o.get() << num(t.p[i][1]) << ",";
        o.get() << num(mu) << "," << num(t.value(i)) << "," << num(t.samples[i].spread) << ","
                << (t.samples[i].flagged ? 1 : 0) << "\n";
      }
      return t.quality_ok() ? kOk : kProperty;
    }
    if (lbar->parsed()) {
      const CriticalTriple tr = critical_triple(cfg);
      Output o(out);
      o.get() << triple_to_json(tr, d).dump(2) << "\n";
      return kOk;
    }

    if (!out.empty()) cfg.out_dir = out;
    std::vector<RunRecord> records;
    if (crit->parsed()) records.push_back(run_criticality_convergence(cfg));
    if (conc->parsed()) records.push_back(run_concentration(cfg));
    if (mono->parsed()) records.push_back(run_monotonicity_suite(cfg));
    if (hj->parsed()) records.push_back(run_hj1d_homogenization(cfg));
    if (rep->parsed()) {
      const CriticalTriple tr = critical_triple(cfg);
      records.push_back(run_criticality_convergence(cfg, tr));
      records.push_back(run_concentration(cfg, tr));
      records.push_back(run_monotonicity_suite(cfg));
      if (d == 1) records.push_back(run_hj1d_homogenization(cfg));
    }
    return finish(records, cfg);
  } catch (const SolverBreakdown& e) {
    std::fprintf(stderr, "effham-lab: %s (condition estimate %g)\n", e.what(), e.condition_estimate());
    return kSolver;
  } catch (const Error& e) {
    std::fprintf(stderr, "effham-lab: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "effham-lab: %s\n", e.what());
    return kConfiguration;
  }
}
