#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "support.hpp"

using namespace effham;
using testing_support::config;

namespace {

constexpr double kPi = std::numbers::pi;

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("effham_lab_" + name);
  std::filesystem::remove_all(p);
  return p;
}

ExperimentConfig coarse_constant() {
  ExperimentConfig c = config("constant_drift");
  c.h_micro = 1.0 / 128.0;
  return c;
}

}  // namespace

TEST(Lab, EmptyReportIsWritten) {
  const auto dir = scratch("empty");
  const json s = emit_report({}, dir.string());
  EXPECT_TRUE(s["pass"].get<bool>());
  EXPECT_TRUE(s["records"].empty());
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.json"));
  std::filesystem::remove_all(dir);
}

TEST(Lab, CriticalityMatchesToeplitzEigenvalues) {
  const ExperimentConfig cfg = coarse_constant();
  const RunRecord r = run_criticality_convergence(cfg);
  ASSERT_EQ(r.rows.size(), cfg.eps.size());
  const double b = 2.0, h = cfg.h_micro;
  for (const auto& row : r.rows) {
    // upwind operator on (0, 1/eps): tridiagonal Toeplitz with n interior nodes
    const int n = static_cast<int>(std::lround(1.0 / row[0] / h)) - 1;
    const double lower = 1.0 / (h * h) + b / h, upper = 1.0 / (h * h);
    const double exact = 2.0 / (h * h) + b / h - 2.0 * std::sqrt(lower * upper) * std::cos(kPi / (n + 1));
    EXPECT_NEAR(row[1], exact, 1e-9);
    EXPECT_NEAR(row[2], row[1] * row[0] * row[0], 1e-12);
  }
  ASSERT_NE(r.verdict("eps_monotone"), nullptr);
  EXPECT_TRUE(r.verdict("eps_monotone")->pass);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.extra["critical_triple"]["lambda_bar"].get<double>(), 1.0, cfg.tol.tol_root);

  const auto dir = scratch("crit");
  emit_report({r}, dir.string(), true);
  std::ifstream in(dir / "constant_drift_criticality.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "eps,lambda,lambda_eps2,residual,iterations,seed,gap_to_lambda_bar");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, static_cast<int>(cfg.eps.size()));
  EXPECT_TRUE(std::filesystem::exists(dir / "constant_drift_criticality_lambda_vs_eps.svg"));
  std::filesystem::remove_all(dir);
}

TEST(Lab, ConcentrationMatchesLogSineProfile) {
  // psi = -(x - x0) - eps log(sin(pi x) / sin(pi x0)) for A = 1, b = 2; on the
  // middle third the worst deviation from the line is eps |log sin(pi / 3)|
  const ExperimentConfig cfg = coarse_constant();
  const RunRecord r = run_concentration(cfg);
  ASSERT_FALSE(r.skipped);
  const double upwind = 2.0 * 2.0 * cfg.h_micro / 4.0 * (1.0 / 6.0);
  for (const auto& row : r.rows) EXPECT_NEAR(row[2], row[0] * std::abs(std::log(std::sin(kPi / 3.0))), upwind + 1e-3);
  EXPECT_TRUE(r.pass());
}

TEST(Lab, TentProfileMatchesLogCosh) {
  // -eps u'' + |u'|^2 = 1 on (0, 1) with zero data: u = eps log cosh(1/2eps) - eps log cosh((x - 1/2)/eps)
  const ExperimentConfig cfg = config("tent");
  EffHamEstimator est(cfg.env, cfg.schedule);
  const EffectiveProfile prof = effective_profile(est, cfg);
  EXPECT_NEAR(prof.x_star, 0.5, 1e-6);
  for (double eps : cfg.eps) {
    const HJ1DSolutionPair pr = solve_hj1d(cfg, prof, eps, 1);
    double worst = 0.0;
    for (std::size_t k = 0; k < pr.x.size(); ++k) {
      const double x = pr.x[k];
      const double exact = eps * std::log(std::cosh(0.5 / eps)) - eps * std::log(std::cosh((x - 0.5) / eps));
      worst = std::max(worst, std::abs(pr.u_eps[0][k] - exact));
      EXPECT_NEAR(pr.u_eff[k], std::min(x, 1.0 - x), 1e-6);
    }
    EXPECT_LT(worst, eps * cfg.schedule.h) << "eps " << eps;
    EXPECT_NEAR(pr.sup_error, eps * std::log(2.0), eps * cfg.schedule.h + 1e-6);
  }
}

TEST(Lab, BoxInterpolationIsExactOnLinearData) {
  const Grid coarse = Grid::box(1, {0.0, 0.0}, {4.0, 0.0}, 0.25);
  const Grid fine = Grid::box(1, {0.0, 0.0}, {4.0, 0.0}, 0.125);
  Vec v(static_cast<Eigen::Index>(coarse.nodes()));
  for (std::size_t k = 0; k < coarse.nodes(); ++k) v(static_cast<Eigen::Index>(k)) = 3.0 * coarse.position(k)[0] + 1.0;
  const Vec out = detail::interpolate_box(coarse, v, 1, fine);
  for (std::size_t k = 0; k < fine.nodes(); ++k) {
    const double y = fine.position(k)[0];
    if (y < 0.25 || y > 3.75) continue;
    EXPECT_NEAR(out(static_cast<Eigen::Index>(k)), 3.0 * y + 1.0, 1e-12);
  }
}

TEST(Lab, RecordRejectsRaggedRows) {
  RunRecord r;
  r.columns = {"a", "b"};
  EXPECT_THROW(r.add_row({1.0}), Error);
  r.add_verdict({"reported_only", false, 1.0, 0.0, false, ""});
  EXPECT_TRUE(r.pass());
  r.add_verdict({"asserted", false, 1.0, 0.0, true, ""});
  EXPECT_FALSE(r.pass());
}
