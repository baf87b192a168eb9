#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace effham;
using testing_support::config;

TEST(Hamiltonian, RichardsonIsExactOnPolynomials) {
  const std::vector<double> d{0.2, 0.1, 0.05};
  std::vector<double> quad, lin;
  for (double x : d) {
    quad.push_back(3.0 + 2.0 * x + 5.0 * x * x);
    lin.push_back(-1.0 + 4.0 * x);
  }
  EXPECT_NEAR(richardson(d, quad, 2), 3.0, 1e-12);
  EXPECT_NEAR(richardson(d, lin, 1), -1.0, 1e-12);
  EXPECT_DOUBLE_EQ(richardson(d, lin, 0), lin.back());
  // order is capped by the sample count
  EXPECT_NEAR(richardson({0.1}, {7.0}, 2), 7.0, 0.0);
}

TEST(Hamiltonian, GoldenSectionAndLatticeMinimum) {
  const auto [x, v] = golden_section([](double t) { return (t - 0.3) * (t - 0.3) + 1.0; }, -1.0, 2.0, 1e-8);
  EXPECT_NEAR(x, 0.3, 1e-7);
  EXPECT_NEAR(v, 1.0, 1e-12);

  MinimizeOptions opt;
  opt.p_max = 3.0;
  opt.dp = 0.25;
  opt.tol_p = 1e-8;
  const auto H = [](const Point& p) { return (p[0] - 0.6) * (p[0] - 0.6) + 2.0 * (p[1] + 1.1) * (p[1] + 1.1); };
  const Minimum m = min_over_p(H, 2, opt);
  EXPECT_NEAR(m.theta[0], 0.6, 1e-6);
  EXPECT_NEAR(m.theta[1], -1.1, 1e-6);

  opt.p_max = 0.5;
  try {
    min_over_p(H, 2, opt);
    FAIL() << "expected range error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::range);
  }
}

TEST(Hamiltonian, LambdaBarOfQuadraticFamilies) {
  // Hbar = a p^2 + b p + mu r_sigma - r_c has lambda_bar = (r_c + b^2 / 4a) / r_sigma, theta_bar = -b / 2a
  const double a = 1.5, b = 2.0, rc = 0.3, rs = 2.0;
  LambdaBarOptions opt;
  opt.minimize.tol_p = 1e-7;
  const auto H1 = [&](const Point& p, double mu) { return a * p[0] * p[0] + b * p[0] + mu * rs - rc; };
  const CriticalTriple t = compute_lambda_bar(H1, 1, opt);
  EXPECT_NEAR(t.lambda_bar, (rc + b * b / (4 * a)) / rs, opt.tol_root / rs);
  EXPECT_NEAR(t.theta_bar[0], -b / (2 * a), 1e-3);
  EXPECT_LE(std::abs(t.g_final), opt.tol_root);
  EXPECT_LE(t.flatness_gap, 2.0 * opt.minimize.dp);

  const Point bb{1.0, -2.0};
  const auto H2 = [&](const Point& p, double mu) { return p[0] * p[0] + p[1] * p[1] + bb[0] * p[0] + bb[1] * p[1] + mu; };
  const CriticalTriple t2 = compute_lambda_bar(H2, 2, opt);
  EXPECT_NEAR(t2.lambda_bar, 1.25, opt.tol_root);
  EXPECT_NEAR(t2.theta_bar[0], -0.5, 1e-3);
  EXPECT_NEAR(t2.theta_bar[1], 1.0, 1e-3);
}

TEST(Hamiltonian, LambdaBarRejectsPositiveMinimumAtZero) {
  LambdaBarOptions opt;
  const auto H = [](const Point& p, double mu) { return p[0] * p[0] + 0.5 + mu; };
  try {
    compute_lambda_bar(H, 1, opt);
    FAIL() << "expected consistency error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::consistency);
  }
}

TEST(Hamiltonian, FlatnessGapMeasuresFlatBottom) {
  const auto H = [](const Point& p) {
    const double r = std::max(std::abs(p[0]) - 0.5, 0.0);
    return r * r;
  };
  EXPECT_NEAR(flatness_gap(H, 1, {0.1, 0.0}, 0.25, 1e-6), 1.0, 1e-12);
  const auto Q = [](const Point& p) { return p[0] * p[0]; };
  EXPECT_NEAR(flatness_gap(Q, 1, {0.0, 0.0}, 0.25, 1e-6), 0.0, 1e-12);
}

TEST(Hamiltonian, EstimatorReproducesConstantCase) {
  const auto cfg = config("constant_drift");
  EffHamEstimator est(cfg.env, cfg.schedule);
  for (double p : {-2.0, -1.0, 0.0, 0.75})
    for (double mu : {0.0, 0.5}) EXPECT_NEAR(est(Point{p, 0.0}, mu), p * p + 2.0 * p + mu, 1e-9);

  const EffHamTable t = tabulate(est, 0.0, 1.0, 0.25);
  ASSERT_EQ(t.n_axis, 9);
  const ConvexityReport c = convexity_report(t, cfg.env.kind);
  EXPECT_TRUE(c.pass);
  // second difference of a p^2 with a = 1
  EXPECT_NEAR(c.min_defect, 0.25 * 0.25, 1e-9);
  const FieldConstants k = est.constants();
  for (const auto& s : t.samples) EXPECT_GE(coercivity_margin(s, 1, k, 1e-9), 0.0);

  const CriticalTriple tr = compute_lambda_bar(est, cfg.lambda_bar);
  EXPECT_NEAR(tr.lambda_bar, 1.0, cfg.lambda_bar.tol_root);
  EXPECT_NEAR(tr.theta_bar[0], -1.0, 1e-3);
}

TEST(Hamiltonian, EstimatorTwoGroupExchange) {
  const auto cfg = config("two_group");
  EffHamEstimator est(cfg.env, cfg.schedule);
  for (double p : {-1.0, 0.5})
    for (double mu : {0.0, 0.25}) EXPECT_NEAR(est(Point{p, 0.0}, mu), p * p + mu, 1e-9);
}

TEST(Hamiltonian, PeriodicEstimateVanishesOnExponentialBranch) {
  // Hbar(theta, lambda(theta)) = 0 where lambda(theta) is the periodic
  // principal eigenvalue of the problem conjugated by e^{theta y}
  const auto cfg = config("periodic");
  EffHamEstimator est(cfg.env, cfg.schedule);
  const auto f = sample_realization(cfg.env, 1, cfg.env.period, cfg.schedule.h);
  for (double theta : {-0.45, -0.3, -0.15}) {
    const ThetaCellResult r = solve_theta_exponential(f, {theta, 0.0});
    ASSERT_GE(r.lambda_theta, 0.0);
    EXPECT_NEAR(est(Point{theta, 0.0}, r.lambda_theta), 0.0, 1e-5) << "theta " << theta;
  }
}

TEST(Hamiltonian, TorusSideHonoursK) {
  const auto cfg = config("checkerboard_two_group");
  Schedule s = cfg.schedule;
  EXPECT_DOUBLE_EQ(torus_side(cfg.env, 0.1, s), 100.0);
  EXPECT_DOUBLE_EQ(torus_side(cfg.env, 0.3, s), 34.0);
  const auto per = config("periodic");
  EXPECT_DOUBLE_EQ(torus_side(per.env, 0.005, per.schedule), 1.0);
  s.reduce_periodic = false;
  EXPECT_GE(torus_side(per.env, 0.005, s), 10.0 / 0.005);
}
