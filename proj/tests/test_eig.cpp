#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace effham;
using testing_support::config;
using testing_support::constant_spec;

namespace {

constexpr double kPi = std::numbers::pi;

/// Smallest eigenvalue of the tridiagonal Toeplitz matrix with diagonal
/// 2/h^2 + b/h, sub-diagonal -1/h^2 - b/h and super-diagonal -1/h^2 (n rows).
double toeplitz_lambda(double h, double b, int n) {
  const double alpha = 2.0 / (h * h) + b / h;
  const double lower = 1.0 / (h * h) + b / h, upper = 1.0 / (h * h);
  return alpha - 2.0 * std::sqrt(lower * upper) * std::cos(kPi / (n + 1));
}

}  // namespace

TEST(Eig, DirichletLaplacianMatchesSineMode) {
  const auto f = sample_realization(constant_spec(1.0, 0.0), 1, 2.0, 0.125);
  DomainSpec dom;
  dom.lo = {0.0, 0.0};
  dom.hi = {1.0, 0.0};
  dom.x0 = {0.5, 0.0};
  dom.eps = 0.25;  // micro box of side R = 4
  const double h = 1.0 / 64.0, R = 4.0;
  const EigenPair p = epsilon_eigenvalue(f, dom, h);
  EXPECT_NEAR(p.lambda, 4.0 / (h * h) * std::pow(std::sin(kPi * h / (2.0 * R)), 2), 1e-10);
  EXPECT_NEAR(p.lambda, kPi * kPi / (R * R), 1e-4);
  EXPECT_LE(p.residual, 1e-8);
  EXPECT_NEAR(p.lambda_eps2, p.lambda * 0.0625, 1e-15);
  EXPECT_GT(p.Phi.minCoeff(), 0.0);
}

TEST(Eig, UpwindDriftMatchesToeplitzOracle) {
  const double b = 2.0, h = 1.0 / 32.0;
  const auto f = sample_realization(constant_spec(1.0, b), 1, 2.0, 0.125);
  DomainSpec dom;
  dom.hi = {1.0, 0.0};
  dom.x0 = {0.5, 0.0};
  dom.eps = 0.1;  // R = 10
  const EigenPair p = epsilon_eigenvalue(f, dom, h);
  const int n = static_cast<int>(std::lround(10.0 / h)) - 1;
  EXPECT_NEAR(p.lambda, toeplitz_lambda(h, b, n), 1e-9);
  // continuum value b^2/4 + pi^2/R^2 up to the first-order upwind error
  EXPECT_NEAR(p.lambda, 1.0 + kPi * kPi / 100.0, 0.1);
}

TEST(Eig, LogEigenfunctionMatchesClosedForms) {
  const double b = 2.0, h = 1.0 / 64.0, eps = 0.1;
  const auto f = sample_realization(constant_spec(1.0, b), 1, 2.0, 0.125);
  DomainSpec dom;
  dom.hi = {1.0, 0.0};
  dom.x0 = {0.5, 0.0};
  dom.eps = eps;
  const EigenPair p = epsilon_eigenvalue(f, dom, h);
  const LogEigenfunction psi = hopf_cole(p, dom);
  const int n = static_cast<int>(p.grid.nodes());
  const double ratio = 1.0 + b * h;  // lower / upper off-diagonal
  // discrete eigenvector: ratio^{k/2} sin(k pi / (n + 1)), k = 1..n
  auto discrete = [&](int i) {
    const int k = i + 1;
    return -eps * (0.5 * k * std::log(ratio) + std::log(std::sin(k * kPi / (n + 1))));
  };
  const int i0 = static_cast<int>(p.normalization_node);
  const double x0 = psi.x(p.normalization_node)[0];
  double worst_discrete = 0.0, worst_continuum = 0.0;
  for (int i = 0; i < n; ++i) {
    worst_discrete = std::max(worst_discrete, std::abs(psi.value(0, i) - (discrete(i) - discrete(i0))));
    const double x = psi.x(i)[0];
    if (x < 0.2 || x > 0.8) continue;
    const double exact = -(b / 2.0) * (x - x0) - eps * std::log(std::sin(kPi * x) / std::sin(kPi * x0));
    worst_continuum = std::max(worst_continuum, std::abs(psi.value(0, i) - exact));
  }
  EXPECT_LT(worst_discrete, 1e-8);
  // first-order upwind error: the discrete decay rate is log(1 + b h) / h
  EXPECT_LT(worst_continuum, 0.3 * b * b * h / 4.0 + 5e-4);
}

TEST(Eig, SymmetricExchangeReducesToOneGroup) {
  const auto cfg = config("two_group");
  const auto f = sample_realization(cfg.env, 1, 2.0, 0.125);
  DomainSpec dom;
  dom.hi = {1.0, 0.0};
  dom.x0 = {0.5, 0.0};
  dom.eps = 0.25;
  const double h = 1.0 / 32.0, R = 4.0;
  const EigenPair p = epsilon_eigenvalue(f, dom, h);
  EXPECT_NEAR(p.lambda, 4.0 / (h * h) * std::pow(std::sin(kPi * h / (2.0 * R)), 2), 1e-9);
  for (std::size_t k = 0; k < p.grid.nodes(); ++k) EXPECT_NEAR(p.phi(0, k), p.phi(1, k), 1e-8);
}

TEST(Eig, CollatzWielandtCertificate) {
  const auto f = sample_realization(constant_spec(1.0, 1.0), 1, 2.0, 0.125);
  const Grid g = Grid::box(1, {0.0, 0.0}, {5.0, 0.0}, 1.0 / 16.0);
  const auto M = assemble_system(f, g);
  const auto S = assemble_mass(f, g);
  const EigenPair p = principal_eigenpair(M, S, g);
  EXPECT_TRUE(certify_lower_bound(M, S, p.lambda - 1e-6, p.Phi).certified);
  EXPECT_FALSE(certify_lower_bound(M, S, p.lambda + 1e-3, p.Phi).certified);
  EXPECT_THROW(certify_lower_bound(M, S, 0.0, -p.Phi), Error);
}

TEST(Eig, CheckerboardEigenpairIsPositive) {
  const auto cfg = config("checkerboard_two_group");
  const auto f = sample_realization(cfg.env, 1, 16.0, 0.125);
  DomainSpec dom;
  dom.hi = {1.0, 0.0};
  dom.x0 = {0.5, 0.0};
  dom.eps = 0.1;
  const EigenPair p = epsilon_eigenvalue(f, dom, 0.125);
  EXPECT_GT(p.Phi.minCoeff(), 0.0);
  EXPECT_LE(p.residual, 1e-8);
  EXPECT_NEAR(p.phi(0, p.normalization_node), 1.0, 1e-14);
  // the Rayleigh value sits inside the Collatz-Wielandt bracket
  const Grid& g = p.grid;
  const auto M = assemble_system(f, g);
  const auto S = assemble_mass(f, g);
  const Vec r = (M.matrix * p.Phi).cwiseQuotient(S.matrix * p.Phi);
  EXPECT_LE(r.minCoeff(), p.lambda + 1e-8);
  EXPECT_GE(r.maxCoeff(), p.lambda - 1e-8);
}

TEST(Eig, RejectsBadDomains) {
  const auto f = sample_realization(constant_spec(1.0, 0.0), 1, 2.0, 0.125);
  DomainSpec dom;
  dom.hi = {1.0, 0.0};
  dom.x0 = {1.5, 0.0};
  EXPECT_THROW(epsilon_eigenvalue(f, dom, 0.125), Error);
  dom.x0 = {0.5, 0.0};
  dom.eps = 1e-7;
  try {
    epsilon_eigenvalue(f, dom, 0.125);
    FAIL() << "expected size rejection";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unsupported_size);
  }
}
