#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace effham;
using testing_support::config;
using testing_support::constant_spec;

namespace {

NodeCoefficients uniform_coefficients(int d, std::size_t nodes, double a11, double a12, double a22, Point b) {
  NodeCoefficients c(d, 1, nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    c.a(0, k, 0) = a11;
    c.a(0, k, 1) = a12;
    c.a(0, k, 2) = a22;
    c.drift(0, k, 0) = b[0];
    c.drift(0, k, 1) = b[1];
    c.fission(k, 0, 0) = 1.0;
  }
  return c;
}

}  // namespace

TEST(Discretize, DirichletLaplacianEntries) {
  const double h = 0.25;
  const Grid g = Grid::box(1, {0.0, 0.0}, {2.0, 0.0}, h);
  ASSERT_EQ(g.nodes(), 7u);
  const auto op = assemble_system(uniform_coefficients(1, g.nodes(), 1.0, 0.0, 0.0, {0.0, 0.0}), g);
  const Eigen::MatrixXd M(op.matrix);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const double expect = i == j ? 2.0 / (h * h) : (std::abs(i - j) == 1 ? -1.0 / (h * h) : 0.0);
      EXPECT_DOUBLE_EQ(M(i, j), expect);
    }
  EXPECT_TRUE(op.is_M_compatible);
}

TEST(Discretize, UpwindDriftTakesTheUpstreamNeighbour) {
  const double h = 0.25, b = 2.0;
  const Grid g = Grid::box(1, {0.0, 0.0}, {2.0, 0.0}, h);
  const auto op = assemble_system(uniform_coefficients(1, g.nodes(), 1.0, 0.0, 0.0, {b, 0.0}), g);
  const Eigen::MatrixXd M(op.matrix);
  EXPECT_DOUBLE_EQ(M(3, 3), 2.0 / (h * h) + b / h);
  EXPECT_DOUBLE_EQ(M(3, 2), -1.0 / (h * h) - b / h);
  EXPECT_DOUBLE_EQ(M(3, 4), -1.0 / (h * h));
  const auto neg = assemble_system(uniform_coefficients(1, g.nodes(), 1.0, 0.0, 0.0, {-b, 0.0}), g);
  const Eigen::MatrixXd N(neg.matrix);
  EXPECT_DOUBLE_EQ(N(3, 4), -1.0 / (h * h) - b / h);
  EXPECT_DOUBLE_EQ(N(3, 2), -1.0 / (h * h));
}

TEST(Discretize, TorusRowsAnnihilateConstants) {
  const auto cfg = config("checkerboard_two_group");
  const auto f = sample_realization(cfg.env, 2, 8.0, 0.125);
  const Grid g{1, f.n, f.h, Topology::torus, {0.0, 0.0}};
  AssemblyOptions no_coupling;
  no_coupling.coupling = false;
  const auto op = assemble_system(f, g, no_coupling);
  const Vec r = op.matrix * Vec::Ones(op.matrix.rows());
  EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(op.is_M_compatible);
  // with coupling the row sums are the coupling row sums
  const auto full = assemble_system(f, g);
  const Vec rc = full.matrix * Vec::Ones(full.matrix.rows());
  for (int a = 0; a < 2; ++a)
    for (std::size_t k = 0; k < f.node_count(); ++k)
      EXPECT_NEAR(rc(static_cast<Eigen::Index>(a * f.node_count() + k)), f.coef.coupling_row_sum(k, a), 1e-10);
}

TEST(Discretize, MixedStencilIsExactOnQuadratics) {
  const double h = 0.1, a11 = 1.0, a12 = 0.3, a22 = 0.8;
  for (double s : {1.0, -1.0}) {
    const Grid g = Grid::box(2, {0.0, 0.0}, {1.0, 1.0}, h);
    const auto op = assemble_system(uniform_coefficients(2, g.nodes(), a11, s * a12, a22, {0.0, 0.0}), g);
    EXPECT_TRUE(op.is_M_compatible);
    Vec u(static_cast<Eigen::Index>(g.nodes()));
    for (std::size_t k = 0; k < g.nodes(); ++k) {
      const Point x = g.position(k);
      u(static_cast<Eigen::Index>(k)) = x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
    }
    const Vec Lu = op.matrix * u;
    // -tr(A D^2 u) with D^2 u = [[2, 1], [1, 4]]
    const double expect = -(2.0 * a11 + 2.0 * s * a12 + 4.0 * a22);
    for (std::size_t k = 0; k < g.nodes(); ++k) {
      const Index ij = g.multi_index(k);
      if (ij[0] == 0 || ij[1] == 0 || ij[0] == g.n[0] - 1 || ij[1] == g.n[1] - 1) continue;
      EXPECT_NEAR(Lu(static_cast<Eigen::Index>(k)), expect, 1e-9);
    }
  }
}

TEST(Discretize, StrongAnisotropyIsFlagged) {
  const Grid g = Grid::box(2, {0.0, 0.0}, {1.0, 1.0}, 0.125);
  const auto op = assemble_system(uniform_coefficients(2, g.nodes(), 1.0, 0.9, 0.5, {0.0, 0.0}), g);
  EXPECT_FALSE(op.is_M_compatible);
}

TEST(Discretize, MassOperatorCarriesFission) {
  const auto cfg = config("checkerboard_two_group");
  const auto f = sample_realization(cfg.env, 3, 8.0, 0.125);
  const Grid g{1, f.n, f.h, Topology::torus, {0.0, 0.0}};
  const auto S = assemble_mass(f, g);
  const std::size_t N = f.node_count();
  const Eigen::MatrixXd D(S.matrix);
  for (std::size_t k = 0; k < N; k += 7)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        EXPECT_DOUBLE_EQ(D(static_cast<Eigen::Index>(a * N + k), static_cast<Eigen::Index>(b * N + k)),
                         f.coef.fission(k, a, b));
}

TEST(Discretize, SolverOwnsItsMatrix) {
  const Grid g = Grid::box(1, {0.0, 0.0}, {4.0, 0.0}, 0.125);
  LinearSolver solver;
  Vec rhs = Vec::Ones(static_cast<Eigen::Index>(g.nodes()));
  SpMat kept;
  {
    const auto op = assemble_system(uniform_coefficients(1, g.nodes(), 1.0, 0.0, 0.0, {1.0, 0.0}), g);
    kept = op.matrix;
    solver.compute(op.matrix);
  }
  const Vec x = solver.solve(rhs);
  EXPECT_LE((kept * x - rhs).norm() / rhs.norm(), 1e-10);
}

TEST(Discretize, SolverErrors) {
  LinearSolver unused;
  try {
    unused.solve(Vec::Ones(3));
    FAIL() << "expected precondition error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
  const Grid g = Grid::torus(1, 8, 0.125);
  AssemblyOptions opt;
  const auto op = assemble_system(uniform_coefficients(1, g.nodes(), 1.0, 0.0, 0.0, {0.0, 0.0}), g, opt);
  // the periodic Laplacian without absorption is singular and a right-hand
  // side with nonzero mean has no solution
  EXPECT_THROW(
      {
        LinearSolver s(op.matrix);
        s.solve(Vec::Ones(op.matrix.rows()));
      },
      SolverBreakdown);
}

TEST(Discretize, RejectsIncompatibleGrids) {
  EXPECT_THROW(Grid::box(1, {0.0, 0.0}, {1.0, 0.0}, 0.3), Error);
  const auto f = sample_realization(constant_spec(1.0, 0.0), 1, 2.0, 0.125);
  const Grid g = Grid::box(1, {0.0, 0.0}, {1.5, 0.0}, 0.1);
  EXPECT_THROW(coefficients_on(f, g), Error);
}
