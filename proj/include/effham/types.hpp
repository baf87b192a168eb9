#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace effham {

/// A point or vector in R^d for d <= 2. Unused trailing components stay zero.
using Point = std::array<double, 2>;
using Index = std::array<int, 2>;

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline double dot(const Point& a, const Point& b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

inline double norm(const Point& a, int d) { return std::sqrt(dot(a, a, d)); }

inline Point operator+(Point a, const Point& b) {
  a[0] += b[0];
  a[1] += b[1];
  return a;
}

inline Point operator-(Point a, const Point& b) {
  a[0] -= b[0];
  a[1] -= b[1];
  return a;
}

inline Point operator*(double s, Point a) {
  a[0] *= s;
  a[1] *= s;
  return a;
}

/// Non-negative remainder.
inline int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

/// Nodal samples of all microscopic coefficients on some node set.
///
/// Layout: A is (group, node, {a11, a12, a22}); b is (group, node, axis);
/// c and sigma are (node, alpha, beta). Entries beyond the dimension are zero.
struct NodeCoefficients {
  int d = 1;
  int m = 1;
  std::size_t nodes = 0;
  std::vector<double> A;
  std::vector<double> b;
  std::vector<double> c;
  std::vector<double> sigma;

  NodeCoefficients() = default;
  NodeCoefficients(int dim, int groups, std::size_t count)
      : d(dim), m(groups), nodes(count),
        A(static_cast<std::size_t>(groups) * count * 3, 0.0),
        b(static_cast<std::size_t>(groups) * count * 2, 0.0),
        c(count * groups * groups, 0.0),
        sigma(count * groups * groups, 0.0) {}

  double& a(int alpha, std::size_t node, int k) { return A[(alpha * nodes + node) * 3 + k]; }
  double a(int alpha, std::size_t node, int k) const { return A[(alpha * nodes + node) * 3 + k]; }
  /// Entry (i, j) of the symmetric diffusion matrix.
  double a_ij(int alpha, std::size_t node, int i, int j) const {
    if (i == j) return a(alpha, node, i == 0 ? 0 : 2);
    return a(alpha, node, 1);
  }
  double& drift(int alpha, std::size_t node, int k) { return b[(alpha * nodes + node) * 2 + k]; }
  double drift(int alpha, std::size_t node, int k) const { return b[(alpha * nodes + node) * 2 + k]; }
  Point drift_vec(int alpha, std::size_t node) const {
    return {drift(alpha, node, 0), drift(alpha, node, 1)};
  }
  double& coupling(std::size_t node, int alpha, int beta) { return c[(node * m + alpha) * m + beta]; }
  double coupling(std::size_t node, int alpha, int beta) const { return c[(node * m + alpha) * m + beta]; }
  double& fission(std::size_t node, int alpha, int beta) { return sigma[(node * m + alpha) * m + beta]; }
  double fission(std::size_t node, int alpha, int beta) const { return sigma[(node * m + alpha) * m + beta]; }

  double coupling_row_sum(std::size_t node, int alpha) const {
    double s = 0.0;
    for (int beta = 0; beta < m; ++beta) s += coupling(node, alpha, beta);
    return s;
  }
  double fission_row_sum(std::size_t node, int alpha) const {
    double s = 0.0;
    for (int beta = 0; beta < m; ++beta) s += fission(node, alpha, beta);
    return s;
  }

  /// A p . p + b . p at one node.
  double hamiltonian(int alpha, std::size_t node, const Point& p) const {
    double q = a(alpha, node, 0) * p[0] * p[0];
    if (d == 2) q += 2.0 * a(alpha, node, 1) * p[0] * p[1] + a(alpha, node, 2) * p[1] * p[1];
    return q + drift(alpha, node, 0) * p[0] + (d == 2 ? drift(alpha, node, 1) * p[1] : 0.0);
  }

  /// Extreme eigenvalues of A at one node.
  std::pair<double, double> ellipticity(int alpha, std::size_t node) const {
    if (d == 1) return {a(alpha, node, 0), a(alpha, node, 0)};
    const double a11 = a(alpha, node, 0), a12 = a(alpha, node, 1), a22 = a(alpha, node, 2);
    const double mean = 0.5 * (a11 + a22);
    const double rad = std::sqrt(0.25 * (a11 - a22) * (a11 - a22) + a12 * a12);
    return {mean - rad, mean + rad};
  }
};

}  // namespace effham
