#pragma once

// Coefficient environments: specification, seeded torus realizations,
// validation of the standing structural assumptions, and translations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "effham/error.hpp"
#include "effham/types.hpp"

namespace effham {

enum class EnvKind { constant, periodic, checkerboard, quasiperiodic };

inline const char* to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::constant: return "constant";
    case EnvKind::periodic: return "periodic";
    case EnvKind::checkerboard: return "checkerboard";
    case EnvKind::quasiperiodic: return "quasiperiodic";
  }
  return "unknown";
}

/// Environments whose translation action is uniquely ergodic.
inline bool uniquely_ergodic(EnvKind kind) { return kind != EnvKind::checkerboard; }

/// A coefficient of the form base + amp * xi(y), where xi takes values in [-1, 1]
/// and its shape depends on the environment kind.
struct ScalarLaw {
  double base = 0.0;
  double amp = 0.0;
};

/// Frequency stored as a rational with a large denominator.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static constexpr std::int64_t kDenominator = 1'000'000'000;

  static Rational approximate(double x) {
    return {static_cast<std::int64_t>(std::llround(x * static_cast<double>(kDenominator))), kDenominator};
  }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct GroupLaws {
  ScalarLaw diffusion;          // isotropic part a(y) I
  ScalarLaw anisotropy;         // off-diagonal a12 (d = 2)
  std::array<ScalarLaw, 2> drift;
};

struct EnvironmentSpec {
  int dimension = 1;
  int groups = 1;
  EnvKind kind = EnvKind::constant;
  double ellipticity_min = 1.0;
  double ellipticity_max = 1.0;
  double drift_amplitude = 0.0;
  std::vector<GroupLaws> group{GroupLaws{}};
  /// m x m laws, row-major. Off-diagonal entries are the (non-positive) c values;
  /// the diagonal amplitude perturbs the row sum, whose base is sum_beta base.
  std::vector<ScalarLaw> coupling{ScalarLaw{}};
  std::vector<ScalarLaw> fission{ScalarLaw{1.0, 0.0}};
  double c_min = 0.1;
  double lipschitz_bound = 100.0;
  double checkerboard_cell = 1.0;
  double period = 1.0;
  std::vector<Rational> frequencies;
  std::uint64_t seed = 0;

  const ScalarLaw& c_law(int a, int b) const { return coupling[a * groups + b]; }
  const ScalarLaw& sigma_law(int a, int b) const { return fission[a * groups + b]; }
};

inline void check_spec(const EnvironmentSpec& s) {
  require(s.dimension == 1 || s.dimension == 2, ErrorKind::rejected_input, "dimension must be 1 or 2");
  require(s.groups >= 1, ErrorKind::rejected_input, "groups must be >= 1");
  require(s.groups <= 8, ErrorKind::unsupported_size, "groups > 8 is not supported");
  require(0.0 < s.ellipticity_min && s.ellipticity_min <= s.ellipticity_max, ErrorKind::rejected_input,
          "ellipticity window must satisfy 0 < min <= max");
  require(s.c_min > 0.0, ErrorKind::rejected_input, "coupling.c_min must be positive");
  require(std::isfinite(s.lipschitz_bound), ErrorKind::rejected_input, "lipschitz.bound must be finite");
  require(static_cast<int>(s.group.size()) == s.groups, ErrorKind::rejected_input,
          "one diffusion/drift descriptor per group required");
  const auto mm = static_cast<std::size_t>(s.groups * s.groups);
  require(s.coupling.size() == mm && s.fission.size() == mm, ErrorKind::rejected_input,
          "coupling and fission patterns must be m x m");
  if (s.kind == EnvKind::checkerboard)
    require(s.checkerboard_cell > 0.0, ErrorKind::rejected_input, "checkerboard.cell must be positive");
  if (s.kind == EnvKind::periodic)
    require(s.period > 0.0, ErrorKind::rejected_input, "periodic.period must be positive");
  if (s.kind == EnvKind::quasiperiodic)
    require(!s.frequencies.empty(), ErrorKind::rejected_input, "quasiperiodic.frequencies missing");
}

/// One seeded realization sampled at the nodes of a torus of side L.
struct CoefficientField {
  EnvironmentSpec spec;
  double L = 1.0;
  double h = 1.0;
  std::uint64_t seed = 0;
  Index n{1, 1};  // nodes per axis; n[1] == 1 when d == 1
  NodeCoefficients coef;
  /// Node offset of the checkerboard lattice (stationarity shift); zero otherwise.
  Index lattice_offset{0, 0};

  int d() const { return spec.dimension; }
  int m() const { return spec.groups; }
  std::size_t node_count() const { return coef.nodes; }
  std::size_t node(int i, int j = 0) const {
    return static_cast<std::size_t>(wrap(i, n[0])) * n[1] + static_cast<std::size_t>(wrap(j, n[1]));
  }
  Index multi_index(std::size_t k) const {
    return {static_cast<int>(k / n[1]), static_cast<int>(k % n[1])};
  }
  Point position(std::size_t k) const {
    const Index ij = multi_index(k);
    return {ij[0] * h, d() == 2 ? ij[1] * h : 0.0};
  }
};

namespace detail {

/// Integer ratio x / h, or an error when it is not (close to) an integer.
inline int integer_ratio(double x, double h, const char* what) {
  const double r = x / h;
  const double ri = std::round(r);
  require(std::abs(r - ri) <= 1e-9 * std::max(1.0, std::abs(r)), ErrorKind::rejected_input,
          std::string(what) + " is not an integer multiple of the grid spacing");
  return static_cast<int>(ri);
}

/// Uniform in [-1, 1) built from the raw 64-bit engine output (portable).
inline double uniform_pm1(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

/// Number of scalar coefficient slots that receive their own shape function.
inline int slot_count(const EnvironmentSpec& s) {
  return s.groups * (1 + (s.dimension == 2 ? 1 : 0) + s.dimension) + 2 * s.groups * s.groups;
}

class Shape {
 public:
  Shape(const EnvironmentSpec& spec, double L, double h, Index n, std::uint64_t seed)
      : spec_(spec), L_(L), h_(h), n_(n) {
    const int d = spec.dimension;
    if (spec.kind == EnvKind::checkerboard) {
      const int per_cell = integer_ratio(spec.checkerboard_cell, h, "checkerboard.cell");
      require(per_cell >= 1, ErrorKind::rejected_input, "checkerboard.cell smaller than grid spacing");
      per_cell_ = per_cell;
      for (int k = 0; k < d; ++k) {
        require(n[k] % per_cell == 0, ErrorKind::rejected_input,
                "torus side must be an integer number of checkerboard cells");
        cells_[k] = n[k] / per_cell;
      }
      std::mt19937_64 rng(seed);
      for (int k = 0; k < d; ++k) offset_[k] = static_cast<int>(rng() % static_cast<std::uint64_t>(per_cell));
      const int slots = slot_count(spec);
      const std::size_t ncell = static_cast<std::size_t>(cells_[0]) * (d == 2 ? cells_[1] : 1);
      values_.resize(static_cast<std::size_t>(slots) * ncell);
      for (auto& v : values_) v = uniform_pm1(rng);
    } else if (spec.kind == EnvKind::quasiperiodic) {
      // periodic approximant: each frequency is rounded so that it completes an
      // integer number of oscillations on the torus
      for (const auto& f : spec.frequencies) {
        const double cycles = std::max(1.0, std::round(f.value() * L));
        freq_.push_back(cycles / L);
      }
    } else if (spec.kind == EnvKind::periodic) {
      const double periods = L / spec.period;
      require(std::abs(periods - std::round(periods)) < 1e-9 * std::max(1.0, periods),
              ErrorKind::rejected_input, "torus side must be a multiple of periodic.period");
    }
  }

  Index offset() const { return offset_; }

  /// xi for the given slot at lattice node (i, j).
  double operator()(int slot, int i, int j) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const int d = spec_.dimension;
    switch (spec_.kind) {
      case EnvKind::constant: return 0.0;
      case EnvKind::periodic: {
        double s = std::sin(two_pi * i * h_ / spec_.period);
        if (d == 2) s = 0.5 * (s + std::sin(two_pi * j * h_ / spec_.period));
        return s;
      }
      case EnvKind::quasiperiodic: {
        double s = 0.0;
        for (double f : freq_) {
          s += std::sin(two_pi * f * i * h_);
          if (d == 2) s += std::sin(two_pi * f * j * h_);
        }
        return s / (static_cast<double>(freq_.size()) * d);
      }
      case EnvKind::checkerboard: {
        const int ci = wrap(i - offset_[0], n_[0]) / per_cell_;
        const int cj = d == 2 ? wrap(j - offset_[1], n_[1]) / per_cell_ : 0;
        const std::size_t ncell = static_cast<std::size_t>(cells_[0]) * (d == 2 ? cells_[1] : 1);
        const std::size_t cell = static_cast<std::size_t>(ci) * (d == 2 ? cells_[1] : 1) + cj;
        return values_[static_cast<std::size_t>(slot) * ncell + cell];
      }
    }
    return 0.0;
  }

 private:
  const EnvironmentSpec& spec_;
  double L_;
  double h_;
  Index n_;
  int per_cell_ = 1;
  Index cells_{1, 1};
  Index offset_{0, 0};
  std::vector<double> values_;
  std::vector<double> freq_;
};

}  // namespace detail

struct ValidationEntry {
  std::string name;
  double margin = std::numeric_limits<double>::infinity();
  long node = -1;  // worst node, -1 when not applicable
};

struct ValidationReport {
  bool pass = true;
  std::vector<ValidationEntry> entries;

  const ValidationEntry& at(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    fail(ErrorKind::rejected_input, "no validation entry named " + name);
  }
  /// Names of all violated assumptions.
  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (e.margin < 0.0) out.push_back(e.name);
    return out;
  }
};

/// Margins for the structural assumptions on nodal coefficient samples.
/// `lipschitz` receives neighbour pairs; pass nullptr to skip that check.
inline ValidationReport validate_coefficients(const NodeCoefficients& coef, const EnvironmentSpec& spec,
                                              const CoefficientField* torus) {
  require(coef.m <= 8, ErrorKind::unsupported_size, "partition enumeration limited to m <= 8");
  const int m = coef.m;
  ValidationReport rep;
  auto track = [](ValidationEntry& e, double value, std::size_t node) {
    if (value < e.margin) {
      e.margin = value;
      e.node = static_cast<long>(node);
    }
  };
  ValidationEntry ellip{"ellip"}, diagdom{"diagdom"}, coupled{"coupled"}, sigma{"sigma"}, bounds{"bounds"};
  for (std::size_t k = 0; k < coef.nodes; ++k) {
    for (int a = 0; a < m; ++a) {
      const auto [lo, hi] = coef.ellipticity(a, k);
      track(ellip, std::min(lo - spec.ellipticity_min, spec.ellipticity_max - hi), k);
      track(diagdom, coef.coupling_row_sum(k, a), k);
      for (int b = 0; b < m; ++b)
        if (b != a) track(diagdom, -coef.coupling(k, a, b), k);
      double rs = 0.0;
      for (int b = 0; b < m; ++b) {
        track(sigma, coef.fission(k, a, b), k);
        rs += coef.fission(k, a, b);
      }
      track(sigma, rs - spec.c_min, k);
      track(bounds, spec.drift_amplitude - norm(coef.drift_vec(a, k), coef.d), k);
    }
    // full coupling: every ordered nontrivial partition (I, J) needs a strong link I -> J
    const unsigned full = (1u << m) - 1u;
    for (unsigned I = 1; I < full; ++I) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < m; ++a) {
        if (!(I & (1u << a))) continue;
        for (int b = 0; b < m; ++b)
          if (!(I & (1u << b))) best = std::max(best, -coef.coupling(k, a, b));
      }
      track(coupled, best - spec.c_min, k);
    }
  }
  if (torus != nullptr) {
    const auto& f = *torus;
    const int d = f.d();
    auto lip_of = [&](const std::vector<double>& arr, std::size_t stride, std::size_t count_per_node,
                      std::size_t blocks, bool node_major) {
      // arr layout: node_major => (node, comp) ; else (block, node, comp)
      double worst = 0.0;
      std::size_t worst_node = 0;
      for (std::size_t blk = 0; blk < blocks; ++blk)
        for (std::size_t k = 0; k < f.node_count(); ++k) {
          const Index ij = f.multi_index(k);
          for (int ax = 0; ax < d; ++ax) {
            const std::size_t nb = ax == 0 ? f.node(ij[0] + 1, ij[1]) : f.node(ij[0], ij[1] + 1);
            for (std::size_t c = 0; c < count_per_node; ++c) {
              const std::size_t i0 = node_major ? k * stride + c : (blk * f.node_count() + k) * stride + c;
              const std::size_t i1 = node_major ? nb * stride + c : (blk * f.node_count() + nb) * stride + c;
              const double q = std::abs(arr[i1] - arr[i0]) / f.h;
              if (q > worst) {
                worst = q;
                worst_node = k;
              }
            }
          }
        }
      return std::pair{worst, worst_node};
    };
    const auto mm = static_cast<std::size_t>(m * m);
    for (const auto& [w, node] : {lip_of(coef.A, 3, 3, m, false), lip_of(coef.b, 2, 2, m, false),
                                  lip_of(coef.c, mm, mm, 1, true), lip_of(coef.sigma, mm, mm, 1, true)})
      track(bounds, spec.lipschitz_bound - w, node);
  }
  rep.entries = {ellip, diagdom, coupled, sigma, bounds};
  for (const auto& e : rep.entries)
    if (e.margin < 0.0) rep.pass = false;
  return rep;
}

/// Margins for (ellip), (diagdom), (coupled), (sigma) and the Lipschitz/drift
/// bounds at every node of the field.
inline ValidationReport validate_assumptions(const CoefficientField& field) {
  require(field.m() <= 8, ErrorKind::unsupported_size, "partition enumeration limited to m <= 8");
  return validate_coefficients(field.coef, field.spec, &field);
}

/// Seeded realization on a torus of side L with node spacing h.
inline CoefficientField sample_realization(const EnvironmentSpec& spec, std::uint64_t seed, double L, double h) {
  check_spec(spec);
  require(L > 0.0 && h > 0.0, ErrorKind::rejected_input, "L and h must be positive");
  const int per_axis = detail::integer_ratio(L, h, "torus side L");
  require(per_axis % 2 == 0, ErrorKind::rejected_input, "L/h must be an even integer");
  require(per_axis >= 4, ErrorKind::rejected_input, "torus needs at least 4 nodes per axis");

  const int d = spec.dimension, m = spec.groups;
  CoefficientField f;
  f.spec = spec;
  f.L = L;
  f.h = h;
  f.seed = seed;
  f.n = {per_axis, d == 2 ? per_axis : 1};
  const std::size_t N = static_cast<std::size_t>(f.n[0]) * f.n[1];
  f.coef = NodeCoefficients(d, m, N);

  detail::Shape xi(spec, L, h, f.n, seed);
  f.lattice_offset = xi.offset();
  auto law = [&](const ScalarLaw& l, int slot, int i, int j) { return l.base + l.amp * xi(slot, i, j); };

  for (std::size_t k = 0; k < N; ++k) {
    const Index ij = f.multi_index(k);
    const int i = ij[0], j = ij[1];
    int slot = 0;
    for (int a = 0; a < m; ++a) {
      const auto& g = spec.group[a];
      const double diag = law(g.diffusion, slot++, i, j);
      f.coef.a(a, k, 0) = diag;
      if (d == 2) {
        f.coef.a(a, k, 1) = law(g.anisotropy, slot++, i, j);
        f.coef.a(a, k, 2) = diag;
      }
      for (int ax = 0; ax < d; ++ax) f.coef.drift(a, k, ax) = law(g.drift[ax], slot++, i, j);
    }
    const int c_slot = slot, s_slot = slot + m * m;
    for (int a = 0; a < m; ++a) {
      double base_row = 0.0;
      for (int b = 0; b < m; ++b) base_row += spec.c_law(a, b).base;
      double off = 0.0;
      for (int b = 0; b < m; ++b) {
        if (b == a) continue;
        const double v = law(spec.c_law(a, b), c_slot + a * m + b, i, j);
        f.coef.coupling(k, a, b) = v;
        off += v;
      }
      const double row = base_row + spec.c_law(a, a).amp * xi(c_slot + a * m + a, i, j);
      f.coef.coupling(k, a, a) = row - off;
      for (int b = 0; b < m; ++b) f.coef.fission(k, a, b) = law(spec.sigma_law(a, b), s_slot + a * m + b, i, j);
    }
    if (m >= 2) {
      // cyclic link alpha -> alpha+1 is forced below -c_min; diagonal keeps the row sum
      for (int a = 0; a < m; ++a) {
        const int b = (a + 1) % m;
        const double old = f.coef.coupling(k, a, b);
        const double forced = std::min(old, -spec.c_min);
        f.coef.coupling(k, a, b) = forced;
        f.coef.coupling(k, a, a) += old - forced;
      }
    }
  }

  const auto report = validate_assumptions(f);
  if (!report.pass) {
    std::string names;
    for (const auto& v : report.violations()) names += (names.empty() ? "" : ", ") + v;
    fail(ErrorKind::consistency, "generated field violates assumption(s): " + names);
  }
  return f;
}

/// Discrete translation: output node i holds input node i + z (periodically).
inline CoefficientField shift_field(const CoefficientField& field, Index z) {
  CoefficientField out = field;
  const int m = field.m();
  const auto mm = static_cast<std::size_t>(m * m);
  const std::size_t N = field.node_count();
  for (std::size_t k = 0; k < N; ++k) {
    const Index ij = field.multi_index(k);
    const std::size_t src = field.node(ij[0] + z[0], ij[1] + z[1]);
    for (int a = 0; a < m; ++a) {
      for (int c = 0; c < 3; ++c) out.coef.a(a, k, c) = field.coef.a(a, src, c);
      for (int c = 0; c < 2; ++c) out.coef.drift(a, k, c) = field.coef.drift(a, src, c);
    }
    std::copy_n(field.coef.c.begin() + static_cast<long>(src * mm), mm, out.coef.c.begin() + static_cast<long>(k * mm));
    std::copy_n(field.coef.sigma.begin() + static_cast<long>(src * mm), mm,
                out.coef.sigma.begin() + static_cast<long>(k * mm));
  }
  out.lattice_offset = {wrap(field.lattice_offset[0] - z[0], field.n[0]),
                        wrap(field.lattice_offset[1] - z[1], field.n[1])};
  return out;
}

/// Multilinear interpolation of all coefficients at a micro point (periodic).
inline void interpolate_at(const CoefficientField& f, const Point& y, NodeCoefficients& out, std::size_t slot) {
  const int d = f.d(), m = f.m();
  std::array<int, 2> base{0, 0};
  std::array<double, 2> frac{0.0, 0.0};
  for (int k = 0; k < d; ++k) {
    const double s = y[k] / f.h;
    const double fl = std::floor(s + 1e-9);
    double fr = s - fl;
    if (std::abs(fr) < 1e-9) fr = 0.0;
    base[k] = static_cast<int>(fl);
    frac[k] = std::max(0.0, fr);
  }
  std::array<std::pair<std::size_t, double>, 4> w{};
  int count = 0;
  for (int di = 0; di <= 1; ++di)
    for (int dj = 0; dj <= (d == 2 ? 1 : 0); ++dj) {
      double wt = di ? frac[0] : 1.0 - frac[0];
      if (d == 2) wt *= dj ? frac[1] : 1.0 - frac[1];
      if (wt == 0.0) continue;
      w[count++] = {f.node(base[0] + di, d == 2 ? base[1] + dj : 0), wt};
    }
  for (int a = 0; a < m; ++a) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int q = 0; q < count; ++q) s += w[q].second * f.coef.a(a, w[q].first, c);
      out.a(a, slot, c) = s;
    }
    for (int c = 0; c < 2; ++c) {
      double s = 0.0;
      for (int q = 0; q < count; ++q) s += w[q].second * f.coef.drift(a, w[q].first, c);
      out.drift(a, slot, c) = s;
    }
    for (int b = 0; b < m; ++b) {
      double sc = 0.0, ss = 0.0;
      for (int q = 0; q < count; ++q) {
        sc += w[q].second * f.coef.coupling(w[q].first, a, b);
        ss += w[q].second * f.coef.fission(w[q].first, a, b);
      }
      out.coupling(slot, a, b) = sc;
      out.fission(slot, a, b) = ss;
    }
  }
}

/// Flat binary dump: int32 d, int32 m, f64 L, f64 h, u64 seed, then the
/// node arrays A, b, c, sigma in the NodeCoefficients layout.
inline void write_field_dump(const CoefficientField& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path + " for writing");
  const std::int32_t d = f.d(), m = f.m();
  os.write(reinterpret_cast<const char*>(&d), sizeof d);
  os.write(reinterpret_cast<const char*>(&m), sizeof m);
  os.write(reinterpret_cast<const char*>(&f.L), sizeof f.L);
  os.write(reinterpret_cast<const char*>(&f.h), sizeof f.h);
  os.write(reinterpret_cast<const char*>(&f.seed), sizeof f.seed);
  for (const auto* arr : {&f.coef.A, &f.coef.b, &f.coef.c, &f.coef.sigma})
    os.write(reinterpret_cast<const char*>(arr->data()), static_cast<std::streamsize>(arr->size() * sizeof(double)));
  require(static_cast<bool>(os), ErrorKind::io, "write failed for " + path);
}

inline CoefficientField read_field_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path);
  std::int32_t d = 0, m = 0;
  CoefficientField f;
  is.read(reinterpret_cast<char*>(&d), sizeof d);
  is.read(reinterpret_cast<char*>(&m), sizeof m);
  is.read(reinterpret_cast<char*>(&f.L), sizeof f.L);
  is.read(reinterpret_cast<char*>(&f.h), sizeof f.h);
  is.read(reinterpret_cast<char*>(&f.seed), sizeof f.seed);
  require(static_cast<bool>(is) && (d == 1 || d == 2) && m >= 1 && m <= 8, ErrorKind::io, "corrupt header in " + path);
  f.spec.dimension = d;
  f.spec.groups = m;
  const int per_axis = detail::integer_ratio(f.L, f.h, "torus side L");
  f.n = {per_axis, d == 2 ? per_axis : 1};
  f.coef = NodeCoefficients(d, m, static_cast<std::size_t>(f.n[0]) * f.n[1]);
  for (auto* arr : {&f.coef.A, &f.coef.b, &f.coef.c, &f.coef.sigma})
    is.read(reinterpret_cast<char*>(arr->data()), static_cast<std::streamsize>(arr->size() * sizeof(double)));
  require(static_cast<bool>(is), ErrorKind::io, "truncated field dump " + path);
  return f;
}

}  // namespace effham
