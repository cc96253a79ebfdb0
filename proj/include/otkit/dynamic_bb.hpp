#pragma once

// Dynamic transport: displacement interpolation of static plans, and the
// Benamou-Brenier problem on a staggered space-time grid solved by
// Douglas-Rachford splitting.
//
// Coordinates are physical: time in [0, 1] with step 1/T, space [0, 1]^d with
// cell sizes 1/n1 (and 1/n2). The unknowns are stored per cell: a is the mass
// in a cell and J the momentum times the cell volume. The continuity equation
// is unchanged by this scaling and sum theta(a, J) * dt approximates W2^2, so
// gamma is expressed in mass units.

#include "otkit/core.hpp"

#include <fftw3.h>

#include <Eigen/SparseCore>
#include <map>
#include <mutex>
#include <thread>

namespace otkit {

// ---------------------------------------------------------------------------
// Displacement interpolation
// ---------------------------------------------------------------------------

/// Atoms (1-t) x_i + t y_j carrying P_ij > 0; coincident atoms are merged.
inline DiscreteMeasure mccann_interpolate(const TransportPlan& P, const DiscreteMeasure& alpha,
                                          const DiscreteMeasure& beta, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("mccann_interpolate: t must lie in [0, 1]");
  if (alpha.dim() != beta.dim()) throw InputError("mccann_interpolate: dimension mismatch");
  if (P.rows() != alpha.size() || P.cols() != beta.size()) throw InputError("mccann_interpolate: plan shape mismatch");
  if (P.matrix.minCoeff() < 0.0) throw InputError("mccann_interpolate: plan has negative entries");
  const MarginalResidual res = marginal_residual(P.matrix, alpha.weights().weights(), beta.weights().weights());
  if (res.total() > std::max(P.marginal_tolerance, kMarginalTolerance))
    throw InputError("mccann_interpolate: plan is not feasible for the given measures");

  std::vector<Eigen::RowVectorXd> pts;
  std::vector<double> mass;
  std::map<std::vector<double>, std::size_t> seen;
  for (Index i = 0; i < P.rows(); ++i)
    for (Index j = 0; j < P.cols(); ++j) {
      const double m = P(i, j);
      if (m <= 0.0) continue;
      Eigen::RowVectorXd z = (1.0 - t) * alpha.points().row(i) + t * beta.points().row(j);
      if (t == 0.0) z = alpha.points().row(i);
      if (t == 1.0) z = beta.points().row(j);
      std::vector<double> key(z.data(), z.data() + z.size());
      auto it = seen.find(key);
      if (it == seen.end()) {
        seen.emplace(std::move(key), pts.size());
        pts.push_back(z);
        mass.push_back(m);
      } else {
        mass[it->second] += m;
      }
    }
  Matrix X(static_cast<Index>(pts.size()), alpha.dim());
  Vector w(static_cast<Index>(pts.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    X.row(static_cast<Index>(k)) = pts[k];
    w[static_cast<Index>(k)] = mass[k];
  }
  return DiscreteMeasure(std::move(X), Histogram(w / w.sum()));
}

// ---------------------------------------------------------------------------
// theta and its proximal map
// ---------------------------------------------------------------------------

/// theta(a, b) = ||b||^2 / a for a > 0, 0 at (0, 0), +inf otherwise.
inline double theta(double a, double b_sq) {
  if (a > 0.0) return b_sq / a;
  if (a == 0.0 && b_sq == 0.0) return 0.0;
  return std::numeric_limits<double>::infinity();
}

namespace detail {

// Largest real root of x^3 + c2 x^2 + c1 x + c0.
inline double largest_real_root(double c2, double c1, double c0) {
  const double p = c1 - c2 * c2 / 3.0;
  const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
  const double shift = -c2 / 3.0;
  const double disc = q * q / 4.0 + p * p * p / 27.0;
  double y;
  if (disc > 0.0) {
    const double s = std::sqrt(disc);
    y = std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s);
  } else if (p == 0.0) {
    y = 0.0;
  } else {
    // Three real roots; k = 0 branch is the largest.
    const double r = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
    y = r * std::cos(std::acos(arg) / 3.0);
  }
  return y + shift;
}

}  // namespace detail

struct ThetaProx {
  double a;
  Eigen::Vector2d J;  // unused second component is zero in 1-D
};

/// argmin_{a', J'} 1/2 ((a - a')^2 + ||J - J'||^2) + gamma theta(a', J').
/// a' is the largest real root of (a' - a)(a' + 2 gamma)^2 - gamma ||J||^2 (Cardano,
/// then Newton); J' = a' J / (a' + 2 gamma); (0, 0) when that root is not positive.
inline ThetaProx theta_prox(double a, const Eigen::Vector2d& J, double gamma) {
  const double jj = J.squaredNorm();
  // (x - a)(x + 2g)^2 - g jj = x^3 + (4g - a) x^2 + (4g^2 - 4ag) x - (4 a g^2 + g jj)
  const double c2 = 4.0 * gamma - a;
  const double c1 = 4.0 * gamma * gamma - 4.0 * a * gamma;
  const double c0 = -(4.0 * a * gamma * gamma + gamma * jj);
  double x = detail::largest_real_root(c2, c1, c0);
  auto poly = [&](double z) { return (z - a) * (z + 2.0 * gamma) * (z + 2.0 * gamma) - gamma * jj; };
  for (int it = 0; it < 6; ++it) {
    const double d = (x + 2.0 * gamma) * (3.0 * x + 2.0 * gamma - 2.0 * a);
    if (d == 0.0) break;
    const double step = poly(x) / d;
    if (!std::isfinite(step)) break;
    x -= step;
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(x))) break;
  }
  if (!(x > 0.0)) return {0.0, Eigen::Vector2d::Zero()};
  return {x, x * J / (x + 2.0 * gamma)};
}

// ---------------------------------------------------------------------------
// Staggered grid
// ---------------------------------------------------------------------------

struct GridShape {
  Index T = 32;
  Index n1 = 1;
  Index n2 = 1;

  double dt() const { return 1.0 / static_cast<double>(T); }
  double h1() const { return 1.0 / static_cast<double>(n1); }
  double h2() const { return 1.0 / static_cast<double>(n2); }
  Index cells() const { return n1 * n2; }
};

/// a: (T+1) x n1 x n2, J1: T x (n1+1) x n2, J2: T x n1 x (n2+1), flattened row-major.
struct StaggeredField {
  GridShape shape;
  Vector a, J1, J2;

  StaggeredField() = default;
  explicit StaggeredField(GridShape s)
      : shape(s),
        a(Vector::Zero((s.T + 1) * s.n1 * s.n2)),
        J1(Vector::Zero(s.T * (s.n1 + 1) * s.n2)),
        J2(Vector::Zero(s.T * s.n1 * (s.n2 + 1))) {}

  Index ia(Index k, Index i, Index j) const { return (k * shape.n1 + i) * shape.n2 + j; }
  Index i1(Index k, Index i, Index j) const { return (k * (shape.n1 + 1) + i) * shape.n2 + j; }
  Index i2(Index k, Index i, Index j) const { return (k * shape.n1 + i) * (shape.n2 + 1) + j; }

  /// Slice k of a (mass per cell).
  Vector slice_mass(Index k) const { return a.segment(k * shape.cells(), shape.cells()); }
};

/// max |d_t a + div J| over space-time cells, plus any boundary flux or
/// endpoint mismatch.
inline double continuity_residual(const StaggeredField& F, const Vector& rho0, const Vector& rho1) {
  const GridShape& s = F.shape;
  double worst = 0.0;
  for (Index k = 0; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i)
      for (Index j = 0; j < s.n2; ++j) {
        const double r = (F.a[F.ia(k + 1, i, j)] - F.a[F.ia(k, i, j)]) / s.dt() +
                         (F.J1[F.i1(k, i + 1, j)] - F.J1[F.i1(k, i, j)]) / s.h1() +
                         (F.J2[F.i2(k, i, j + 1)] - F.J2[F.i2(k, i, j)]) / s.h2();
        worst = std::max(worst, std::abs(r));
      }
  for (Index k = 0; k < s.T; ++k) {
    for (Index j = 0; j < s.n2; ++j)
      worst = std::max({worst, std::abs(F.J1[F.i1(k, 0, j)]), std::abs(F.J1[F.i1(k, s.n1, j)])});
    for (Index i = 0; i < s.n1; ++i)
      worst = std::max({worst, std::abs(F.J2[F.i2(k, i, 0)]), std::abs(F.J2[F.i2(k, i, s.n2)])});
  }
  const Index c = s.cells();
  worst = std::max(worst, (F.a.head(c) - rho0).cwiseAbs().maxCoeff());
  worst = std::max(worst, (F.a.tail(c) - rho1).cwiseAbs().maxCoeff());
  return worst;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Residual of the continuity equation with endpoints and no-flux boundary
// imposed, on the T x n1 x n2 cell grid.
inline Vector continuity_rhs(const StaggeredField& F, const Vector& rho0, const Vector& rho1) {
  const GridShape& s = F.shape;
  Vector r(s.T * s.cells());
  const Index c = s.cells();
  for (Index k = 0; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i)
      for (Index j = 0; j < s.n2; ++j) {
        const Index cell = i * s.n2 + j;
        const double ak = k == 0 ? rho0[cell] : F.a[F.ia(k, i, j)];
        const double ak1 = k + 1 == s.T ? rho1[cell] : F.a[F.ia(k + 1, i, j)];
        const double jl = i == 0 ? 0.0 : F.J1[F.i1(k, i, j)];
        const double jr = i + 1 == s.n1 ? 0.0 : F.J1[F.i1(k, i + 1, j)];
        const double jd = j == 0 ? 0.0 : F.J2[F.i2(k, i, j)];
        const double ju = j + 1 == s.n2 ? 0.0 : F.J2[F.i2(k, i, j + 1)];
        r[k * c + cell] = (ak1 - ak) / s.dt() + (jr - jl) / s.h1() + (ju - jd) / s.h2();
      }
  return r;
}

// x <- x - A' y on the free variables, endpoints and boundary faces set.
inline void apply_correction(StaggeredField& F, const Vector& y, const Vector& rho0, const Vector& rho1) {
  const GridShape& s = F.shape;
  const Index c = s.cells();
  auto Y = [&](Index k, Index i, Index j) { return y[k * c + i * s.n2 + j]; };
  F.a.head(c) = rho0;
  F.a.tail(c) = rho1;
  for (Index k = 1; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i)
      for (Index j = 0; j < s.n2; ++j) F.a[F.ia(k, i, j)] -= (Y(k - 1, i, j) - Y(k, i, j)) / s.dt();
  for (Index k = 0; k < s.T; ++k) {
    for (Index j = 0; j < s.n2; ++j) {
      F.J1[F.i1(k, 0, j)] = 0.0;
      F.J1[F.i1(k, s.n1, j)] = 0.0;
      for (Index i = 1; i < s.n1; ++i) F.J1[F.i1(k, i, j)] -= (Y(k, i - 1, j) - Y(k, i, j)) / s.h1();
    }
    for (Index i = 0; i < s.n1; ++i) {
      F.J2[F.i2(k, i, 0)] = 0.0;
      F.J2[F.i2(k, i, s.n2)] = 0.0;
      for (Index j = 1; j < s.n2; ++j) F.J2[F.i2(k, i, j)] -= (Y(k, i, j - 1) - Y(k, i, j)) / s.h2();
    }
  }
}

/// Solves (A A') y = r with A A' = L_T / dt^2 + L_n1 / h1^2 + L_n2 / h2^2
/// (Neumann Laplacians), diagonal in the DCT-II basis; the constant mode is dropped.
class PoissonSolver {
 public:
  explicit PoissonSolver(const GridShape& s) : s_(s), buf_(static_cast<std::size_t>(s.T * s.cells())) {
    const int dims[3] = {static_cast<int>(s.T), static_cast<int>(s.n1), static_cast<int>(s.n2)};
    const fftw_r2r_kind fwd[3] = {FFTW_REDFT10, FFTW_REDFT10, FFTW_REDFT10};
    const fftw_r2r_kind bwd[3] = {FFTW_REDFT01, FFTW_REDFT01, FFTW_REDFT01};
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    forward_ = fftw_plan_r2r(3, dims, buf_.data(), buf_.data(), fwd, FFTW_ESTIMATE);
    backward_ = fftw_plan_r2r(3, dims, buf_.data(), buf_.data(), bwd, FFTW_ESTIMATE);
    eig_.resize(static_cast<Index>(buf_.size()));
    const double pi = 3.14159265358979323846;
    auto lap = [&](Index k, Index n) { return 2.0 - 2.0 * std::cos(pi * static_cast<double>(k) / static_cast<double>(n)); };
    for (Index k = 0; k < s.T; ++k)
      for (Index i = 0; i < s.n1; ++i)
        for (Index j = 0; j < s.n2; ++j)
          eig_[(k * s.n1 + i) * s.n2 + j] = lap(k, s.T) / (s.dt() * s.dt()) + lap(i, s.n1) / (s.h1() * s.h1()) +
                                             lap(j, s.n2) / (s.h2() * s.h2());
  }
  PoissonSolver(const PoissonSolver&) = delete;
  PoissonSolver& operator=(const PoissonSolver&) = delete;
  ~PoissonSolver() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  Vector solve(const Vector& r) {
    std::copy(r.data(), r.data() + r.size(), buf_.begin());
    fftw_execute(forward_);
    for (std::size_t k = 0; k < buf_.size(); ++k) {
      const double e = eig_[static_cast<Index>(k)];
      buf_[k] = k == 0 ? 0.0 : buf_[k] / e;
    }
    fftw_execute(backward_);
    const double norm = 8.0 * static_cast<double>(s_.T * s_.n1 * s_.n2);
    Vector y(r.size());
    for (Index k = 0; k < y.size(); ++k) y[k] = buf_[static_cast<std::size_t>(k)] / norm;
    return y;
  }

 private:
  GridShape s_;
  std::vector<double> buf_;
  Vector eig_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace detail

/// Orthogonal projection onto {d_t a + div J = 0, a_0 = rho0, a_T = rho1, no flux}
/// (rho0, rho1 are masses on the n1 x n2 cells).
inline StaggeredField continuity_projection(const StaggeredField& F, const Vector& rho0, const Vector& rho1) {
  const GridShape& s = F.shape;
  if (rho0.size() != s.cells() || rho1.size() != s.cells())
    throw InputError("continuity_projection: endpoint size mismatch");
  detail::PoissonSolver solver(s);
  StaggeredField out = F;
  detail::apply_correction(out, solver.solve(detail::continuity_rhs(F, rho0, rho1)), rho0, rho1);
  return out;
}

/// Sparse constraint operator A acting on (a_1..a_{T-1}, interior J1 faces,
/// interior J2 faces); used as the reference for the fast projection.
inline Eigen::SparseMatrix<double> continuity_operator(const GridShape& s) {
  const Index c = s.cells();
  const Index na = (s.T - 1) * c;
  const Index nj1 = s.T * (s.n1 - 1) * s.n2;
  const Index nj2 = s.T * s.n1 * (s.n2 - 1);
  std::vector<Eigen::Triplet<double>> trip;
  auto row = [&](Index k, Index i, Index j) { return k * c + i * s.n2 + j; };
  for (Index k = 1; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i)
      for (Index j = 0; j < s.n2; ++j) {
        const Index col = (k - 1) * c + i * s.n2 + j;
        trip.emplace_back(row(k - 1, i, j), col, 1.0 / s.dt());
        trip.emplace_back(row(k, i, j), col, -1.0 / s.dt());
      }
  for (Index k = 0; k < s.T; ++k)
    for (Index i = 1; i < s.n1; ++i)
      for (Index j = 0; j < s.n2; ++j) {
        const Index col = na + (k * (s.n1 - 1) + (i - 1)) * s.n2 + j;
        trip.emplace_back(row(k, i - 1, j), col, 1.0 / s.h1());
        trip.emplace_back(row(k, i, j), col, -1.0 / s.h1());
      }
  for (Index k = 0; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i)
      for (Index j = 1; j < s.n2; ++j) {
        const Index col = na + nj1 + (k * s.n1 + i) * (s.n2 - 1) + (j - 1);
        trip.emplace_back(row(k, i, j - 1), col, 1.0 / s.h2());
        trip.emplace_back(row(k, i, j), col, -1.0 / s.h2());
      }
  Eigen::SparseMatrix<double> A(s.T * c, na + nj1 + nj2);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

/// Same projection through a dense least-squares solve of A A' y = r (small grids only).
inline StaggeredField continuity_projection_reference(const StaggeredField& F, const Vector& rho0,
                                                      const Vector& rho1) {
  const Matrix A = Matrix(continuity_operator(F.shape));
  const Matrix AAt = A * A.transpose();
  const Vector y = AAt.completeOrthogonalDecomposition().solve(detail::continuity_rhs(F, rho0, rho1));
  StaggeredField out = F;
  detail::apply_correction(out, y, rho0, rho1);
  return out;
}

// ---------------------------------------------------------------------------
// Douglas-Rachford
// ---------------------------------------------------------------------------

struct BenamouBrenierOptions {
  Index T = 32;
  long iterations = 1000;
  double gamma = 1.0 / 50.0;
  double relaxation = 1.8;  // in (0, 2)
  int threads = 1;
  bool record_trace = true;
};

struct BenamouBrenierResult {
  double value = 0.0;          // W2^2 estimate
  StaggeredField field;        // feasible staggered (a, J), per-cell units
  std::vector<double> trace;   // objective per iteration
};

namespace detail {

// Centered (cell-and-time-midpoint) variables.
struct CenteredField {
  Vector a, J1, J2;  // each T x n1 x n2
};

struct DRState {
  StaggeredField s;
  CenteredField c;
};

inline CenteredField interpolate(const StaggeredField& F) {
  const GridShape& s = F.shape;
  const Index N = s.T * s.cells();
  CenteredField c{Vector(N), Vector(N), Vector(N)};
  for (Index k = 0; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i)
      for (Index j = 0; j < s.n2; ++j) {
        const Index p = (k * s.n1 + i) * s.n2 + j;
        c.a[p] = 0.5 * (F.a[F.ia(k, i, j)] + F.a[F.ia(k + 1, i, j)]);
        c.J1[p] = 0.5 * (F.J1[F.i1(k, i, j)] + F.J1[F.i1(k, i + 1, j)]);
        c.J2[p] = 0.5 * (F.J2[F.i2(k, i, j)] + F.J2[F.i2(k, i, j + 1)]);
      }
  return c;
}

// Solves (Id + I'I) x = rhs along one line of L+1 staggered values
// (I averages neighbours): tridiagonal with diag 5/4 at the ends, 3/2 inside, off 1/4.
inline void solve_line(std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n == 1) {
    x[0] /= 1.0;
    return;
  }
  std::vector<double> cp(n), dp(n);
  auto diag = [&](std::size_t k) { return (k == 0 || k + 1 == n) ? 1.25 : 1.5; };
  const double off = 0.25;
  cp[0] = off / diag(0);
  dp[0] = x[0] / diag(0);
  for (std::size_t k = 1; k < n; ++k) {
    const double m = diag(k) - off * cp[k - 1];
    cp[k] = off / m;
    dp[k] = (x[k] - off * dp[k - 1]) / m;
  }
  x[n - 1] = dp[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) x[k] = dp[k] - cp[k] * x[k + 1];
}

// Projection onto the graph {c = I s}.
inline DRState prox_graph(const DRState& w) {
  const GridShape& s = w.s.shape;
  DRState out{StaggeredField(s), {}};
  std::vector<double> line;
  auto idx_c = [&](Index k, Index i, Index j) { return (k * s.n1 + i) * s.n2 + j; };
  // time lines for a
  line.resize(static_cast<std::size_t>(s.T + 1));
  for (Index i = 0; i < s.n1; ++i)
    for (Index j = 0; j < s.n2; ++j) {
      for (Index k = 0; k <= s.T; ++k) {
        double v = w.s.a[w.s.ia(k, i, j)];
        if (k > 0) v += 0.5 * w.c.a[idx_c(k - 1, i, j)];
        if (k < s.T) v += 0.5 * w.c.a[idx_c(k, i, j)];
        line[static_cast<std::size_t>(k)] = v;
      }
      solve_line(line);
      for (Index k = 0; k <= s.T; ++k) out.s.a[out.s.ia(k, i, j)] = line[static_cast<std::size_t>(k)];
    }
  // x lines for J1
  line.resize(static_cast<std::size_t>(s.n1 + 1));
  for (Index k = 0; k < s.T; ++k)
    for (Index j = 0; j < s.n2; ++j) {
      for (Index i = 0; i <= s.n1; ++i) {
        double v = w.s.J1[w.s.i1(k, i, j)];
        if (i > 0) v += 0.5 * w.c.J1[idx_c(k, i - 1, j)];
        if (i < s.n1) v += 0.5 * w.c.J1[idx_c(k, i, j)];
        line[static_cast<std::size_t>(i)] = v;
      }
      solve_line(line);
      for (Index i = 0; i <= s.n1; ++i) out.s.J1[out.s.i1(k, i, j)] = line[static_cast<std::size_t>(i)];
    }
  // y lines for J2
  line.resize(static_cast<std::size_t>(s.n2 + 1));
  for (Index k = 0; k < s.T; ++k)
    for (Index i = 0; i < s.n1; ++i) {
      for (Index j = 0; j <= s.n2; ++j) {
        double v = w.s.J2[w.s.i2(k, i, j)];
        if (j > 0) v += 0.5 * w.c.J2[idx_c(k, i, j - 1)];
        if (j < s.n2) v += 0.5 * w.c.J2[idx_c(k, i, j)];
        line[static_cast<std::size_t>(j)] = v;
      }
      solve_line(line);
      for (Index j = 0; j <= s.n2; ++j) out.s.J2[out.s.i2(k, i, j)] = line[static_cast<std::size_t>(j)];
    }
  out.c = interpolate(out.s);
  return out;
}

template <class Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 1024) {
    for (Index p = 0; p < n; ++p) fn(p);
    return;
  }
  std::vector<std::thread> pool;
  const Index chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const Index lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (Index p = lo; p < hi; ++p) fn(p);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// W2^2 between two grid histograms (mass per cell, same n1 x n2 grid) by
/// Douglas-Rachford on theta(I a, I J) + indicator(continuity).
/// `n2 = 1` gives the 1-D problem.
inline BenamouBrenierResult benamou_brenier(const Vector& alpha0, const Vector& alpha1, Index n1, Index n2,
                                            const BenamouBrenierOptions& opt = {}) {
  if (alpha0.size() != n1 * n2 || alpha1.size() != n1 * n2) throw InputError("benamou_brenier: grid size mismatch");
  if (alpha0.minCoeff() < 0.0 || alpha1.minCoeff() < 0.0) throw InputError("benamou_brenier: negative mass");
  if (std::abs(alpha0.sum() - 1.0) > kProbabilityTolerance || std::abs(alpha1.sum() - 1.0) > kProbabilityTolerance)
    throw InputError("benamou_brenier: inputs must have unit mass");
  if (!(opt.relaxation > 0.0 && opt.relaxation < 2.0)) throw InputError("benamou_brenier: relaxation must lie in (0, 2)");
  if (!(opt.gamma > 0.0) || opt.T < 1) throw InputError("benamou_brenier: gamma and T must be positive");

  const GridShape s{opt.T, n1, n2};
  const Vector& rho0 = alpha0;
  const Vector& rho1 = alpha1;
  const Index N = s.T * s.cells();
  detail::PoissonSolver poisson(s);

  auto prox_F = [&](const detail::DRState& z) {
    detail::DRState y{z.s, {Vector(N), Vector(N), Vector(N)}};
    detail::apply_correction(y.s, poisson.solve(detail::continuity_rhs(z.s, rho0, rho1)), rho0, rho1);
    detail::parallel_for(N, opt.threads, [&](Index p) {
      const ThetaProx t = theta_prox(z.c.a[p], Eigen::Vector2d(z.c.J1[p], z.c.J2[p]), opt.gamma);
      y.c.a[p] = t.a;
      y.c.J1[p] = t.J[0];
      y.c.J2[p] = t.J[1];
    });
    return y;
  };
  auto objective = [&](const detail::CenteredField& c) {
    double acc = 0.0;
    for (Index p = 0; p < N; ++p) acc += theta(c.a[p], c.J1[p] * c.J1[p] + c.J2[p] * c.J2[p]);
    return acc * s.dt();
  };

  // Start from the linear-in-time interpolation with zero momentum.
  detail::DRState w{StaggeredField(s), {}};
  for (Index k = 0; k <= s.T; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(s.T);
    w.s.a.segment(k * s.cells(), s.cells()) = (1.0 - t) * rho0 + t * rho1;
  }
  w.c = detail::interpolate(w.s);
  detail::DRState x = detail::prox_graph(w);
  BenamouBrenierResult res;
  detail::DRState y;
  const double alpha = opt.relaxation;
  for (long it = 0; it < opt.iterations; ++it) {
    detail::DRState z{x.s, x.c};
    z.s.a = 2.0 * x.s.a - w.s.a;
    z.s.J1 = 2.0 * x.s.J1 - w.s.J1;
    z.s.J2 = 2.0 * x.s.J2 - w.s.J2;
    z.c.a = 2.0 * x.c.a - w.c.a;
    z.c.J1 = 2.0 * x.c.J1 - w.c.J1;
    z.c.J2 = 2.0 * x.c.J2 - w.c.J2;
    y = prox_F(z);
    w.s.a += alpha * (y.s.a - x.s.a);
    w.s.J1 += alpha * (y.s.J1 - x.s.J1);
    w.s.J2 += alpha * (y.s.J2 - x.s.J2);
    w.c.a += alpha * (y.c.a - x.c.a);
    w.c.J1 += alpha * (y.c.J1 - x.c.J1);
    w.c.J2 += alpha * (y.c.J2 - x.c.J2);
    x = detail::prox_graph(w);
    const double obj = objective(y.c);
    if (!std::isfinite(obj)) throw ConvergenceError("benamou_brenier: objective diverged");
    if (opt.record_trace) res.trace.push_back(obj);
  }
  if (opt.iterations > 0) {
    res.value = objective(y.c);
    res.field = y.s;
  } else {
    res.field = continuity_projection(x.s, rho0, rho1);
    res.value = objective(detail::interpolate(res.field));
  }
  return res;
}

}  // namespace otkit
