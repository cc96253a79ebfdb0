#pragma once

// Discrepancies beside (and around) OT: phi-divergences, kernel norms,
// sliced Wasserstein, debiased entropic costs, and entropic Gromov-Wasserstein.

#include "otkit/closed_form.hpp"
#include "otkit/entropic.hpp"
#include "otkit/exact_lp.hpp"

#include <numeric>
#include <random>

namespace otkit {

// ---------------------------------------------------------------------------
// phi-divergences
// ---------------------------------------------------------------------------

struct EntropyFunction {
  enum class Kind { kl, tv, hellinger, chi2, js };
  Kind kind = Kind::kl;

  static EntropyFunction kl() { return {Kind::kl}; }
  static EntropyFunction tv() { return {Kind::tv}; }
  static EntropyFunction hellinger() { return {Kind::hellinger}; }
  static EntropyFunction chi2() { return {Kind::chi2}; }
  static EntropyFunction js() { return {Kind::js}; }

  /// phi(s) for s >= 0, normalized so that phi(1) = 0.
  double operator()(double s) const {
    if (s < 0.0) return std::numeric_limits<double>::infinity();
    switch (kind) {
      case Kind::kl: return s > 0.0 ? s * std::log(s) - s + 1.0 : 1.0;
      case Kind::tv: return std::abs(s - 1.0);
      case Kind::hellinger: return (std::sqrt(s) - 1.0) * (std::sqrt(s) - 1.0);
      case Kind::chi2: return (s - 1.0) * (s - 1.0);
      case Kind::js: {
        const double xlx = s > 0.0 ? s * std::log(s) : 0.0;
        return 0.5 * (xlx - (s + 1.0) * std::log((s + 1.0) / 2.0));
      }
    }
    return 0.0;
  }

  /// Recession slope lim phi(s) / s.
  double recession() const {
    switch (kind) {
      case Kind::kl:
      case Kind::chi2: return std::numeric_limits<double>::infinity();
      case Kind::tv:
      case Kind::hellinger: return 1.0;
      case Kind::js: return 0.5 * std::log(2.0);
    }
    return 0.0;
  }
};

namespace detail {

inline double phi_sum(const EntropyFunction& phi, const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (Index j = 0; j < a.size(); ++j) {
    if (b[j] > 0.0) {
      acc += phi(a[j] / b[j]) * b[j];
    } else if (a[j] > 0.0) {
      const double slope = phi.recession();
      if (std::isinf(slope)) return slope;
      acc += slope * a[j];
    }
  }
  return acc;
}

}  // namespace detail

/// D_phi(a|b) = sum_{b>0} phi(a/b) b + phi'_inf sum_{b=0} a. May be +inf.
/// Jensen-Shannon is evaluated as (KL(a|m) + KL(b|m)) / 2 with m the midpoint.
inline double phi_divergence(const EntropyFunction& phi, const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw InputError("phi_divergence: size mismatch");
  if (a.minCoeff() < 0.0 || b.minCoeff() < 0.0) throw InputError("phi_divergence: entries must be >= 0");
  if (phi.kind == EntropyFunction::Kind::js) {
    const Vector mid = 0.5 * (a + b);
    return 0.5 * (detail::phi_sum(EntropyFunction::kl(), a, mid) + detail::phi_sum(EntropyFunction::kl(), b, mid));
  }
  return detail::phi_sum(phi, a, b);
}

inline double phi_divergence(const EntropyFunction& phi, const Histogram& a, const Histogram& b) {
  return phi_divergence(phi, a.weights(), b.weights());
}

// ---------------------------------------------------------------------------
// Kernel norms
// ---------------------------------------------------------------------------

struct Kernel {
  enum class Kind { gaussian, energy };
  Kind kind = Kind::gaussian;
  double parameter = 1.0;  // sigma for gaussian, p for energy

  static Kernel gaussian(double sigma) {
    if (!(sigma > 0.0)) throw InputError("gaussian kernel: sigma must be positive");
    return {Kind::gaussian, sigma};
  }
  /// k(x, y) = -||x - y||^p, valid for 0 < p < 2.
  static Kernel energy(double p) {
    if (!(p > 0.0 && p < 2.0)) throw InputError("energy kernel: p must lie in (0, 2)");
    return {Kind::energy, p};
  }

  double operator()(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) const {
    const double sq = (x - y).squaredNorm();
    if (kind == Kind::gaussian) return std::exp(-sq / (2.0 * parameter * parameter));
    return -std::pow(std::sqrt(sq), parameter);
  }

  Matrix gram(const Matrix& x, const Matrix& y) const {
    Matrix G(x.rows(), y.rows());
    for (Index j = 0; j < y.rows(); ++j)
      for (Index i = 0; i < x.rows(); ++i) G(i, j) = (*this)(x.row(i), y.row(j));
    return G;
  }
};

/// Biased MMD^2 = a'K_xx a + b'K_yy b - 2 a'K_xy b.
inline double mmd_squared(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const Kernel& k) {
  if (alpha.dim() != beta.dim()) throw InputError("mmd_squared: dimension mismatch");
  const Vector& a = alpha.weights().weights();
  const Vector& b = beta.weights().weights();
  const Matrix& x = alpha.points();
  const Matrix& y = beta.points();
  return a.dot(k.gram(x, x) * a) + b.dot(k.gram(y, y) * b) - 2.0 * a.dot(k.gram(x, y) * b);
}

/// Unbiased estimator from samples (rows), self-pairs excluded.
inline double mmd_unbiased(const Matrix& x, const Matrix& y, const Kernel& k) {
  const Index n = x.rows(), m = y.rows();
  if (n < 2 || m < 2) throw InputError("mmd_unbiased: need at least two samples per side");
  if (x.cols() != y.cols()) throw InputError("mmd_unbiased: dimension mismatch");
  const Matrix Kxx = k.gram(x, x), Kyy = k.gram(y, y);
  const double sxx = Kxx.sum() - Kxx.trace();
  const double syy = Kyy.sum() - Kyy.trace();
  const double nd = static_cast<double>(n), md = static_cast<double>(m);
  return sxx / (nd * (nd - 1.0)) + syy / (md * (md - 1.0)) - 2.0 * k.gram(x, y).sum() / (nd * md);
}

// ---------------------------------------------------------------------------
// Sliced Wasserstein
// ---------------------------------------------------------------------------

/// L directions uniform on the unit sphere of R^d (normalized Gaussian draws).
inline Matrix sphere_directions(Index d, Index L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix dirs(L, d);
  for (Index l = 0; l < L; ++l) {
    double norm = 0.0;
    do {
      for (Index k = 0; k < d; ++k) dirs(l, k) = normal(rng);
      norm = dirs.row(l).norm();
    } while (norm < 1e-12);
    dirs.row(l) /= norm;
  }
  return dirs;
}

/// mean over the rows theta of W_p^p(theta # alpha, theta # beta).
inline double sliced_energy(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, const Matrix& directions,
                            double p = 2.0) {
  if (alpha.dim() != beta.dim() || directions.cols() != alpha.dim())
    throw InputError("sliced_w: dimension mismatch");
  double acc = 0.0;
  for (Index l = 0; l < directions.rows(); ++l) {
    const Vector theta = directions.row(l).transpose();
    const DiscreteMeasure pa = DiscreteMeasure::on_line(alpha.points() * theta, alpha.weights());
    const DiscreteMeasure pb = DiscreteMeasure::on_line(beta.points() * theta, beta.weights());
    acc += std::pow(w_p_1d(pa, pb, p), p);
  }
  return acc / static_cast<double>(directions.rows());
}

/// Monte Carlo sliced W_p with `L` seeded directions (L = 0: 64 d).
inline double sliced_w(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, double p = 2.0, Index L = 0,
                       std::uint64_t seed = 0) {
  if (alpha.dim() != beta.dim()) throw InputError("sliced_w: dimension mismatch");
  if (L <= 0) L = 64 * alpha.dim();
  return std::pow(sliced_energy(alpha, beta, sphere_directions(alpha.dim(), L, seed), p), 1.0 / p);
}

/// Gradient in x of the sliced energy mean_theta W_2^2(theta # x, theta # y)
/// for uniform clouds with the same number of points.
inline Matrix sliced_w_gradient(const Matrix& x, const Matrix& y, const Matrix& directions) {
  if (x.rows() != y.rows() || x.cols() != y.cols() || directions.cols() != x.cols())
    throw InputError("sliced_w_gradient: shape mismatch");
  const Index n = x.rows();
  Matrix grad = Matrix::Zero(n, x.cols());
  std::vector<Index> ox(static_cast<std::size_t>(n)), oy(static_cast<std::size_t>(n));
  for (Index l = 0; l < directions.rows(); ++l) {
    const Vector theta = directions.row(l).transpose();
    const Vector px = x * theta, py = y * theta;
    std::iota(ox.begin(), ox.end(), Index{0});
    std::iota(oy.begin(), oy.end(), Index{0});
    std::stable_sort(ox.begin(), ox.end(), [&](Index p, Index q) { return px[p] < px[q]; });
    std::stable_sort(oy.begin(), oy.end(), [&](Index p, Index q) { return py[p] < py[q]; });
    for (std::size_t k = 0; k < ox.size(); ++k) {
      const Index i = ox[k];
      grad.row(i) += (px[i] - py[oy[k]]) * theta.transpose();
    }
  }
  return grad * (2.0 / (static_cast<double>(n) * static_cast<double>(directions.rows())));
}

/// Seeded overload: directions drawn as in sliced_w.
inline Matrix sliced_w_gradient(const Matrix& x, const Matrix& y, Index L, std::uint64_t seed) {
  if (L <= 0) L = 64 * x.cols();
  return sliced_w_gradient(x, y, sphere_directions(x.cols(), L, seed));
}

// ---------------------------------------------------------------------------
// Debiased entropic cost
// ---------------------------------------------------------------------------

/// 2 W(a,b) - W(a,a) - W(b,b) with W(.,.) = <P_eps, C> for C = ||x - y||^p.
inline double corrected_sinkhorn_divergence(const DiscreteMeasure& alpha, const DiscreteMeasure& beta,
                                            double epsilon, double p = 2.0, const SinkhornOptions& opt = {}) {
  auto w = [&](const DiscreteMeasure& s, const DiscreteMeasure& t) {
    const CostMatrix C = build_cost(s, t, p);
    return solve_entropic(s.weights().weights(), t.weights().weights(), C, epsilon, opt).report.primal;
  };
  return 2.0 * w(alpha, beta) - w(alpha, alpha) - w(beta, beta);
}

// ---------------------------------------------------------------------------
// Non-Hilbertianity of W_p in 2-D
// ---------------------------------------------------------------------------

/// The 35 histograms on {(0,0),(1,0),(0,1),(1,1)} with entries in {0, 1/4, ..., 1}.
inline std::vector<Vector> quarter_grid_histograms() {
  std::vector<Vector> out;
  for (int i = 0; i <= 4; ++i)
    for (int j = 0; i + j <= 4; ++j)
      for (int k = 0; i + j + k <= 4; ++k) {
        Vector h(4);
        h << i / 4.0, j / 4.0, k / 4.0, (4 - i - j - k) / 4.0;
        out.push_back(h);
      }
  return out;
}

inline Matrix unit_square_corners() {
  Matrix x(4, 2);
  x << 0, 0, 1, 0, 0, 1, 1, 1;
  return x;
}

/// Largest eigenvalue of J D^2 J, J = I - 11'/n, for a pairwise distance matrix D.
inline double centered_max_eigenvalue(const Matrix& D) {
  const Index n = D.rows();
  const Matrix J = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  Matrix M = J * D.cwiseProduct(D) * J;
  M = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// max eigenvalue of J D_p^2 J over the 35 quarter-grid histograms, D_p = exact W_p.
/// Positive means W_p^2 is not negative definite.
inline double hilbertianity_counterexample(double p) {
  const auto hists = quarter_grid_histograms();
  const Matrix x = unit_square_corners();
  Matrix C(4, 4);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) C(i, j) = std::pow((x.row(i) - x.row(j)).norm(), p);
  const CostMatrix cost(C, {"euclidean_power", p});
  const auto n = static_cast<Index>(hists.size());
  Matrix D = Matrix::Zero(n, n);
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t) {
      const double v = network_simplex(hists[static_cast<std::size_t>(s)], hists[static_cast<std::size_t>(t)], cost).value;
      D(s, t) = D(t, s) = std::pow(std::max(v, 0.0), 1.0 / p);
    }
  return centered_max_eigenvalue(D);
}

/// Same construction with the sliced W_2 over a fixed direction set.
inline double hilbertianity_sliced(Index L = 128, std::uint64_t seed = 0) {
  const auto hists = quarter_grid_histograms();
  const Matrix x = unit_square_corners();
  const Matrix dirs = sphere_directions(2, L, seed);
  const auto n = static_cast<Index>(hists.size());
  std::vector<DiscreteMeasure> measures;
  for (const Vector& h : hists) measures.push_back(DiscreteMeasure::dropping_zeros(x, Histogram(h)));
  Matrix D = Matrix::Zero(n, n);
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t)
      D(s, t) = D(t, s) = std::sqrt(sliced_energy(measures[static_cast<std::size_t>(s)],
                                                  measures[static_cast<std::size_t>(t)], dirs, 2.0));
  return centered_max_eigenvalue(D);
}

// ---------------------------------------------------------------------------
// Entropic Gromov-Wasserstein
// ---------------------------------------------------------------------------

struct MetricMeasureSpace {
  Matrix D;
  Vector a;

  MetricMeasureSpace() = default;
  MetricMeasureSpace(Matrix dist, Vector weights) : D(std::move(dist)), a(std::move(weights)) {
    if (D.rows() != D.cols() || D.rows() != a.size()) throw InputError("metric measure space: shape mismatch");
    if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw InputError("metric measure space: D must be symmetric");
    if (D.diagonal().cwiseAbs().maxCoeff() > 1e-12) throw InputError("metric measure space: D needs zero diagonal");
    if (D.minCoeff() < 0.0) throw InputError("metric measure space: D must be nonnegative");
    (void)Histogram(a);
  }

  /// Euclidean distances between the rows of `points`, uniform weights.
  static MetricMeasureSpace from_points(const Matrix& points) {
    const Index n = points.rows();
    Matrix D = squared_distances(points, points).cwiseMax(0.0).cwiseSqrt();
    D = 0.5 * (D + D.transpose());
    D.diagonal().setZero();
    return {D, Vector::Constant(n, 1.0 / static_cast<double>(n))};
  }
};

/// E(P) = sum |D_ii' - D'_jj'|^2 P_ij P_i'j'.
inline double gw_energy(const Matrix& D, const Matrix& D2, const Matrix& P) {
  const Vector a = P.rowwise().sum(), b = P.colwise().sum().transpose();
  const double t1 = a.dot(D.cwiseProduct(D) * a);
  const double t2 = b.dot(D2.cwiseProduct(D2) * b);
  return t1 + t2 - 2.0 * (D * P * D2).cwiseProduct(P).sum();
}

struct GromovOptions {
  long outer_iters = 500;
  double tol = 1e-12;          // stop when the energy decrease falls below tol
  bool anneal = true;          // geometric epsilon schedule from the cost scale down to epsilon
  long steps_per_level = 10;   // outer steps at each annealing level
  double anneal_factor = 0.5;  // epsilon <- factor * epsilon between levels
  long anneal_inner_iters = 5000;  // inexact Sinkhorn while annealing
  SinkhornOptions inner{1e-11, 0, false};
};

struct GromovResult {
  double energy = 0.0;
  TransportPlan plan;
  std::vector<double> energy_trace;  // one entry per accepted outer step
  long outer_iterations = 0;
};

/// Mirror descent: P <- Sinkhorn(C(P), eps) with C(P) = -D P D', started at a b'.
/// A step whose energy goes up is damped towards the current plan (halving the step).
/// With annealing, epsilon starts at max|D| max|D'| and is halved once a level
/// stalls (relative decrease below 1e-3) or after `steps_per_level` steps; the
/// Sinkhorn solves are capped at `anneal_inner_iters` until the target is reached.
inline GromovResult entropic_gw(const MetricMeasureSpace& X, const MetricMeasureSpace& Y, double epsilon,
                                const GromovOptions& opt = {}) {
  if (!(epsilon > 0.0)) throw InputError("entropic_gw: epsilon must be positive");
  const Vector& a = X.a;
  const Vector& b = Y.a;
  Matrix P = a * b.transpose();
  GromovResult res;
  double energy = gw_energy(X.D, Y.D, P);
  res.energy_trace.push_back(energy);
  const double scale = std::max(X.D.cwiseAbs().maxCoeff() * Y.D.cwiseAbs().maxCoeff(), 1e-300);
  double eps_now = opt.anneal ? std::max(epsilon, scale) : epsilon;
  long level_steps = 0;
  std::optional<DualPair> warm;
  for (long it = 0; it < opt.outer_iters; ++it) {
    res.outer_iterations = it + 1;
    const bool final_level = eps_now <= epsilon;
    SinkhornOptions inner = opt.inner;
    if (!final_level) inner.max_iter = opt.anneal_inner_iters;
    const Matrix cost = -X.D * P * Y.D;
    const Matrix log_prev = P.array().max(1e-300).log().matrix();
    double step = 1.0;
    bool accepted = false;
    Matrix P_new;
    double e_new = energy;
    for (int halving = 0; halving < 20; ++halving) {
      // step < 1: Gibbs kernel K^step P^(1 - step), i.e. a KL-damped step.
      Matrix c = step * cost;
      if (step < 1.0) c -= (1.0 - step) * eps_now * log_prev;
      c.array() -= c.minCoeff();
      const SinkhornResult s = sinkhorn_log(a, b, CostMatrix(c, {"gw_linearized", 1.0}), eps_now, inner, warm);
      P_new = s.plan.matrix;
      e_new = gw_energy(X.D, Y.D, P_new);
      if (e_new <= energy + 1e-14 * (1.0 + std::abs(energy))) {
        warm = s.duals;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    const double decrease = accepted ? energy - e_new : 0.0;
    if (accepted) {
      P = P_new;
      energy = e_new;
      res.energy_trace.push_back(energy);
    }
    if (!final_level) {
      ++level_steps;
      if (!accepted || decrease < 1e-3 * std::abs(energy) || level_steps >= opt.steps_per_level) {
        eps_now = std::max(epsilon, opt.anneal_factor * eps_now);
        level_steps = 0;
      }
    } else if (!accepted || decrease < opt.tol) {
      break;
    }
  }
  res.energy = energy;
  res.plan = {P, opt.inner.tol};
  return res;
}

}  // namespace otkit
