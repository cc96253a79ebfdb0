#pragma once

// Closed-form transport: 1-D measures via quantile functions, and Gaussians.

#include "otkit/core.hpp"

#include <Eigen/Eigenvalues>

#include <numeric>

namespace otkit {

// ---------------------------------------------------------------------------
// 1-D quantile functions
// ---------------------------------------------------------------------------

/// Right-continuous CDF samples of a 1-D measure. Coincident atoms are merged.
class Quantile1D {
 public:
  explicit Quantile1D(const DiscreteMeasure& measure) {
    if (measure.dim() != 1) throw InputError("quantile: measure must be 1-D");
    const Index n = measure.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const auto& x = measure.points();
    std::stable_sort(order.begin(), order.end(), [&](Index p, Index q) { return x(p, 0) < x(q, 0); });
    double acc = 0.0;
    for (Index k : order) {
      acc += measure.weights()[k];
      if (!support_.empty() && support_.back() == x(k, 0)) {
        cumulative_.back() = acc;
      } else {
        support_.push_back(x(k, 0));
        cumulative_.push_back(acc);
      }
    }
  }

  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  double total() const { return cumulative_.back(); }

  /// CDF(x) = mass on (-inf, x].
  double cdf(double x) const {
    auto it = std::upper_bound(support_.begin(), support_.end(), x);
    if (it == support_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(it - support_.begin() - 1)];
  }

  /// Generalized inverse: smallest support point with CDF >= r.
  double quantile(double r) const {
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), r);
    if (it == cumulative_.end()) return support_.back();
    return support_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<double> support_;
  std::vector<double> cumulative_;
};

namespace detail {

// Walks the merged breakpoints of two quantile functions; calls
// visit(x, y, mass) on every constant piece. Both inputs must have equal mass.
template <class Visit>
void sweep_quantiles(const Quantile1D& qa, const Quantile1D& qb, Visit&& visit) {
  const auto& xa = qa.support();
  const auto& ca = qa.cumulative();
  const auto& xb = qb.support();
  const auto& cb = qb.cumulative();
  std::size_t i = 0, j = 0;
  double level = 0.0;
  while (i < xa.size() && j < xb.size()) {
    const double next = std::min(ca[i], cb[j]);
    if (next > level) {
      visit(xa[i], xb[j], next - level, i, j);
      level = next;
    }
    if (ca[i] <= level) ++i;
    else ++j;
  }
}

}  // namespace detail

/// W_p between 1-D measures of equal mass, exact integral of |Qa - Qb|^p.
inline double w_p_1d(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, double p = 2.0) {
  if (!(p >= 1.0)) throw InputError("w_p_1d: p must be >= 1");
  const Quantile1D qa(alpha), qb(beta);
  if (std::abs(qa.total() - qb.total()) > kMarginalTolerance) throw InputError("w_p_1d: mass mismatch");
  double acc = 0.0;
  detail::sweep_quantiles(qa, qb, [&](double x, double y, double mass, std::size_t, std::size_t) {
    acc += mass * std::pow(std::abs(x - y), p);
  });
  return std::pow(acc, 1.0 / p);
}

/// W_1 as the L1 distance between the two CDFs.
inline double w1_1d_cdf(const DiscreteMeasure& alpha, const DiscreteMeasure& beta) {
  const Quantile1D qa(alpha), qb(beta);
  if (std::abs(qa.total() - qb.total()) > kMarginalTolerance) throw InputError("w1_1d_cdf: mass mismatch");
  std::vector<double> grid = qa.support();
  grid.insert(grid.end(), qb.support().begin(), qb.support().end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    acc += std::abs(qa.cdf(grid[k]) - qb.cdf(grid[k])) * (grid[k + 1] - grid[k]);
  return acc;
}

struct MongeMap1D {
  // targets[i] = list of (target atom index, mass) in increasing target position
  std::vector<std::vector<std::pair<Index, double>>> targets;
  Index target_count = 0;

  TransportPlan plan() const {
    Matrix P = Matrix::Zero(static_cast<Index>(targets.size()), target_count);
    for (std::size_t i = 0; i < targets.size(); ++i)
      for (const auto& [j, mass] : targets[i]) P(static_cast<Index>(i), j) += mass;
    return {P, kMarginalTolerance};
  }
};

/// Monotone rearrangement between two 1-D measures (mass is split where needed).
inline MongeMap1D monge_map_1d(const DiscreteMeasure& alpha, const DiscreteMeasure& beta) {
  if (alpha.dim() != 1 || beta.dim() != 1) throw InputError("monge_map_1d: measures must be 1-D");
  require_same_mass(alpha.weights().weights(), beta.weights().weights(), "monge_map_1d");
  auto sorted = [](const DiscreteMeasure& m) {
    std::vector<Index> order(static_cast<std::size_t>(m.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index p, Index q) { return m.points()(p, 0) < m.points()(q, 0); });
    return order;
  };
  const auto oa = sorted(alpha), ob = sorted(beta);
  MongeMap1D map;
  map.targets.resize(static_cast<std::size_t>(alpha.size()));
  map.target_count = beta.size();
  std::size_t i = 0, j = 0;
  double ra = alpha.weights()[oa[0]], rb = beta.weights()[ob[0]];
  while (i < oa.size() && j < ob.size()) {
    const double t = std::min(ra, rb);
    if (t > 0.0) map.targets[static_cast<std::size_t>(oa[i])].push_back({ob[j], t});
    ra -= t;
    rb -= t;
    const bool last_i = i + 1 == oa.size(), last_j = j + 1 == ob.size();
    if (last_i && last_j) break;
    if ((ra <= rb && !last_i) || last_j) {
      ++i;
      ra = alpha.weights()[oa[i]];
    } else {
      ++j;
      rb = beta.weights()[ob[j]];
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Gaussians
// ---------------------------------------------------------------------------

struct Gaussian {
  Vector mean;
  Matrix covariance;

  Gaussian() = default;
  Gaussian(Vector m, Matrix cov) : mean(std::move(m)), covariance(std::move(cov)) {
    if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size())
      throw InputError("gaussian: covariance shape does not match mean");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw InputError("gaussian: covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(covariance, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12) throw InputError("gaussian: covariance is not PSD");
  }

  Index dim() const { return mean.size(); }
};

/// Symmetric PSD square root by eigendecomposition, negative eigenvalues clamped to 0.
inline Matrix sqrtm_psd(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Inverse square root of a positive definite matrix.
inline Matrix inv_sqrtm_pd(const Matrix& S) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (S + S.transpose()));
  if (es.eigenvalues().minCoeff() <= 1e-14 * std::max(1.0, es.eigenvalues().maxCoeff()))
    throw InputError("inverse square root: matrix is singular");
  const Vector inv_root = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();
}

/// Squared Bures distance tr(A + B - 2 (A^1/2 B A^1/2)^1/2).
inline double bures_squared(const Matrix& A, const Matrix& B) {
  const Matrix ra = sqrtm_psd(A);
  const Matrix cross = sqrtm_psd(ra * B * ra);
  return std::max(0.0, (A + B - 2.0 * cross).trace());
}

/// Squared W2 between Gaussians.
inline double gaussian_w2(const Gaussian& alpha, const Gaussian& beta) {
  if (alpha.dim() != beta.dim()) throw InputError("gaussian_w2: dimension mismatch");
  return (alpha.mean - beta.mean).squaredNorm() + bures_squared(alpha.covariance, beta.covariance);
}

struct AffineMap {
  Matrix A;
  Vector shift;  // x -> A x + shift

  Vector operator()(const Vector& x) const { return A * x + shift; }
};

/// Optimal map x -> m_b + A (x - m_a) between Gaussians (Sigma_a must be PD).
inline AffineMap gaussian_monge_map(const Gaussian& alpha, const Gaussian& beta) {
  if (alpha.dim() != beta.dim()) throw InputError("gaussian_monge_map: dimension mismatch");
  const Matrix ra = sqrtm_psd(alpha.covariance);
  const Matrix ira = inv_sqrtm_pd(alpha.covariance);
  Matrix A = ira * sqrtm_psd(ra * beta.covariance * ra) * ira;
  A = 0.5 * (A + A.transpose());
  return {A, beta.mean - A * alpha.mean};
}

}  // namespace otkit
