#pragma once

// Measures, costs, couplings and potentials shared by every solver.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace otkit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Thrown on malformed or incompatible inputs (shape, mass, sign).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative solver cannot reach the requested accuracy.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbabilityTolerance = 1e-10;
inline constexpr double kMarginalTolerance = 1e-9;

enum class MassMode { probability, mass };

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

/// Nonnegative weight vector. In probability mode the weights sum to one
/// within kProbabilityTolerance.
class Histogram {
 public:
  Histogram() = default;

  explicit Histogram(Vector weights, MassMode mode = MassMode::probability)
      : weights_(std::move(weights)), mode_(mode) {
    validate();
  }

  Histogram(std::initializer_list<double> w, MassMode mode = MassMode::probability)
      : Histogram(Vector(Eigen::Map<const Vector>(w.begin(), static_cast<Index>(w.size()))), mode) {}

  /// Rescales nonnegative weights to unit mass.
  static Histogram normalized(Vector weights) {
    if (weights.size() == 0) throw InputError("histogram: empty weight vector");
    const double total = weights.sum();
    if (!(total > 0.0)) throw InputError("histogram: total mass must be positive");
    weights /= total;
    return Histogram(std::move(weights), MassMode::probability);
  }

  static Histogram uniform(Index n) {
    if (n < 1) throw InputError("histogram: length must be >= 1");
    return Histogram(Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  const Vector& weights() const { return weights_; }
  MassMode mode() const { return mode_; }
  Index size() const { return weights_.size(); }
  double operator[](Index i) const { return weights_[i]; }
  double total() const { return weights_.sum(); }
  bool strictly_positive() const { return size() > 0 && weights_.minCoeff() > 0.0; }

 private:
  void validate() const {
    if (weights_.size() < 1) throw InputError("histogram: length must be >= 1");
    for (Index i = 0; i < weights_.size(); ++i) {
      if (!std::isfinite(weights_[i]) || weights_[i] < 0.0)
        throw InputError("histogram: weights must be finite and nonnegative");
    }
    if (mode_ == MassMode::probability && std::abs(weights_.sum() - 1.0) > kProbabilityTolerance)
      throw InputError("histogram: probability weights must sum to 1");
  }

  Vector weights_;
  MassMode mode_ = MassMode::probability;
};

// ---------------------------------------------------------------------------
// DiscreteMeasure
// ---------------------------------------------------------------------------

/// Weighted point cloud: row i of points() carries mass weights()[i] > 0.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  DiscreteMeasure(Matrix points, Histogram weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.cols() < 1) throw InputError("measure: ambient dimension must be >= 1");
    if (points_.rows() != weights_.size())
      throw InputError("measure: point count does not match weight count");
    if (!weights_.strictly_positive())
      throw InputError("measure: zero-weight atoms are not allowed (use dropping_zeros)");
    if (!points_.allFinite()) throw InputError("measure: non-finite coordinates");
  }

  /// Builds a measure after removing atoms whose weight is exactly zero.
  static DiscreteMeasure dropping_zeros(const Matrix& points, const Histogram& weights) {
    std::vector<Index> keep;
    for (Index i = 0; i < weights.size(); ++i)
      if (weights[i] > 0.0) keep.push_back(i);
    Matrix kept(static_cast<Index>(keep.size()), points.cols());
    Vector w(static_cast<Index>(keep.size()));
    for (Index k = 0; k < static_cast<Index>(keep.size()); ++k) {
      kept.row(k) = points.row(keep[k]);
      w[k] = weights[keep[k]];
    }
    return DiscreteMeasure(std::move(kept), Histogram(std::move(w), weights.mode()));
  }

  /// Uniform empirical measure on the rows of `points`.
  static DiscreteMeasure empirical(Matrix points) {
    const Index n = points.rows();
    return DiscreteMeasure(std::move(points), Histogram::uniform(n));
  }

  /// 1-D measure from positions and weights.
  static DiscreteMeasure on_line(const Vector& positions, Histogram weights) {
    return DiscreteMeasure(Matrix(positions), std::move(weights));
  }

  const Matrix& points() const { return points_; }
  const Histogram& weights() const { return weights_; }
  Index size() const { return points_.rows(); }
  Index dim() const { return points_.cols(); }

 private:
  Matrix points_;
  Histogram weights_;
};

// ---------------------------------------------------------------------------
// CostMatrix
// ---------------------------------------------------------------------------

struct GroundCost {
  std::string kind = "custom";  // "euclidean_power", "geodesic", "custom", ...
  double power = 1.0;
};

/// Dense n x m cost. Signed costs are allowed only when flagged (GW linearizations).
class CostMatrix {
 public:
  CostMatrix() = default;

  explicit CostMatrix(Matrix entries, GroundCost ground = {}, bool allow_signed = false)
      : entries_(std::move(entries)), ground_(std::move(ground)), signed_(allow_signed) {
    if (entries_.size() == 0) throw InputError("cost: empty matrix");
    if (!entries_.allFinite()) throw InputError("cost: entries must be finite");
    if (!signed_ && entries_.minCoeff() < 0.0)
      throw InputError("cost: negative entries require the signed flag");
  }

  const Matrix& entries() const { return entries_; }
  const GroundCost& ground() const { return ground_; }
  bool is_signed() const { return signed_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double operator()(Index i, Index j) const { return entries_(i, j); }
  double max_abs() const { return entries_.cwiseAbs().maxCoeff(); }

  CostMatrix transposed() const { return CostMatrix(entries_.transpose(), ground_, signed_); }

 private:
  Matrix entries_;
  GroundCost ground_;
  bool signed_ = false;
};

// ---------------------------------------------------------------------------
// TransportPlan, DualPair, Scalings
// ---------------------------------------------------------------------------

struct TransportPlan {
  Matrix matrix;
  double marginal_tolerance = kMarginalTolerance;

  Index rows() const { return matrix.rows(); }
  Index cols() const { return matrix.cols(); }
  double operator()(Index i, Index j) const { return matrix(i, j); }
  double cost(const CostMatrix& C) const { return matrix.cwiseProduct(C.entries()).sum(); }

  Index nonzeros(double threshold = 0.0) const {
    return static_cast<Index>((matrix.array() > threshold).count());
  }
};

/// Kantorovich potentials.
struct DualPair {
  Vector f;
  Vector g;

  double objective(const Histogram& a, const Histogram& b) const {
    return f.dot(a.weights()) + g.dot(b.weights());
  }

  /// Shifts (f, g) -> (f - c, g + c) so that sum(f) = 0. Leaves f_i + g_j unchanged.
  DualPair centered() const {
    const double c = f.size() > 0 ? f.mean() : 0.0;
    return {(f.array() - c).matrix(), (g.array() + c).matrix()};
  }

  /// Max violation of f_i + g_j <= C_ij (0 when feasible).
  double max_violation(const CostMatrix& C) const {
    double worst = 0.0;
    for (Index j = 0; j < C.cols(); ++j)
      for (Index i = 0; i < C.rows(); ++i) worst = std::max(worst, f[i] + g[j] - C(i, j));
    return worst;
  }
};

/// Elementwise std::exp. Eigen's vectorized exp clamps large negative
/// arguments to a denormal instead of 0, which corrupts Gibbs kernels once
/// they are multiplied by large scalings.
template <class Derived>
Eigen::Matrix<double, Derived::RowsAtCompileTime, Derived::ColsAtCompileTime> exp_elementwise(
    const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return std::exp(v); });
}

/// Sinkhorn scalings; (f, g) = eps * (log u, log v).
struct Scalings {
  Vector u;
  Vector v;
  double epsilon = 1.0;

  DualPair duals() const {
    return {(epsilon * u.array().log()).matrix(), (epsilon * v.array().log()).matrix()};
  }

  static Scalings from_duals(const DualPair& d, double epsilon) {
    return {exp_elementwise(d.f / epsilon), exp_elementwise(d.g / epsilon), epsilon};
  }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// C_ij = ||x_i - y_j||_2^power.
inline CostMatrix build_cost(const DiscreteMeasure& source, const DiscreteMeasure& target,
                             double power = 2.0) {
  if (!(power > 0.0)) throw InputError("build_cost: power must be positive");
  if (source.dim() != target.dim()) throw InputError("build_cost: dimension mismatch");
  const Matrix& x = source.points();
  const Matrix& y = target.points();
  Matrix C(x.rows(), y.rows());
  for (Index j = 0; j < y.rows(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double sq = (x.row(i) - y.row(j)).squaredNorm();
      C(i, j) = power == 2.0 ? sq : std::pow(std::sqrt(sq), power);
    }
  }
  return CostMatrix(std::move(C), GroundCost{"euclidean_power", power});
}

/// Squared Euclidean cost between raw point matrices (rows are points).
inline Matrix squared_distances(const Matrix& x, const Matrix& y) {
  Matrix D(x.rows(), y.rows());
  for (Index j = 0; j < y.rows(); ++j)
    for (Index i = 0; i < x.rows(); ++i) D(i, j) = (x.row(i) - y.row(j)).squaredNorm();
  return D;
}

struct MarginalResidual {
  double rows = 0.0;     // ||P 1 - a||_1
  double columns = 0.0;  // ||P^T 1 - b||_1
  double total() const { return rows + columns; }
};

inline MarginalResidual marginal_residual(const Matrix& P, const Vector& a, const Vector& b) {
  if (P.rows() != a.size() || P.cols() != b.size())
    throw InputError("validate_plan: shape mismatch");
  return {(P.rowwise().sum() - a).lpNorm<1>(), (P.colwise().sum().transpose() - b).lpNorm<1>()};
}

inline MarginalResidual validate_plan(const TransportPlan& P, const Histogram& a, const Histogram& b) {
  return marginal_residual(P.matrix, a.weights(), b.weights());
}

/// Row i = (1/a_i) sum_j P_ij y_j.
inline Matrix barycentric_projection(const TransportPlan& P, const Histogram& a,
                                     const DiscreteMeasure& targets) {
  if (P.rows() != a.size() || P.cols() != targets.size())
    throw InputError("barycentric_projection: shape mismatch");
  Matrix mapped = P.matrix * targets.points();
  for (Index i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0)) throw InputError("barycentric_projection: zero source weight");
    mapped.row(i) /= a[i];
  }
  return mapped;
}

using PointMap = std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)>;

/// Moves every atom through `map`; weights are untouched and atoms are never merged.
inline DiscreteMeasure push_forward(const DiscreteMeasure& measure, const PointMap& map) {
  Eigen::RowVectorXd first = map(measure.points().row(0));
  Matrix moved(measure.size(), first.size());
  moved.row(0) = first;
  for (Index i = 1; i < measure.size(); ++i) moved.row(i) = map(measure.points().row(i));
  return DiscreteMeasure(std::move(moved), measure.weights());
}

/// Discrete entropy H(P) = -sum P (log P - 1) with 0 log 0 = 0.
inline double entropy(const Matrix& P) {
  double h = 0.0;
  for (Index j = 0; j < P.cols(); ++j)
    for (Index i = 0; i < P.rows(); ++i) {
      const double p = P(i, j);
      if (p > 0.0) h -= p * (std::log(p) - 1.0);
    }
  return h;
}

inline void require_same_mass(const Vector& a, const Vector& b, const char* who,
                              double tol = kMarginalTolerance) {
  if (std::abs(a.sum() - b.sum()) > tol)
    throw InputError(std::string(who) + ": source and target masses differ");
}

}  // namespace otkit
