#pragma once

// Entropic optimal transport: Sinkhorn scaling (dense and log-domain),
// rounding, Hilbert-metric diagnostics, Sinkhorn divergences, generalized
// Sinkhorn with KL-proximable marginal penalties, proximal point, batching
// and separable kernels.

#include "otkit/core.hpp"

#include <optional>
#include <variant>

namespace otkit {

/// Raised when the dense kernel product underflows to zero; use the log-domain solver.
class UnderflowError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

// ---------------------------------------------------------------------------
// Log-sum-exp / soft-min
// ---------------------------------------------------------------------------

/// log sum_k exp(z_k), computed with the max subtracted.
template <class Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& z) {
  const double c = z.maxCoeff();
  if (!std::isfinite(c)) return c;
  return c + std::log((z.derived().array() - c).exp().sum());
}

/// min_eps(z) = -eps log sum exp(-z/eps); tends to min z as eps -> 0.
inline double softmin(const Vector& z, double epsilon) {
  const double zmin = z.minCoeff();
  return zmin - epsilon * std::log((-(z.array() - zmin) / epsilon).exp().sum());
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

/// K = exp(-C / eps), either dense or as a tensor product of 1-D factors.
class GibbsKernel {
 public:
  static GibbsKernel dense(const CostMatrix& C, double epsilon) {
    if (!(epsilon > 0.0)) throw InputError("kernel: epsilon must be positive");
    GibbsKernel k;
    k.epsilon_ = epsilon;
    k.dense_ = exp_elementwise(-C.entries() / epsilon);
    return k;
  }

  /// Factors K^1..K^d acting on row-major flattened tensors.
  static GibbsKernel separable(std::vector<Matrix> factors, double epsilon) {
    if (factors.empty()) throw InputError("kernel: no factors");
    GibbsKernel k;
    k.epsilon_ = epsilon;
    k.factors_ = std::move(factors);
    return k;
  }

  double epsilon() const { return epsilon_; }
  bool is_separable() const { return !factors_.empty(); }
  const Matrix& matrix() const { return dense_; }
  const std::vector<Matrix>& factors() const { return factors_; }

  Index rows() const {
    if (!is_separable()) return dense_.rows();
    Index r = 1;
    for (const auto& f : factors_) r *= f.rows();
    return r;
  }
  Index cols() const {
    if (!is_separable()) return dense_.cols();
    Index c = 1;
    for (const auto& f : factors_) c *= f.cols();
    return c;
  }

  Vector apply(const Vector& v) const;
  Vector apply_transpose(const Vector& u) const;

  /// Dense matrix (expands a separable kernel as a Kronecker product).
  Matrix to_dense() const {
    if (!is_separable()) return dense_;
    Matrix out = factors_[0];
    for (std::size_t k = 1; k < factors_.size(); ++k) {
      const Matrix& f = factors_[k];
      Matrix next(out.rows() * f.rows(), out.cols() * f.cols());
      for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < out.cols(); ++j)
          next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
      out = std::move(next);
    }
    return out;
  }

 private:
  double epsilon_ = 1.0;
  Matrix dense_;
  std::vector<Matrix> factors_;
};

/// Applies K^1 (x) ... (x) K^d to a row-major tensor with shape (cols of each factor).
/// Each factor is applied along its own axis, so the cost is O(N sum_k n_k).
inline Vector apply_separable_kernel(const std::vector<Matrix>& factors, const Vector& u) {
  if (factors.empty()) throw InputError("apply_separable_kernel: no factors");
  std::vector<Index> shape;
  Index total = 1;
  for (const auto& f : factors) {
    shape.push_back(f.cols());
    total *= f.cols();
  }
  if (u.size() != total) throw InputError("apply_separable_kernel: tensor shape mismatch");
  Vector cur = u;
  for (std::size_t axis = 0; axis < factors.size(); ++axis) {
    const Matrix& K = factors[axis];
    Index before = 1, after = 1;
    for (std::size_t k = 0; k < axis; ++k) before *= shape[k];
    for (std::size_t k = axis + 1; k < shape.size(); ++k) after *= shape[k];
    const Index in_len = shape[axis], out_len = K.rows();
    Vector next(before * out_len * after);
    for (Index p = 0; p < before; ++p) {
      // slab(p) is an in_len x after block stored row-major
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> in(
          cur.data() + p * in_len * after, in_len, after);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(
          next.data() + p * out_len * after, out_len, after);
      out.noalias() = K * in;
    }
    shape[axis] = out_len;
    cur = std::move(next);
  }
  return cur;
}

inline Vector GibbsKernel::apply(const Vector& v) const {
  if (!is_separable()) return dense_ * v;
  return apply_separable_kernel(factors_, v);
}

inline Vector GibbsKernel::apply_transpose(const Vector& u) const {
  if (!is_separable()) return dense_.transpose() * u;
  std::vector<Matrix> t;
  for (const auto& f : factors_) t.push_back(f.transpose());
  return apply_separable_kernel(t, u);
}

// ---------------------------------------------------------------------------
// Hilbert projective metric
// ---------------------------------------------------------------------------

/// H(u, u') = max_ij log(u_i u'_j / (u_j u'_i)) = var(log u - log u').
inline double hilbert_metric(const Vector& u, const Vector& u2) {
  if (u.size() != u2.size()) throw InputError("hilbert_metric: size mismatch");
  if (u.minCoeff() <= 0.0 || u2.minCoeff() <= 0.0) throw InputError("hilbert_metric: entries must be positive");
  const Vector d = (u.array().log() - u2.array().log()).matrix();
  return d.maxCoeff() - d.minCoeff();
}

namespace detail {

// log eta(K) from log K: max_{i,j} [max_k (L_ik - L_jk) - min_l (L_il - L_jl)].
inline double log_eta(const Matrix& logK) {
  double best = 0.0;
  for (Index i = 0; i < logK.rows(); ++i)
    for (Index j = 0; j < logK.rows(); ++j) {
      const Eigen::RowVectorXd d = logK.row(i) - logK.row(j);
      best = std::max(best, d.maxCoeff() - d.minCoeff());
    }
  return best;
}

}  // namespace detail

/// Birkhoff contraction ratio lambda(K) = (sqrt(eta) - 1) / (sqrt(eta) + 1) = tanh(log(eta) / 4).
inline double contraction_factor(const Matrix& K) {
  if (K.minCoeff() <= 0.0) throw InputError("contraction_factor: kernel must be positive");
  return std::tanh(detail::log_eta(K.array().log().matrix()) / 4.0);
}

/// Same as contraction_factor(exp(-C/eps)) without forming the kernel.
inline double contraction_factor(const CostMatrix& C, double epsilon) {
  return std::tanh(detail::log_eta(-C.entries() / epsilon) / 4.0);
}

// ---------------------------------------------------------------------------
// Sinkhorn
// ---------------------------------------------------------------------------

struct SinkhornOptions {
  double tol = 1e-9;   // on ||P1 - a||_1 + ||P^T 1 - b||_1
  long max_iter = 0;   // 0: 1e4 * ceil(||C||_inf / eps), capped at 1e6
  bool record_trace = false;
};

struct SinkhornReport {
  double primal = 0.0;       // <C, P>
  double dual = 0.0;         // <f, a> + <g, b>
  double regularized = 0.0;  // <C, P> - eps H(P)
  double entropy = 0.0;      // H(P)
  long iterations = 0;
  MarginalResidual residual;
  bool converged = false;
  std::vector<double> trace;          // total marginal residual after each iteration
  std::vector<double> row_trace;      // ||P1 - a||_1 after each iteration
};

struct SinkhornResult {
  Scalings scalings;  // only meaningful for dense solves
  DualPair duals;
  TransportPlan plan;
  SinkhornReport report;
};

inline long default_max_iter(double cost_scale, double epsilon) {
  const double k = std::ceil(std::max(cost_scale, 1e-300) / epsilon);
  return static_cast<long>(std::min(1e6, 1e4 * std::max(1.0, k)));
}

namespace detail {

inline void finish_report(SinkhornResult& r, const Vector& a, const Vector& b, const CostMatrix& C,
                          double epsilon) {
  r.report.primal = r.plan.cost(C);
  r.report.dual = r.duals.f.dot(a) + r.duals.g.dot(b);
  r.report.entropy = entropy(r.plan.matrix);
  r.report.regularized = r.report.primal - epsilon * r.report.entropy;
  r.report.residual = marginal_residual(r.plan.matrix, a, b);
  r.plan.marginal_tolerance = r.report.residual.total();
}

}  // namespace detail

/// Dense Sinkhorn scaling u <- a / (K v), v <- b / (K^T u), started at u = v = 1.
inline SinkhornResult sinkhorn(const Vector& a, const Vector& b, const CostMatrix& C, double epsilon,
                               const SinkhornOptions& opt = {}) {
  if (!(epsilon > 0.0)) throw InputError("sinkhorn: epsilon must be positive");
  if (C.rows() != a.size() || C.cols() != b.size()) throw InputError("sinkhorn: shape mismatch");
  if (a.minCoeff() <= 0.0 || b.minCoeff() <= 0.0)
    throw InputError("sinkhorn: marginals must be strictly positive (drop zero-weight atoms)");
  const long max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(C.max_abs(), epsilon);
  const Matrix K = exp_elementwise(-C.entries() / epsilon);

  SinkhornResult r;
  Vector u = Vector::Ones(a.size()), v = Vector::Ones(b.size());
  Vector Kv = K * v;
  for (long it = 1; it <= max_iter; ++it) {
    if (!(Kv.minCoeff() > 0.0) || !Kv.allFinite())
      throw UnderflowError("sinkhorn: kernel product underflow, use sinkhorn_log");
    u = a.cwiseQuotient(Kv);
    const Vector Ktu = K.transpose() * u;
    if (!(Ktu.minCoeff() > 0.0) || !Ktu.allFinite())
      throw UnderflowError("sinkhorn: kernel product underflow, use sinkhorn_log");
    v = b.cwiseQuotient(Ktu);
    Kv = K * v;
    const double rows = (u.cwiseProduct(Kv) - a).lpNorm<1>();
    const double cols = (v.cwiseProduct(Ktu) - b).lpNorm<1>();
    r.report.iterations = it;
    if (opt.record_trace) {
      r.report.trace.push_back(rows + cols);
      r.report.row_trace.push_back(rows);
    }
    if (!std::isfinite(rows)) throw UnderflowError("sinkhorn: non-finite scalings, use sinkhorn_log");
    if (rows + cols < opt.tol) {
      r.report.converged = true;
      break;
    }
  }
  r.scalings = {u, v, epsilon};
  r.duals = r.scalings.duals();
  r.plan = {u.asDiagonal() * K * v.asDiagonal(), 0.0};
  detail::finish_report(r, a, b, C, epsilon);
  return r;
}

inline SinkhornResult sinkhorn(const Histogram& a, const Histogram& b, const CostMatrix& C, double epsilon,
                               const SinkhornOptions& opt = {}) {
  return sinkhorn(a.weights(), b.weights(), C, epsilon, opt);
}

namespace detail {

// f_i <- eps log a_i - eps LSE_j((g_j - C_ij)/eps), running max subtracted per row.
inline void log_update_rows(const Matrix& C, const Vector& g, const Vector& log_a, double eps, Vector& f) {
  const Index n = C.rows(), m = C.cols();
  for (Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < m; ++j) mx = std::max(mx, (g[j] - C(i, j)) / eps);
    double s = 0.0;
    for (Index j = 0; j < m; ++j) s += std::exp((g[j] - C(i, j)) / eps - mx);
    f[i] = eps * (log_a[i] - mx - std::log(s));
  }
}

inline void log_update_cols(const Matrix& C, const Vector& f, const Vector& log_b, double eps, Vector& g) {
  const Index n = C.rows(), m = C.cols();
  Vector mx = Vector::Constant(m, -std::numeric_limits<double>::infinity());
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) mx[j] = std::max(mx[j], (f[i] - C(i, j)) / eps);
  for (Index j = 0; j < m; ++j) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += std::exp((f[i] - C(i, j)) / eps - mx[j]);
    g[j] = eps * (log_b[j] - mx[j] - std::log(s));
  }
}

inline Matrix log_plan(const Matrix& C, const Vector& f, const Vector& g, double eps) {
  Matrix P(C.rows(), C.cols());
  for (Index j = 0; j < C.cols(); ++j)
    for (Index i = 0; i < C.rows(); ++i) P(i, j) = std::exp((f[i] + g[j] - C(i, j)) / eps);
  return P;
}

}  // namespace detail

/// Log-domain Sinkhorn on the potentials (f, g); same iterates as sinkhorn()
/// with (f, g) = eps (log u, log v) but stable for small eps.
inline SinkhornResult sinkhorn_log(const Vector& a, const Vector& b, const CostMatrix& C, double epsilon,
                                   const SinkhornOptions& opt = {},
                                   const std::optional<DualPair>& warm_start = std::nullopt) {
  if (!(epsilon > 0.0)) throw InputError("sinkhorn_log: epsilon must be positive");
  if (C.rows() != a.size() || C.cols() != b.size()) throw InputError("sinkhorn_log: shape mismatch");
  if (a.minCoeff() <= 0.0 || b.minCoeff() <= 0.0)
    throw InputError("sinkhorn_log: marginals must be strictly positive (drop zero-weight atoms)");
  const long max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(C.max_abs(), epsilon);
  const Matrix& Cm = C.entries();
  const Vector log_a = a.array().log().matrix(), log_b = b.array().log().matrix();

  SinkhornResult r;
  Vector f = Vector::Zero(a.size()), g = Vector::Zero(b.size());
  if (warm_start) {
    f = warm_start->f;
    g = warm_start->g;
  }
  Matrix P;
  for (long it = 1; it <= max_iter; ++it) {
    detail::log_update_rows(Cm, g, log_a, epsilon, f);
    detail::log_update_cols(Cm, f, log_b, epsilon, g);
    P = detail::log_plan(Cm, f, g, epsilon);
    const double rows = (P.rowwise().sum() - a).lpNorm<1>();
    const double cols = (P.colwise().sum().transpose() - b).lpNorm<1>();
    r.report.iterations = it;
    if (opt.record_trace) {
      r.report.trace.push_back(rows + cols);
      r.report.row_trace.push_back(rows);
    }
    if (rows + cols < opt.tol) {
      r.report.converged = true;
      break;
    }
  }
  if (P.size() == 0) P = detail::log_plan(Cm, f, g, epsilon);
  r.duals = {f, g};
  r.scalings = Scalings::from_duals(r.duals, epsilon);
  r.plan = {P, 0.0};
  detail::finish_report(r, a, b, C, epsilon);
  return r;
}

inline SinkhornResult sinkhorn_log(const Histogram& a, const Histogram& b, const CostMatrix& C, double epsilon,
                                   const SinkhornOptions& opt = {}) {
  return sinkhorn_log(a.weights(), b.weights(), C, epsilon, opt);
}

/// Uses the log-domain solver for eps < 1e-2 ||C||_inf (or on underflow), dense scaling otherwise.
inline SinkhornResult solve_entropic(const Vector& a, const Vector& b, const CostMatrix& C, double epsilon,
                                     const SinkhornOptions& opt = {}) {
  if (epsilon < 1e-2 * C.max_abs()) return sinkhorn_log(a, b, C, epsilon, opt);
  try {
    return sinkhorn(a, b, C, epsilon, opt);
  } catch (const UnderflowError&) {
    return sinkhorn_log(a, b, C, epsilon, opt);
  }
}

// ---------------------------------------------------------------------------
// Rounding onto U(a, b)
// ---------------------------------------------------------------------------

/// Scales rows then columns down to their targets and adds the rank-one
/// correction Delta_a Delta_b^T / ||Delta_a||_1. The result is exactly in U(a, b).
inline TransportPlan round_to_feasible(const Matrix& P_raw, const Vector& a, const Vector& b) {
  if (P_raw.rows() != a.size() || P_raw.cols() != b.size()) throw InputError("round_to_feasible: shape mismatch");
  Matrix P = P_raw;
  const Vector rs = P.rowwise().sum();
  for (Index i = 0; i < P.rows(); ++i)
    if (rs[i] > a[i]) P.row(i) *= a[i] / rs[i];
  const Vector cs = P.colwise().sum().transpose();
  for (Index j = 0; j < P.cols(); ++j)
    if (cs[j] > b[j]) P.col(j) *= b[j] / cs[j];
  const Vector da = (a - P.rowwise().sum()).cwiseMax(0.0);
  const Vector db = (b - P.colwise().sum().transpose()).cwiseMax(0.0);
  const double mass = da.sum();
  if (mass > 0.0) P += da * db.transpose() / mass;
  return {P, 0.0};
}

/// Rounding from scalings: starts from diag(u) K diag(v).
inline TransportPlan round_to_feasible(const Vector& u, const Vector& v, const Matrix& K, const Vector& a,
                                       const Vector& b) {
  return round_to_feasible(Matrix(u.asDiagonal() * K * v.asDiagonal()), a, b);
}

// ---------------------------------------------------------------------------
// Sinkhorn divergences
// ---------------------------------------------------------------------------

struct SinkhornDivergences {
  double primal = 0.0;        // <C, P*>
  double dual = 0.0;          // <f*, a> + <g*, b>
  double regularized = 0.0;   // MK^eps = <C,P*> - eps H(P*)
  double entropy = 0.0;       // H(P*)
  double finite_dual = 0.0;   // <f^(L), a> + <g^(L), b> after L iterations
  bool converged = false;
};

/// Converged primal/dual values and the L-iteration dual lower bound.
inline SinkhornDivergences sinkhorn_divergences(const Vector& a, const Vector& b, const CostMatrix& C,
                                                double epsilon, long L, const SinkhornOptions& opt = {}) {
  if (L < 1) throw InputError("sinkhorn_divergences: L must be >= 1");
  const SinkhornResult full = sinkhorn_log(a, b, C, epsilon, opt);
  SinkhornOptions short_opt;
  short_opt.tol = 0.0;
  short_opt.max_iter = L;
  const SinkhornResult partial = sinkhorn_log(a, b, C, epsilon, short_opt);
  SinkhornDivergences d;
  d.primal = full.report.primal;
  d.dual = full.report.dual;
  d.regularized = full.report.regularized;
  d.entropy = full.report.entropy;
  d.converged = full.report.converged;
  d.finite_dual = partial.report.dual;
  return d;
}

/// Feasible plan with <P, C> <= MK_C + tau (tau in cost units): Sinkhorn at
/// eps = tau / (4 log n) to marginal accuracy tau / (8 ||C||_inf), then rounding.
inline TransportPlan approximate_ot(const Vector& a, const Vector& b, const CostMatrix& C, double tau) {
  const double scale = std::max(C.max_abs(), 1e-300);
  const double n = static_cast<double>(std::max(a.size(), b.size()));
  const double epsilon = tau / (4.0 * std::log(std::max(n, 2.0)));
  SinkhornOptions opt;
  opt.tol = tau / (8.0 * scale);
  const SinkhornResult r = solve_entropic(a, b, C, epsilon, opt);
  return round_to_feasible(r.plan.matrix, a, b);
}

// ---------------------------------------------------------------------------
// Generalized Sinkhorn
// ---------------------------------------------------------------------------

/// Marginal functional with a closed-form KL proximal map.
struct MarginalPenalty {
  enum class Kind { equality, kl, linear, linear_capped, neg_entropy };

  Kind kind = Kind::equality;
  Vector target;     // equality / kl
  double tau = 1.0;  // kl strength or step size for linear / neg_entropy
  Vector potential;  // linear potential V
  double cap = std::numeric_limits<double>::infinity();  // congestion bound kappa

  static MarginalPenalty equality(Vector target) { return {Kind::equality, std::move(target), 1.0, {}, {}}; }
  static MarginalPenalty kl(Vector target, double tau) {
    if (!(tau > 0.0)) throw InputError("kl penalty: tau must be positive");
    return {Kind::kl, std::move(target), tau, {}, {}};
  }
  /// F(p) = tau <V, p>
  static MarginalPenalty linear(Vector V, double tau) {
    return {Kind::linear, {}, tau, std::move(V), std::numeric_limits<double>::infinity()};
  }
  /// F(p) = tau <V, p> + indicator(p <= cap)
  static MarginalPenalty linear_capped(Vector V, double tau, double cap) {
    return {Kind::linear_capped, {}, tau, std::move(V), cap};
  }
  /// F(p) = tau sum p (log p - 1)
  static MarginalPenalty neg_entropy(double tau) { return {Kind::neg_entropy, {}, tau, {}, {}}; }

  /// log Prox^KL_{F/eps}(s) evaluated from log s.
  Vector log_prox(const Vector& log_s, double eps) const {
    switch (kind) {
      case Kind::equality:
        return target.array().log().matrix();
      case Kind::kl: {
        const double k = tau / (tau + eps);
        return (k * target.array().log() + (1.0 - k) * log_s.array()).matrix();
      }
      case Kind::linear:
        return (log_s.array() - tau * potential.array() / eps).matrix();
      case Kind::linear_capped:
        return (log_s.array() - tau * potential.array() / eps).cwiseMin(std::log(cap)).matrix();
      case Kind::neg_entropy:
        return (log_s.array() * (eps / (eps + tau))).matrix();
    }
    return log_s;
  }

  /// Penalty value F(p).
  double value(const Vector& p) const {
    switch (kind) {
      case Kind::equality:
        return (p - target).lpNorm<1>() <= 1e-6 * std::max(1.0, target.sum())
                   ? 0.0 : std::numeric_limits<double>::infinity();
      case Kind::kl: {
        double s = 0.0;
        for (Index i = 0; i < p.size(); ++i) {
          if (p[i] > 0.0) s += p[i] * std::log(p[i] / target[i]);
          s += target[i] - p[i];
        }
        return tau * s;
      }
      case Kind::linear:
        return tau * potential.dot(p);
      case Kind::linear_capped:
        return p.maxCoeff() <= cap * (1.0 + 1e-9) ? tau * potential.dot(p) : std::numeric_limits<double>::infinity();
      case Kind::neg_entropy: {
        double s = 0.0;
        for (Index i = 0; i < p.size(); ++i)
          if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - 1.0);
        return tau * s;
      }
    }
    return 0.0;
  }
};

struct GeneralizedSinkhornOptions {
  double tol = 1e-10;  // sup-norm change of (f, g) / eps between iterations
  long max_iter = 100000;
  bool log_domain = false;  // forced; otherwise used automatically on underflow
  bool record_trace = false;
};

struct GeneralizedSinkhornResult {
  Scalings scalings;
  DualPair duals;
  TransportPlan plan;
  double transport_cost = 0.0;  // <C, P>
  double objective = 0.0;       // <C,P> - eps H(P) + F(P1) + G(P^T 1)
  long iterations = 0;
  bool converged = false;
  bool used_log_domain = false;
  std::vector<Vector> u_trace;
};

/// u <- Prox^KL_F(K v) / (K v), v <- Prox^KL_G(K^T u) / (K^T u).
inline GeneralizedSinkhornResult generalized_sinkhorn(const MarginalPenalty& F, const MarginalPenalty& G,
                                                      const CostMatrix& C, double epsilon,
                                                      const GeneralizedSinkhornOptions& opt = {}) {
  if (!(epsilon > 0.0)) throw InputError("generalized_sinkhorn: epsilon must be positive");
  const Index n = C.rows(), m = C.cols();
  const Matrix& Cm = C.entries();
  GeneralizedSinkhornResult r;

  auto run_dense = [&]() -> bool {
    const Matrix K = exp_elementwise(-Cm / epsilon);
    Vector u = Vector::Ones(n), v = Vector::Ones(m);
    for (long it = 1; it <= opt.max_iter; ++it) {
      const Vector Kv = K * v;
      if (!(Kv.minCoeff() > 0.0)) return false;
      const Vector u_new = (F.log_prox(Kv.array().log().matrix(), epsilon).array().exp() / Kv.array()).matrix();
      const Vector Ktu = K.transpose() * u_new;
      if (!(Ktu.minCoeff() > 0.0)) return false;
      const Vector v_new = (G.log_prox(Ktu.array().log().matrix(), epsilon).array().exp() / Ktu.array()).matrix();
      if (!u_new.allFinite() || !v_new.allFinite() || u_new.minCoeff() <= 0.0 || v_new.minCoeff() <= 0.0)
        return false;
      const double change = std::max((u_new.array().log() - u.array().log()).abs().maxCoeff(),
                                     (v_new.array().log() - v.array().log()).abs().maxCoeff());
      u = u_new;
      v = v_new;
      if (opt.record_trace) r.u_trace.push_back(u);
      r.iterations = it;
      if (change < opt.tol) {
        r.converged = true;
        break;
      }
    }
    r.scalings = {u, v, epsilon};
    r.duals = r.scalings.duals();
    r.plan = {u.asDiagonal() * K * v.asDiagonal(), 0.0};
    return true;
  };

  auto run_log = [&] {
    r.used_log_domain = true;
    r.u_trace.clear();
    r.converged = false;
    Vector f = Vector::Zero(n), g = Vector::Zero(m);
    Vector log_Kv(n), log_Ktu(m);
    for (long it = 1; it <= opt.max_iter; ++it) {
      for (Index i = 0; i < n; ++i) log_Kv[i] = log_sum_exp(((g.transpose() - Cm.row(i)) / epsilon).transpose());
      const Vector f_new = epsilon * (F.log_prox(log_Kv, epsilon) - log_Kv);
      for (Index j = 0; j < m; ++j) log_Ktu[j] = log_sum_exp((f_new - Cm.col(j)) / epsilon);
      const Vector g_new = epsilon * (G.log_prox(log_Ktu, epsilon) - log_Ktu);
      const double change = std::max((f_new - f).cwiseAbs().maxCoeff(), (g_new - g).cwiseAbs().maxCoeff()) / epsilon;
      f = f_new;
      g = g_new;
      r.iterations = it;
      if (change < opt.tol) {
        r.converged = true;
        break;
      }
    }
    r.duals = {f, g};
    r.scalings = Scalings::from_duals(r.duals, epsilon);
    r.plan = {detail::log_plan(Cm, f, g, epsilon), 0.0};
  };

  if (opt.log_domain || !run_dense()) run_log();

  const Matrix& P = r.plan.matrix;
  r.transport_cost = P.cwiseProduct(Cm).sum();
  r.objective = r.transport_cost - epsilon * entropy(P) + F.value(P.rowwise().sum()) +
                G.value(P.colwise().sum().transpose());
  return r;
}

/// Transport cost plus KL marginal penalties (no entropy term), the unbalanced
/// objective evaluated at a plan.
inline double unbalanced_cost(const Matrix& P, const CostMatrix& C, const MarginalPenalty& F,
                              const MarginalPenalty& G) {
  return P.cwiseProduct(C.entries()).sum() + F.value(P.rowwise().sum()) + G.value(P.colwise().sum().transpose());
}

// ---------------------------------------------------------------------------
// Proximal point (KL) iterations
// ---------------------------------------------------------------------------

/// P^(l+1) = argmin <C,P> + eps KL(P | P^(l)) over U(a,b), starting from the
/// all-ones matrix (so the first step is plain Sinkhorn). Each step is a Sinkhorn
/// solve with kernel exp(-C/eps) * P^(l), run in the log domain.
inline std::vector<TransportPlan> proximal_point(const Vector& a, const Vector& b, const CostMatrix& C,
                                                 double epsilon, int outer_steps,
                                                 const SinkhornOptions& opt = {}) {
  if (!(epsilon > 0.0)) throw InputError("proximal_point: epsilon must be positive");
  std::vector<TransportPlan> plans;
  Matrix log_prev = Matrix::Zero(C.rows(), C.cols());
  for (int step = 0; step < outer_steps; ++step) {
    const Matrix effective = C.entries() - epsilon * log_prev;
    const double shift = effective.minCoeff();
    const CostMatrix Ceff((effective.array() - shift).matrix(), C.ground(), false);
    SinkhornResult r = sinkhorn_log(a, b, Ceff, epsilon, opt);
    if (!r.report.converged)
      throw ConvergenceError("proximal_point: inner Sinkhorn did not converge at step " + std::to_string(step));
    log_prev = r.plan.matrix.array().max(1e-300).log().matrix();
    plans.push_back(std::move(r.plan));
  }
  return plans;
}

// ---------------------------------------------------------------------------
// Batched Sinkhorn with a shared kernel
// ---------------------------------------------------------------------------

/// Column k of A and B define problem k. Each column stops on its own
/// tolerance, so the results equal N independent sinkhorn() calls.
inline std::vector<SinkhornResult> batched_sinkhorn(const Matrix& A, const Matrix& B, const CostMatrix& C,
                                                    double epsilon, const SinkhornOptions& opt = {}) {
  if (A.cols() != B.cols() || A.rows() != C.rows() || B.rows() != C.cols())
    throw InputError("batched_sinkhorn: shape mismatch");
  const Index N = A.cols();
  const long max_iter = opt.max_iter > 0 ? opt.max_iter : default_max_iter(C.max_abs(), epsilon);
  const Matrix K = exp_elementwise(-C.entries() / epsilon);
  Matrix U = Matrix::Ones(A.rows(), N), V = Matrix::Ones(B.rows(), N);
  std::vector<SinkhornResult> out(static_cast<std::size_t>(N));
  std::vector<bool> active(static_cast<std::size_t>(N), true);
  std::vector<bool> failed(static_cast<std::size_t>(N), false);
  Index remaining = N;
  Matrix KV = K * V;
  for (long it = 1; it <= max_iter && remaining > 0; ++it) {
    const Matrix Unew = A.cwiseQuotient(KV);
    const Matrix KtU = K.transpose() * Unew;
    const Matrix Vnew = B.cwiseQuotient(KtU);
    const Matrix KVnew = K * Vnew;
    for (Index k = 0; k < N; ++k) {
      if (!active[static_cast<std::size_t>(k)]) continue;
      auto& rep = out[static_cast<std::size_t>(k)].report;
      if (!(KV.col(k).minCoeff() > 0.0) || !(KtU.col(k).minCoeff() > 0.0) || !Vnew.col(k).allFinite()) {
        failed[static_cast<std::size_t>(k)] = true;
        active[static_cast<std::size_t>(k)] = false;
        --remaining;
        continue;
      }
      U.col(k) = Unew.col(k);
      V.col(k) = Vnew.col(k);
      KV.col(k) = KVnew.col(k);
      const double rows = (U.col(k).cwiseProduct(KV.col(k)) - A.col(k)).lpNorm<1>();
      const double cols = (V.col(k).cwiseProduct(KtU.col(k)) - B.col(k)).lpNorm<1>();
      rep.iterations = it;
      if (opt.record_trace) rep.trace.push_back(rows + cols);
      if (rows + cols < opt.tol) {
        rep.converged = true;
        active[static_cast<std::size_t>(k)] = false;
        --remaining;
      }
    }
  }
  for (Index k = 0; k < N; ++k) {
    auto& r = out[static_cast<std::size_t>(k)];
    if (failed[static_cast<std::size_t>(k)]) {
      r.report.converged = false;
      r.plan = {Matrix::Zero(A.rows(), B.rows()), 0.0};
      continue;
    }
    r.scalings = {U.col(k), V.col(k), epsilon};
    r.duals = r.scalings.duals();
    r.plan = {U.col(k).asDiagonal() * K * V.col(k).asDiagonal(), 0.0};
    detail::finish_report(r, A.col(k), B.col(k), C, epsilon);
  }
  return out;
}

/// True when column k underflowed in batched_sinkhorn.
inline bool batch_column_failed(const SinkhornResult& r) {
  return !r.report.converged && r.plan.matrix.size() > 0 && r.plan.matrix.isZero(0.0);
}

}  // namespace otkit
