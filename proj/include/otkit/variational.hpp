#pragma once

// Gradients of entropic OT losses with respect to weights and positions,
// Eulerian fitting, and JKO steps.

#include "otkit/entropic.hpp"
#include "otkit/exact_lp.hpp"

namespace otkit {

namespace detail {

inline SinkhornOptions tight_sinkhorn() {
  SinkhornOptions o;
  o.tol = 1e-13;
  return o;
}

}  // namespace detail

/// MK^eps_C(a, b) = <C, P> - eps H(P) at the Sinkhorn solution (log domain).
inline double entropic_loss(const Vector& a, const Vector& b, const CostMatrix& C, double epsilon,
                            const SinkhornOptions& opt = detail::tight_sinkhorn()) {
  return sinkhorn_log(a, b, C, epsilon, opt).report.regularized;
}

/// Gradient of MK^eps_C in (a, b): the optimal potentials, shifted so that sum f = 0.
inline DualPair grad_wrt_weights(const Vector& a, const Vector& b, const CostMatrix& C, double epsilon,
                                 const SinkhornOptions& opt = detail::tight_sinkhorn()) {
  if (!(epsilon > 0.0)) throw InputError("grad_wrt_weights: epsilon must be positive");
  const SinkhornResult r = sinkhorn_log(a, b, C, epsilon, opt);
  if (!r.report.converged) throw ConvergenceError("grad_wrt_weights: Sinkhorn did not converge");
  return r.duals.centered();
}

struct PositionGradient {
  Matrix gradient;
  bool subgradient = false;  // eps == 0: built from one optimal LP plan
  TransportPlan plan;
};

/// d/dx_i of MK^eps(alpha_x, beta) = sum_j P_ij grad_1 c(x_i, y_j), c = ||x - y||^p.
inline PositionGradient grad_wrt_positions(const DiscreteMeasure& alpha, const DiscreteMeasure& beta, double p,
                                           double epsilon, const SinkhornOptions& opt = detail::tight_sinkhorn()) {
  if (epsilon < 0.0) throw InputError("grad_wrt_positions: epsilon must be >= 0");
  const CostMatrix C = build_cost(alpha, beta, p);
  const Vector& a = alpha.weights().weights();
  const Vector& b = beta.weights().weights();
  PositionGradient out;
  if (epsilon == 0.0) {
    out.plan = network_simplex(a, b, C).plan;
    out.subgradient = true;
  } else {
    out.plan = sinkhorn_log(a, b, C, epsilon, opt).plan;
  }
  const Matrix& x = alpha.points();
  const Matrix& y = beta.points();
  const Matrix& P = out.plan.matrix;
  out.gradient = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < y.rows(); ++j) {
      if (P(i, j) == 0.0) continue;
      const Eigen::RowVectorXd diff = x.row(i) - y.row(j);
      const double r = diff.norm();
      double scale;
      if (p == 2.0) scale = 2.0;
      else if (r == 0.0) scale = 0.0;
      else scale = p * std::pow(r, p - 2.0);
      out.gradient.row(i) += P(i, j) * scale * diff;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Eulerian fitting
// ---------------------------------------------------------------------------

/// theta -> a(theta) on the simplex and its Jacobian (n x dim(theta)).
struct EulerianModel {
  std::function<Vector(const Vector&)> weights;
  std::function<Matrix(const Vector&)> jacobian;
};

struct FitOptions {
  long steps = 100;
  double learning_rate = 1.0;
  SinkhornOptions sinkhorn = detail::tight_sinkhorn();
};

struct FitResult {
  std::vector<Vector> trajectory;  // theta_0, theta_1, ...
  std::vector<double> losses;
  bool line_search_failed = false;
};

/// Gradient descent on E(theta) = MK^eps_C(a(theta), b), with gradient J(theta)' f
/// and backtracking so that the loss never increases.
inline FitResult fit_eulerian(const EulerianModel& model, const Vector& theta0, const Vector& b, const CostMatrix& C,
                              double epsilon, const FitOptions& opt = {}) {
  FitResult res;
  Vector theta = theta0;
  auto feasible = [](const Vector& a) { return a.allFinite() && a.minCoeff() > 0.0; };
  Vector a = model.weights(theta);
  if (!feasible(a)) throw InputError("fit_eulerian: initial weights must be strictly positive");
  double loss = entropic_loss(a, b, C, epsilon, opt.sinkhorn);
  res.trajectory.push_back(theta);
  res.losses.push_back(loss);
  double lr = opt.learning_rate;
  for (long it = 0; it < opt.steps; ++it) {
    const DualPair d = grad_wrt_weights(a, b, C, epsilon, opt.sinkhorn);
    const Vector grad = model.jacobian(theta).transpose() * d.f;
    if (grad.norm() == 0.0) break;
    bool accepted = false;
    for (int bt = 0; bt < 50; ++bt) {
      const Vector trial = theta - lr * grad;
      const Vector at = model.weights(trial);
      if (feasible(at)) {
        const double lt = entropic_loss(at, b, C, epsilon, opt.sinkhorn);
        if (lt <= loss) {
          theta = trial;
          a = at;
          loss = lt;
          accepted = true;
          lr *= 1.5;
          break;
        }
      }
      lr *= 0.5;
    }
    if (!accepted) {
      res.line_search_failed = true;
      break;
    }
    res.trajectory.push_back(theta);
    res.losses.push_back(loss);
  }
  return res;
}

// ---------------------------------------------------------------------------
// JKO
// ---------------------------------------------------------------------------

/// One entropic JKO step: generalized Sinkhorn with the penalty on the rows
/// (F already scaled by its step tau) and the columns fixed to a_prev.
inline Vector jko_step(const Vector& a_prev, const MarginalPenalty& F, const CostMatrix& C, double epsilon,
                       const GeneralizedSinkhornOptions& opt = {}) {
  if (F.kind == MarginalPenalty::Kind::equality || F.kind == MarginalPenalty::Kind::kl)
    throw InputError("jko_step: functional must be linear, linear with a cap, or the negative entropy");
  if (C.rows() != C.cols() || C.cols() != a_prev.size()) throw InputError("jko_step: cost shape mismatch");
  const GeneralizedSinkhornResult r =
      generalized_sinkhorn(F, MarginalPenalty::equality(a_prev), C, epsilon, opt);
  return r.plan.matrix.rowwise().sum();
}

}  // namespace otkit
