#pragma once

// Semidiscrete transport from a continuous source (quadrature grid or
// sampler) to a discrete target, through the semi-dual potential g.

#include "otkit/core.hpp"

#include <random>

namespace otkit {

/// Continuous source discretized by a quadrature rule.
struct QuadratureSource {
  Matrix nodes;   // N x d
  Vector weights; // positive, sums to 1

  QuadratureSource() = default;
  QuadratureSource(Matrix n, Vector w) : nodes(std::move(n)), weights(std::move(w)) {
    if (nodes.rows() != weights.size()) throw InputError("quadrature: node/weight count mismatch");
    if (weights.size() == 0 || weights.minCoeff() <= 0.0) throw InputError("quadrature: weights must be positive");
    if (std::abs(weights.sum() - 1.0) > kProbabilityTolerance) throw InputError("quadrature: weights must sum to 1");
  }

  /// Midpoint rule on [lo, hi]^d with `per_axis` cells per axis (uniform density).
  static QuadratureSource uniform_box(Index d, Index per_axis, double lo = 0.0, double hi = 1.0) {
    Index total = 1;
    for (Index k = 0; k < d; ++k) total *= per_axis;
    Matrix nodes(total, d);
    const double h = (hi - lo) / static_cast<double>(per_axis);
    for (Index p = 0; p < total; ++p) {
      Index rem = p;
      for (Index k = d - 1; k >= 0; --k) {
        nodes(p, k) = lo + (static_cast<double>(rem % per_axis) + 0.5) * h;
        rem /= per_axis;
      }
    }
    return {std::move(nodes), Vector::Constant(total, 1.0 / static_cast<double>(total))};
  }
};

/// Sampler oracle: identical (seed, index) always yields the identical point.
using Sampler = std::function<Eigen::RowVectorXd(std::uint64_t seed, std::uint64_t index)>;

/// Uniform draws on [lo, hi]^d.
inline Sampler uniform_box_sampler(Index d, double lo = 0.0, double hi = 1.0) {
  return [=](std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(lo, hi);
    Eigen::RowVectorXd x(d);
    for (Index k = 0; k < d; ++k) x[k] = unif(rng);
    return x;
  };
}

/// c(x, y) = ||x - y||^power.
struct PowerCost {
  double power = 2.0;
  double operator()(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) const {
    const double sq = (x - y).squaredNorm();
    return power == 2.0 ? sq : std::pow(std::sqrt(sq), power);
  }
};

struct SemiDual {
  Vector g;
};

namespace detail {

// z_j = (g_j - c(x, y_j)), the adjusted values.
template <class Cost>
Vector adjusted(const Vector& g, const Eigen::RowVectorXd& x, const Matrix& targets, const Cost& cost) {
  Vector z(targets.rows());
  for (Index j = 0; j < targets.rows(); ++j) z[j] = g[j] - cost(x, targets.row(j));
  return z;
}

}  // namespace detail

/// g^{cbar,eps}(x): hard min_j c(x,y_j) - g_j when eps == 0, otherwise
/// -eps log sum_j b_j exp((g_j - c(x,y_j))/eps).
template <class Cost = PowerCost>
double cbar_transform_semidiscrete(const Vector& g, const Eigen::RowVectorXd& x, const Matrix& targets,
                                   const Vector& b, double epsilon, const Cost& cost = {}) {
  const Vector z = detail::adjusted(g, x, targets, cost);
  if (epsilon == 0.0) return -z.maxCoeff();
  const double zmax = z.maxCoeff();
  double s = 0.0;
  for (Index j = 0; j < z.size(); ++j) s += b[j] * std::exp((z[j] - zmax) / epsilon);
  return -zmax - epsilon * std::log(s);
}

/// Laguerre cell index argmin_j c(x, y_j) - g_j for each node (ties -> lowest j).
template <class Cost = PowerCost>
std::vector<Index> laguerre_assign(const Vector& g, const Matrix& nodes, const Matrix& targets,
                                   const Cost& cost = {}) {
  std::vector<Index> cell(static_cast<std::size_t>(nodes.rows()));
  for (Index p = 0; p < nodes.rows(); ++p) {
    Index best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < targets.rows(); ++j) {
      const double v = cost(nodes.row(p), targets.row(j)) - g[j];
      if (v < best_val) {
        best_val = v;
        best = j;
      }
    }
    cell[static_cast<std::size_t>(p)] = best;
  }
  return cell;
}

/// Smoothed cell memberships chi_j(x) (one-hot Laguerre indicator when eps == 0).
template <class Cost = PowerCost>
Vector cell_membership(const Vector& g, const Eigen::RowVectorXd& x, const Matrix& targets, const Vector& b,
                       double epsilon, const Cost& cost = {}) {
  const Vector z = detail::adjusted(g, x, targets, cost);
  Vector chi = Vector::Zero(z.size());
  if (epsilon == 0.0) {
    Index best = 0;
    for (Index j = 1; j < z.size(); ++j)
      if (z[j] > z[best]) best = j;
    chi[best] = 1.0;
    return chi;
  }
  const double zmax = z.maxCoeff();
  for (Index j = 0; j < z.size(); ++j) chi[j] = b[j] * std::exp((z[j] - zmax) / epsilon);
  return chi / chi.sum();
}

struct SemiDualEvaluation {
  double energy = 0.0;
  Vector gradient;    // b - cell masses
  Vector cell_mass;   // sum_x w(x) chi_j(x)
};

/// E^eps(g) = sum_x w(x) g^{cbar,eps}(x) + <g, b> and its gradient b_j - sum_x w(x) chi_j(x).
template <class Cost = PowerCost>
SemiDualEvaluation semidual_energy_grad(const Vector& g, const QuadratureSource& source, const Matrix& targets,
                                        const Vector& b, double epsilon, const Cost& cost = {}) {
  if (g.size() != targets.rows() || b.size() != targets.rows())
    throw InputError("semidual_energy_grad: size mismatch");
  if (epsilon < 0.0) throw InputError("semidual_energy_grad: epsilon must be >= 0");
  SemiDualEvaluation out;
  out.cell_mass = Vector::Zero(g.size());
  double acc = 0.0;
  for (Index p = 0; p < source.nodes.rows(); ++p) {
    const Eigen::RowVectorXd x = source.nodes.row(p);
    acc += source.weights[p] * cbar_transform_semidiscrete(g, x, targets, b, epsilon, cost);
    out.cell_mass += source.weights[p] * cell_membership(g, x, targets, b, epsilon, cost);
  }
  out.energy = acc + g.dot(b);
  out.gradient = b - out.cell_mass;
  return out;
}

struct SemiDualSolveOptions {
  double tol = 1e-9;   // on ||gradient||_inf
  long max_iter = 20000;
  double initial_step = 1.0;
};

struct SemiDualSolveResult {
  SemiDual potential;
  SemiDualEvaluation evaluation;
  long iterations = 0;
  bool converged = false;
};

/// Deterministic gradient ascent with Armijo backtracking on the quadrature energy.
template <class Cost = PowerCost>
SemiDualSolveResult solve_semidual(const QuadratureSource& source, const Matrix& targets, const Vector& b,
                                   double epsilon, const SemiDualSolveOptions& opt = {},
                                   const Cost& cost = {}) {
  SemiDualSolveResult r;
  Vector g = Vector::Zero(targets.rows());
  SemiDualEvaluation ev = semidual_energy_grad(g, source, targets, b, epsilon, cost);
  double step = opt.initial_step;
  for (long it = 0; it < opt.max_iter; ++it) {
    if (ev.gradient.cwiseAbs().maxCoeff() < opt.tol) {
      r.converged = true;
      break;
    }
    const double gnorm2 = ev.gradient.squaredNorm();
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Vector trial = g + step * ev.gradient;
      const SemiDualEvaluation tv = semidual_energy_grad(trial, source, targets, b, epsilon, cost);
      if (tv.energy >= ev.energy + 1e-4 * step * gnorm2) {
        g = trial;
        ev = tv;
        accepted = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    r.iterations = it + 1;
    if (!accepted) break;  // at machine precision (or a kink when eps == 0)
  }
  r.potential = {g};
  r.evaluation = ev;
  return r;
}

struct StochasticOptions {
  double tau0 = 1.0;
  double l0 = 100.0;
  long steps = 10000;
  std::uint64_t seed = 0;
};

/// SGD ascent g <- g + tau_l (b - chi(x_l)), tau_l = tau0 / (1 + l / l0), started at g = 0.
template <class Cost = PowerCost>
SemiDual sgd_semidual(const Sampler& sampler, const Matrix& targets, const Vector& b, double epsilon,
                      const StochasticOptions& opt = {}, const Cost& cost = {}) {
  Vector g = Vector::Zero(targets.rows());
  for (long l = 0; l < opt.steps; ++l) {
    const Eigen::RowVectorXd x = sampler(opt.seed, static_cast<std::uint64_t>(l));
    const double tau = opt.tau0 / (1.0 + static_cast<double>(l) / opt.l0);
    g += tau * (b - cell_membership(g, x, targets, b, epsilon, cost));
  }
  return {g};
}

/// Averaged SGD: auxiliary iterates with tau_l = tau0 / (1 + sqrt(l / l0)),
/// returns their running mean.
template <class Cost = PowerCost>
SemiDual sga_semidual(const Sampler& sampler, const Matrix& targets, const Vector& b, double epsilon,
                      const StochasticOptions& opt = {}, const Cost& cost = {},
                      std::vector<Vector>* iterates = nullptr) {
  Vector aux = Vector::Zero(targets.rows());
  Vector mean = Vector::Zero(targets.rows());
  for (long l = 0; l < opt.steps; ++l) {
    const Eigen::RowVectorXd x = sampler(opt.seed, static_cast<std::uint64_t>(l));
    const double tau = opt.tau0 / (1.0 + std::sqrt(static_cast<double>(l) / opt.l0));
    aux += tau * (b - cell_membership(aux, x, targets, b, epsilon, cost));
    if (iterates) iterates->push_back(aux);
    mean += (aux - mean) / static_cast<double>(l + 1);
  }
  return {mean};
}

}  // namespace otkit
