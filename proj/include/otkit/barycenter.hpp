#pragma once

// Wasserstein barycenters: entropic on a fixed grid, 1-D via quantiles,
// Gaussians via a fixed point, and free-support sliced barycenters.

#include "otkit/closed_form.hpp"
#include "otkit/entropic.hpp"
#include "otkit/weak_losses.hpp"

namespace otkit {

struct BarycenterProblem {
  std::vector<Vector> inputs;      // b_s, length n_s
  std::vector<CostMatrix> costs;   // C_s, n x n_s
  Vector lambda;                   // weights on the simplex
  double epsilon = 0.0;

  void validate() const {
    const std::size_t S = inputs.size();
    if (S == 0) throw InputError("barycenter: need at least one input");
    if (costs.size() != S || static_cast<std::size_t>(lambda.size()) != S)
      throw InputError("barycenter: inputs, costs and weights must have the same length");
    if (lambda.minCoeff() < 0.0 || std::abs(lambda.sum() - 1.0) > kProbabilityTolerance)
      throw InputError("barycenter: weights must lie on the simplex");
    for (std::size_t s = 0; s < S; ++s) {
      if (costs[s].rows() != costs[0].rows()) throw InputError("barycenter: costs must share the row count");
      if (costs[s].cols() != inputs[s].size()) throw InputError("barycenter: cost/input shape mismatch");
      (void)Histogram(inputs[s]);
    }
  }
};

struct BarycenterOptions {
  double tol = 1e-8;      // l1 disagreement among the S row marginals
  long max_cycles = 5000;
};

struct BarycenterReport {
  long cycles = 0;
  double disagreement = 0.0;
  bool converged = false;
  std::vector<double> trace;
};

struct BarycenterResult {
  Histogram barycenter;
  std::vector<TransportPlan> plans;
  BarycenterReport report;
};

namespace detail {

// log sum_k exp(z_k) tolerating -inf entries.
inline double lse_safe(const Eigen::Ref<const Vector>& z) {
  const double m = z.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((z.array() - m).exp().sum());
}

}  // namespace detail

/// Iterative scaling in the log domain:
/// v_s = b_s / K_s' u_s, a = prod_s (K_s v_s)^lambda_s, u_s = a / K_s v_s.
inline BarycenterResult entropic_barycenter(const BarycenterProblem& problem, const BarycenterOptions& opt = {}) {
  problem.validate();
  const double eps = problem.epsilon;
  if (!(eps > 0.0)) throw InputError("entropic_barycenter: epsilon must be positive");
  const std::size_t S = problem.inputs.size();
  const Index n = problem.costs[0].rows();

  std::vector<Vector> f(S, Vector::Zero(n)), g(S);
  std::vector<Vector> log_b(S);
  for (std::size_t s = 0; s < S; ++s) {
    log_b[s] = problem.inputs[s].array().log().matrix();
    g[s] = Vector::Zero(problem.inputs[s].size());
  }
  Vector log_a = Vector::Zero(n);
  std::vector<Vector> ell(S, Vector(n));  // eps * log(K_s v_s)
  BarycenterResult res;
  for (long cycle = 1; cycle <= opt.max_cycles; ++cycle) {
    for (std::size_t s = 0; s < S; ++s) {
      const Matrix& C = problem.costs[s].entries();
      for (Index j = 0; j < C.cols(); ++j)
        g[s][j] = std::isfinite(log_b[s][j]) ? eps * (log_b[s][j] - detail::lse_safe((f[s] - C.col(j)) / eps))
                                             : -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < n; ++i) ell[s][i] = eps * detail::lse_safe((g[s].transpose() - C.row(i)).transpose() / eps);
    }
    Vector new_log_a = Vector::Zero(n);
    for (std::size_t s = 0; s < S; ++s) new_log_a += problem.lambda[static_cast<Index>(s)] * ell[s] / eps;
    // Row marginals before the u update: exp((f_s + ell_s) / eps).
    double disagreement = 0.0;
    const Vector a_new = new_log_a.array().exp().matrix();
    for (std::size_t s = 0; s < S; ++s)
      disagreement = std::max(disagreement, (((f[s] + ell[s]) / eps).array().exp().matrix() - a_new).lpNorm<1>());
    for (std::size_t s = 0; s < S; ++s) f[s] = eps * new_log_a - ell[s];
    log_a = new_log_a;
    res.report.cycles = cycle;
    res.report.disagreement = disagreement;
    res.report.trace.push_back(disagreement);
    if (disagreement < opt.tol) {
      res.report.converged = true;
      break;
    }
  }
  Vector a = log_a.array().exp().matrix();
  for (std::size_t s = 0; s < S; ++s)
    res.plans.push_back({detail::log_plan(problem.costs[s].entries(), f[s], g[s], eps), opt.tol});
  res.barycenter = Histogram(a / a.sum(), MassMode::probability);
  return res;
}

/// 1-D barycenter: its quantile function is the lambda-weighted W_p Frechet
/// mean of the input quantiles on the merged level grid (the plain average for p = 2).
inline DiscreteMeasure barycenter_1d(const std::vector<DiscreteMeasure>& inputs, const Vector& lambda,
                                     double p = 2.0) {
  if (!(p >= 1.0)) throw InputError("barycenter_1d: p must be >= 1");
  if (inputs.empty() || static_cast<std::size_t>(lambda.size()) != inputs.size())
    throw InputError("barycenter_1d: inputs and weights must have the same length");
  if (lambda.minCoeff() < 0.0 || std::abs(lambda.sum() - 1.0) > kProbabilityTolerance)
    throw InputError("barycenter_1d: weights must lie on the simplex");
  std::vector<Quantile1D> q;
  std::vector<double> levels{0.0};
  for (const auto& m : inputs) {
    q.emplace_back(m);
    if (std::abs(q.back().total() - 1.0) > kProbabilityTolerance) throw InputError("barycenter_1d: inputs need unit mass");
    levels.insert(levels.end(), q.back().cumulative().begin(), q.back().cumulative().end());
  }
  std::sort(levels.begin(), levels.end());
  std::vector<double> kept{0.0};
  for (double l : levels)
    if (l > kept.back() + 1e-15) kept.push_back(std::min(l, 1.0));
  kept.back() = 1.0;

  const std::size_t S = inputs.size();
  std::vector<double> pos, mass;
  std::vector<double> vals(S);
  for (std::size_t k = 0; k + 1 < kept.size(); ++k) {
    const double mid = 0.5 * (kept[k] + kept[k + 1]);
    for (std::size_t s = 0; s < S; ++s) vals[s] = q[s].quantile(mid);
    double x = 0.0;
    if (p == 2.0) {
      for (std::size_t s = 0; s < S; ++s) x += lambda[static_cast<Index>(s)] * vals[s];
    } else {
      // Convex 1-D minimization of sum lambda_s |x - v_s|^p by golden section.
      auto obj = [&](double t) {
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s) acc += lambda[static_cast<Index>(s)] * std::pow(std::abs(t - vals[s]), p);
        return acc;
      };
      double lo = *std::min_element(vals.begin(), vals.end());
      double hi = *std::max_element(vals.begin(), vals.end());
      const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        const double m1 = hi - ratio * (hi - lo), m2 = lo + ratio * (hi - lo);
        if (obj(m1) <= obj(m2)) hi = m2;
        else lo = m1;
      }
      x = 0.5 * (lo + hi);
    }
    if (!pos.empty() && pos.back() == x) {
      mass.back() += kept[k + 1] - kept[k];
    } else {
      pos.push_back(x);
      mass.push_back(kept[k + 1] - kept[k]);
    }
  }
  Vector w = Eigen::Map<Vector>(mass.data(), static_cast<Index>(mass.size()));
  return DiscreteMeasure::on_line(Eigen::Map<Vector>(pos.data(), static_cast<Index>(pos.size())),
                                  Histogram(w / w.sum()));
}

// ---------------------------------------------------------------------------
// Gaussian barycenter
// ---------------------------------------------------------------------------

struct GaussianBarycenterOptions {
  long max_iter = 10000;
  double tol = 1e-10;          // ||Psi(Sigma) - Sigma||_F at exit
  bool alternative_map = false;  // iterate Sigma^-1/2 Psi(Sigma)^2 Sigma^-1/2 instead of Psi
};

struct GaussianBarycenterResult {
  Gaussian barycenter;
  long iterations = 0;
  double residual = 0.0;
  std::vector<double> objective_trace;  // sum lambda_s B(Sigma, Sigma_s)^2 per iterate
};

/// Psi(Sigma) = sum lambda_s (Sigma^1/2 Sigma_s Sigma^1/2)^1/2.
inline Matrix gaussian_fixed_point_map(const Matrix& Sigma, const std::vector<Gaussian>& inputs, const Vector& lambda) {
  const Matrix root = sqrtm_psd(Sigma);
  Matrix out = Matrix::Zero(Sigma.rows(), Sigma.cols());
  for (std::size_t s = 0; s < inputs.size(); ++s)
    out += lambda[static_cast<Index>(s)] * sqrtm_psd(root * inputs[s].covariance * root);
  return 0.5 * (out + out.transpose());
}

inline GaussianBarycenterResult gaussian_barycenter(const std::vector<Gaussian>& inputs, const Vector& lambda,
                                                    const GaussianBarycenterOptions& opt = {}) {
  if (inputs.empty() || static_cast<std::size_t>(lambda.size()) != inputs.size())
    throw InputError("gaussian_barycenter: inputs and weights must have the same length");
  if (lambda.minCoeff() < 0.0 || std::abs(lambda.sum() - 1.0) > kProbabilityTolerance)
    throw InputError("gaussian_barycenter: weights must lie on the simplex");
  const Index d = inputs[0].dim();
  bool any_pd = false;
  for (const auto& g : inputs) {
    if (g.dim() != d) throw InputError("gaussian_barycenter: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g.covariance, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() > 1e-14) any_pd = true;
  }
  if (!any_pd) throw InputError("gaussian_barycenter: at least one covariance must be positive definite");

  Vector mean = Vector::Zero(d);
  Matrix Sigma = Matrix::Zero(d, d);
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    mean += lambda[static_cast<Index>(s)] * inputs[s].mean;
    Sigma += lambda[static_cast<Index>(s)] * inputs[s].covariance;
  }
  auto objective = [&](const Matrix& S) {
    double acc = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
      acc += lambda[static_cast<Index>(k)] * bures_squared(S, inputs[k].covariance);
    return acc;
  };
  GaussianBarycenterResult res;
  res.objective_trace.push_back(objective(Sigma));
  for (long it = 1; it <= opt.max_iter; ++it) {
    const Matrix psi = gaussian_fixed_point_map(Sigma, inputs, lambda);
    res.residual = (psi - Sigma).norm();
    res.iterations = it;
    if (res.residual <= opt.tol) break;
    if (opt.alternative_map) {
      const Matrix inv_root = inv_sqrtm_pd(Sigma);
      Sigma = inv_root * psi * psi * inv_root;
      Sigma = 0.5 * (Sigma + Sigma.transpose());
    } else {
      Sigma = psi;
    }
    res.objective_trace.push_back(objective(Sigma));
  }
  if (res.residual > opt.tol) throw ConvergenceError("gaussian_barycenter: fixed point not reached within max_iter");
  res.barycenter = Gaussian(mean, Sigma);
  return res;
}

// ---------------------------------------------------------------------------
// Sliced barycenter
// ---------------------------------------------------------------------------

struct SlicedBarycenterOptions {
  long steps = 200;
  Index directions = 0;   // 0: 64 d
  std::uint64_t seed = 0;
  double step = 1.0;      // relative step; the gradient is rescaled by n / 2
};

struct SlicedBarycenterResult {
  DiscreteMeasure barycenter;
  std::vector<double> objective_trace;
};

/// sum_s lambda_s mean_theta W_2^2(theta # x, theta # beta_s) over a fixed direction set.
inline double sliced_barycenter_objective(const Matrix& x, const std::vector<Matrix>& inputs, const Vector& lambda,
                                          const Matrix& dirs) {
  const DiscreteMeasure mx = DiscreteMeasure::empirical(x);
  double acc = 0.0;
  for (std::size_t s = 0; s < inputs.size(); ++s)
    acc += lambda[static_cast<Index>(s)] * sliced_energy(mx, DiscreteMeasure::empirical(inputs[s]), dirs, 2.0);
  return acc;
}

/// Gradient descent on point positions from `init` (uniform weights, equal sizes).
/// A step that increases the objective is halved until it does not.
inline SlicedBarycenterResult sliced_barycenter(const std::vector<Matrix>& inputs, const Vector& lambda,
                                                const Matrix& init, const SlicedBarycenterOptions& opt = {}) {
  if (inputs.empty() || static_cast<std::size_t>(lambda.size()) != inputs.size())
    throw InputError("sliced_barycenter: inputs and weights must have the same length");
  for (const auto& y : inputs)
    if (y.rows() != init.rows() || y.cols() != init.cols())
      throw InputError("sliced_barycenter: inputs must have the shape of the initialization");
  const Index d = init.cols(), n = init.rows();
  const Matrix dirs = sphere_directions(d, opt.directions > 0 ? opt.directions : 64 * d, opt.seed);
  Matrix x = init;
  SlicedBarycenterResult res;
  double obj = sliced_barycenter_objective(x, inputs, lambda, dirs);
  res.objective_trace.push_back(obj);
  double step = opt.step;
  for (long it = 0; it < opt.steps; ++it) {
    Matrix grad = Matrix::Zero(n, d);
    for (std::size_t s = 0; s < inputs.size(); ++s)
      grad += lambda[static_cast<Index>(s)] * sliced_w_gradient(x, inputs[s], dirs);
    grad *= 0.5 * static_cast<double>(n);
    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      const Matrix trial = x - step * static_cast<double>(d) * grad;
      const double t = sliced_barycenter_objective(trial, inputs, lambda, dirs);
      if (t <= obj) {
        x = trial;
        obj = t;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    res.objective_trace.push_back(obj);
  }
  res.barycenter = DiscreteMeasure::empirical(x);
  return res;
}

}  // namespace otkit
