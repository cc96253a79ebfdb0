#pragma once

// Exact solvers for the discrete Kantorovich linear program.

#include "otkit/core.hpp"

#include <deque>
#include <numeric>
#include <optional>
#include <sstream>

namespace otkit {

// ---------------------------------------------------------------------------
// C-transforms
// ---------------------------------------------------------------------------

/// (f^C)_j = min_i C_ij - f_i
inline Vector ctransform(const Vector& f, const CostMatrix& C) {
  if (f.size() != C.rows()) throw InputError("ctransform: size mismatch");
  return (C.entries().colwise() - f).colwise().minCoeff().transpose();
}

/// (g^Cbar)_i = min_j C_ij - g_j
inline Vector cbar_transform(const Vector& g, const CostMatrix& C) {
  if (g.size() != C.cols()) throw InputError("cbar_transform: size mismatch");
  return (C.entries().rowwise() - g.transpose()).rowwise().minCoeff();
}

// ---------------------------------------------------------------------------
// North-west corner rule
// ---------------------------------------------------------------------------

struct Cell {
  Index i;
  Index j;
  friend bool operator<(const Cell& x, const Cell& y) {
    return x.i < y.i || (x.i == y.i && x.j < y.j);
  }
  friend bool operator==(const Cell& x, const Cell& y) { return x.i == y.i && x.j == y.j; }
};

namespace detail {

struct BasicSolution {
  Matrix plan;
  std::vector<Cell> basis;  // n + m - 1 cells forming a spanning tree (zero flows allowed)
};

// Staircase walk; every step advances exactly one index so the visited cells
// always form a spanning tree of the bipartite graph, degenerate or not.
inline BasicSolution northwest_basis(const Vector& a, const Vector& b) {
  const Index n = a.size(), m = b.size();
  const double tol = 1e-14 * std::max(1.0, a.sum());
  BasicSolution out{Matrix::Zero(n, m), {}};
  out.basis.reserve(static_cast<std::size_t>(n + m - 1));
  Index i = 0, j = 0;
  double r = a[0], c = b[0];
  while (true) {
    const double t = std::min(r, c);
    out.plan(i, j) = t;
    out.basis.push_back({i, j});
    r -= t;
    c -= t;
    if (i == n - 1 && j == m - 1) break;
    if ((r <= tol && i < n - 1) || j == m - 1) {
      ++i;
      r = a[i];
      c = std::max(c, 0.0);
    } else {
      ++j;
      c = b[j];
      r = std::max(r, 0.0);
    }
  }
  return out;
}

}  // namespace detail

/// NW corner plan of (a, b).
inline TransportPlan northwest_corner(const Histogram& a, const Histogram& b) {
  require_same_mass(a.weights(), b.weights(), "northwest_corner");
  return {detail::northwest_basis(a.weights(), b.weights()).plan, kMarginalTolerance};
}

/// NW corner plan computed on the reordered marginals a[row_order], b[col_order]
/// and mapped back to the original index order. Orders are 0-based permutations.
inline TransportPlan northwest_corner(const Histogram& a, const Histogram& b,
                                      const std::vector<Index>& row_order,
                                      const std::vector<Index>& col_order) {
  require_same_mass(a.weights(), b.weights(), "northwest_corner");
  const Index n = a.size(), m = b.size();
  if (static_cast<Index>(row_order.size()) != n || static_cast<Index>(col_order.size()) != m)
    throw InputError("northwest_corner: permutation length mismatch");
  Vector ap(n), bp(m);
  for (Index k = 0; k < n; ++k) ap[k] = a[row_order[static_cast<std::size_t>(k)]];
  for (Index k = 0; k < m; ++k) bp[k] = b[col_order[static_cast<std::size_t>(k)]];
  const Matrix local = detail::northwest_basis(ap, bp).plan;
  Matrix P = Matrix::Zero(n, m);
  for (Index k = 0; k < n; ++k)
    for (Index l = 0; l < m; ++l)
      P(row_order[static_cast<std::size_t>(k)], col_order[static_cast<std::size_t>(l)]) = local(k, l);
  return {P, kMarginalTolerance};
}

// ---------------------------------------------------------------------------
// Network simplex
// ---------------------------------------------------------------------------

struct NetworkSimplexOptions {
  long max_pivots = 0;  // 0: automatic, 50 * n * m + 1000
  bool record_objective = false;
};

struct NetworkSimplexResult {
  double value = 0.0;
  TransportPlan plan;
  DualPair duals;
  long pivots = 0;
  long degenerate_pivots = 0;
  std::vector<double> objective_trace;  // <P,C> before each pivot and at exit
  std::vector<Cell> basis;
};

namespace detail {

// Spanning tree over rows [0,n) and columns [n, n+m).
class BasisTree {
 public:
  BasisTree(Index n, Index m) : n_(n), m_(m), adj_(static_cast<std::size_t>(n + m)) {}

  void rebuild(const std::vector<Cell>& basis) {
    for (auto& l : adj_) l.clear();
    for (std::size_t k = 0; k < basis.size(); ++k) {
      adj_[static_cast<std::size_t>(basis[k].i)].push_back(k);
      adj_[static_cast<std::size_t>(n_ + basis[k].j)].push_back(k);
    }
  }

  // Potentials f_i + g_j = C_ij on tree edges; the smallest-index node of each
  // component gets potential 0. Also records parent links for path queries.
  void solve_duals(const std::vector<Cell>& basis, const Matrix& C, Vector& f, Vector& g) {
    const Index N = n_ + m_;
    parent_edge_.assign(static_cast<std::size_t>(N), -1);
    parent_.assign(static_cast<std::size_t>(N), -1);
    depth_.assign(static_cast<std::size_t>(N), -1);
    f.setZero(n_);
    g.setZero(m_);
    std::vector<Index> stack;
    for (Index root = 0; root < N; ++root) {
      if (depth_[static_cast<std::size_t>(root)] >= 0) continue;
      depth_[static_cast<std::size_t>(root)] = 0;
      stack.push_back(root);
      while (!stack.empty()) {
        const Index u = stack.back();
        stack.pop_back();
        for (std::size_t k : adj_[static_cast<std::size_t>(u)]) {
          const Cell& e = basis[k];
          const Index other = (u < n_) ? n_ + e.j : e.i;
          if (depth_[static_cast<std::size_t>(other)] >= 0) continue;
          depth_[static_cast<std::size_t>(other)] = depth_[static_cast<std::size_t>(u)] + 1;
          parent_[static_cast<std::size_t>(other)] = u;
          parent_edge_[static_cast<std::size_t>(other)] = static_cast<long>(k);
          if (other >= n_)
            g[other - n_] = C(e.i, e.j) - f[e.i];
          else
            f[other] = C(e.i, e.j) - g[e.j];
          stack.push_back(other);
        }
      }
    }
  }

  // Basis indices of the tree path from node `from` to node `to`, in walking order.
  std::vector<std::size_t> path(Index from, Index to) const {
    std::vector<std::size_t> head, tail;
    Index x = from, y = to;
    while (depth_[static_cast<std::size_t>(x)] > depth_[static_cast<std::size_t>(y)]) {
      head.push_back(static_cast<std::size_t>(parent_edge_[static_cast<std::size_t>(x)]));
      x = parent_[static_cast<std::size_t>(x)];
    }
    while (depth_[static_cast<std::size_t>(y)] > depth_[static_cast<std::size_t>(x)]) {
      tail.push_back(static_cast<std::size_t>(parent_edge_[static_cast<std::size_t>(y)]));
      y = parent_[static_cast<std::size_t>(y)];
    }
    while (x != y) {
      head.push_back(static_cast<std::size_t>(parent_edge_[static_cast<std::size_t>(x)]));
      x = parent_[static_cast<std::size_t>(x)];
      tail.push_back(static_cast<std::size_t>(parent_edge_[static_cast<std::size_t>(y)]));
      y = parent_[static_cast<std::size_t>(y)];
    }
    head.insert(head.end(), tail.rbegin(), tail.rend());
    return head;
  }

 private:
  Index n_, m_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<long> parent_edge_;
  std::vector<Index> parent_;
  std::vector<Index> depth_;
};

}  // namespace detail

/// Transportation network simplex started from the NW corner vertex.
/// Entering edge: most negative reduced cost C_ij - f_i - g_j, ties broken
/// lexicographically. Leaving edge: smallest flow on the cycle's backward
/// edges, ties broken by smallest (i, j). After a long run of degenerate pivots
/// the entering rule falls back to Bland's first-index rule until progress resumes.
inline NetworkSimplexResult network_simplex(const Vector& a, const Vector& b, const CostMatrix& cost,
                                            const NetworkSimplexOptions& options = {}) {
  const Index n = a.size(), m = b.size();
  if (cost.rows() != n || cost.cols() != m) throw InputError("network_simplex: shape mismatch");
  require_same_mass(a, b, "network_simplex");
  const Matrix& C = cost.entries();
  const double reduced_tol = 1e-12 * (1.0 + cost.max_abs());
  const long max_pivots = options.max_pivots > 0 ? options.max_pivots : 50 * n * m + 1000;
  const long bland_threshold = 2 * (n + m);

  detail::BasicSolution start = detail::northwest_basis(a, b);
  std::vector<Cell> basis = std::move(start.basis);
  std::vector<double> flow(basis.size());
  for (std::size_t k = 0; k < basis.size(); ++k) flow[k] = start.plan(basis[k].i, basis[k].j);

  detail::BasisTree tree(n, m);
  NetworkSimplexResult out;
  Vector f, g;
  long degenerate_run = 0;

  auto objective = [&] {
    double v = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) v += flow[k] * C(basis[k].i, basis[k].j);
    return v;
  };

  while (true) {
    tree.rebuild(basis);
    tree.solve_duals(basis, C, f, g);
    if (options.record_objective) out.objective_trace.push_back(objective());

    const bool bland = degenerate_run > bland_threshold;
    Index ei = -1, ej = -1;
    double best = -reduced_tol;
    for (Index i = 0; i < n && !(bland && ei >= 0); ++i) {
      for (Index j = 0; j < m; ++j) {
        const double r = C(i, j) - f[i] - g[j];
        if (r < best) {
          best = r;
          ei = i;
          ej = j;
          if (bland) break;
        }
      }
    }
    if (ei < 0) break;
    if (out.pivots >= max_pivots)
      throw ConvergenceError("network_simplex: pivot limit exceeded (cycling)");

    // Cycle: entering edge (+) then the tree path from column ej back to row ei,
    // alternating -, +, -, ... ; the last path edge touches row ei and is (-).
    const std::vector<std::size_t> cyc = tree.path(n + ej, ei);
    std::optional<std::size_t> leave;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < cyc.size(); s += 2) {
      const std::size_t k = cyc[s];
      if (!leave || flow[k] < theta || (flow[k] == theta && basis[k] < basis[*leave])) {
        theta = flow[k];
        leave = k;
      }
    }
    theta = std::max(theta, 0.0);
    for (std::size_t s = 0; s < cyc.size(); ++s) {
      const std::size_t k = cyc[s];
      flow[k] = (s % 2 == 0) ? std::max(flow[k] - theta, 0.0) : flow[k] + theta;
    }
    basis[*leave] = {ei, ej};
    flow[*leave] = theta;
    ++out.pivots;
    if (theta <= 0.0) {
      ++out.degenerate_pivots;
      ++degenerate_run;
    } else {
      degenerate_run = 0;
    }
  }

  Matrix P = Matrix::Zero(n, m);
  for (std::size_t k = 0; k < basis.size(); ++k) P(basis[k].i, basis[k].j) = flow[k];
  out.plan = {P, kMarginalTolerance};
  out.duals = {f, g};
  out.value = P.cwiseProduct(C).sum();
  out.basis = std::move(basis);
  return out;
}

inline NetworkSimplexResult network_simplex(const Histogram& a, const Histogram& b, const CostMatrix& C,
                                            const NetworkSimplexOptions& options = {}) {
  return network_simplex(a.weights(), b.weights(), C, options);
}

/// Optimal transport cost only.
inline double exact_ot_value(const Vector& a, const Vector& b, const CostMatrix& C) {
  return network_simplex(a, b, C).value;
}

// ---------------------------------------------------------------------------
// Optimality certificate
// ---------------------------------------------------------------------------

struct Certificate {
  bool optimal = false;
  bool primal_feasible = false;
  bool dual_feasible = false;
  bool complementary = false;
  MarginalResidual residual;
  std::vector<Cell> dual_violations;   // f_i + g_j > C_ij + tol
  std::vector<Cell> slack_violations;  // P_ij > tol but |C_ij - f_i - g_j| > tol
  std::string report;
};

/// Checks primal feasibility, dual feasibility and complementary slackness.
inline Certificate certify_optimality(const TransportPlan& P, const DualPair& duals, const Vector& a,
                                      const Vector& b, const CostMatrix& C,
                                      double marginal_tol = kMarginalTolerance,
                                      std::optional<double> dual_tol = std::nullopt) {
  Certificate cert;
  const double tol = dual_tol.value_or(1e-9 * (1.0 + C.max_abs()));
  if (P.rows() != a.size() || P.cols() != b.size() || C.rows() != a.size() || C.cols() != b.size() ||
      duals.f.size() != a.size() || duals.g.size() != b.size()) {
    cert.report = "shape mismatch";
    return cert;
  }
  cert.residual = marginal_residual(P.matrix, a, b);
  cert.primal_feasible = P.matrix.minCoeff() >= -marginal_tol && cert.residual.rows <= marginal_tol &&
                         cert.residual.columns <= marginal_tol;
  for (Index i = 0; i < C.rows(); ++i) {
    for (Index j = 0; j < C.cols(); ++j) {
      const double slack = C(i, j) - duals.f[i] - duals.g[j];
      if (slack < -tol) cert.dual_violations.push_back({i, j});
      if (P(i, j) > marginal_tol && std::abs(slack) > tol) cert.slack_violations.push_back({i, j});
    }
  }
  cert.dual_feasible = cert.dual_violations.empty();
  cert.complementary = cert.slack_violations.empty();
  cert.optimal = cert.primal_feasible && cert.dual_feasible && cert.complementary;

  std::ostringstream os;
  if (!cert.primal_feasible)
    os << "primal infeasible (row residual " << cert.residual.rows << ", column residual "
       << cert.residual.columns << "); ";
  for (const Cell& c : cert.dual_violations) os << "dual constraint violated at (" << c.i << "," << c.j << "); ";
  for (const Cell& c : cert.slack_violations) os << "slackness violated at (" << c.i << "," << c.j << "); ";
  cert.report = cert.optimal ? "optimal" : os.str();
  return cert;
}

inline Certificate certify_optimality(const TransportPlan& P, const DualPair& duals, const Histogram& a,
                                      const Histogram& b, const CostMatrix& C) {
  return certify_optimality(P, duals, a.weights(), b.weights(), C);
}

// ---------------------------------------------------------------------------
// Dual ascent (primal-dual method with max-flow subproblems)
// ---------------------------------------------------------------------------

struct DualAscentResult {
  double value = 0.0;
  DualPair duals;
  TransportPlan plan;
  long iterations = 0;
  std::vector<double> dual_trace;  // <f,a> + <g,b> after each dual step
};

/// Starts from the feasible pair (f, f^C) with f_i = min_j C_ij. Each round
/// computes a max flow restricted to balanced edges (C_ij = f_i + g_j); if the
/// flow does not carry all the mass, the nodes labelled from the source give
/// the ascent direction (1_S, -1_S') with the largest feasible step.
inline DualAscentResult dual_ascent(const Vector& a, const Vector& b, const CostMatrix& cost,
                                    long max_iterations = 0) {
  const Index n = a.size(), m = b.size();
  if (cost.rows() != n || cost.cols() != m) throw InputError("dual_ascent: shape mismatch");
  require_same_mass(a, b, "dual_ascent");
  const Matrix& C = cost.entries();
  const double total = a.sum();
  const double flow_tol = 1e-14 * std::max(1.0, total);
  const double balance_tol = 1e-12 * (1.0 + cost.max_abs());
  if (max_iterations <= 0) max_iterations = 100 * (n + m) * (n + m) + 1000;

  Vector f = C.rowwise().minCoeff();
  Vector g = ctransform(f, cost);
  Matrix F = Matrix::Zero(n, m);
  Vector out_flow = Vector::Zero(n), in_flow = Vector::Zero(m);

  DualAscentResult res;
  const Index N = n + m + 2, s = n + m, t = n + m + 1;
  std::vector<Index> prev(static_cast<std::size_t>(N));

  auto balanced = [&](Index i, Index j) { return C(i, j) - f[i] - g[j] <= balance_tol; };

  while (true) {
    // Augment along shortest residual paths (Edmonds-Karp).
    while (true) {
      std::fill(prev.begin(), prev.end(), -1);
      std::deque<Index> queue{s};
      prev[static_cast<std::size_t>(s)] = s;
      while (!queue.empty() && prev[static_cast<std::size_t>(t)] < 0) {
        const Index u = queue.front();
        queue.pop_front();
        auto visit = [&](Index v) {
          if (prev[static_cast<std::size_t>(v)] < 0) {
            prev[static_cast<std::size_t>(v)] = u;
            queue.push_back(v);
          }
        };
        if (u == s) {
          for (Index i = 0; i < n; ++i)
            if (a[i] - out_flow[i] > flow_tol) visit(i);
        } else if (u < n) {
          for (Index j = 0; j < m; ++j)
            if (balanced(u, j)) visit(n + j);
        } else if (u < n + m) {
          const Index j = u - n;
          if (b[j] - in_flow[j] > flow_tol) visit(t);
          for (Index i = 0; i < n; ++i)
            if (F(i, j) > flow_tol) visit(i);
        }
      }
      if (prev[static_cast<std::size_t>(t)] < 0) break;

      double bottleneck = std::numeric_limits<double>::infinity();
      for (Index v = t; v != s; v = prev[static_cast<std::size_t>(v)]) {
        const Index u = prev[static_cast<std::size_t>(v)];
        if (u == s) bottleneck = std::min(bottleneck, a[v] - out_flow[v]);
        else if (v == t) bottleneck = std::min(bottleneck, b[u - n] - in_flow[u - n]);
        else if (u >= n && v < n) bottleneck = std::min(bottleneck, F(v, u - n));
      }
      for (Index v = t; v != s; v = prev[static_cast<std::size_t>(v)]) {
        const Index u = prev[static_cast<std::size_t>(v)];
        if (u == s) out_flow[v] += bottleneck;
        else if (v == t) in_flow[u - n] += bottleneck;
        else if (u < n) F(u, v - n) += bottleneck;
        else F(v, u - n) -= bottleneck;
      }
    }

    if (total - out_flow.sum() <= 1e-12 * std::max(1.0, total)) break;
    if (res.iterations >= max_iterations)
      throw ConvergenceError("dual_ascent: iteration limit reached, dual objective " +
                             std::to_string(f.dot(a) + g.dot(b)));

    // Labelled set from the last (failed) search.
    double theta = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (prev[static_cast<std::size_t>(i)] < 0) continue;
      for (Index j = 0; j < m; ++j)
        if (prev[static_cast<std::size_t>(n + j)] < 0) theta = std::min(theta, C(i, j) - f[i] - g[j]);
    }
    if (!std::isfinite(theta) || theta <= 0.0)
      throw ConvergenceError("dual_ascent: no ascent direction found");
    for (Index i = 0; i < n; ++i)
      if (prev[static_cast<std::size_t>(i)] >= 0) f[i] += theta;
    for (Index j = 0; j < m; ++j)
      if (prev[static_cast<std::size_t>(n + j)] >= 0) g[j] -= theta;
    ++res.iterations;
    res.dual_trace.push_back(f.dot(a) + g.dot(b));
  }

  res.duals = {f, g};
  res.plan = {F, kMarginalTolerance};
  res.value = F.cwiseProduct(C).sum();
  return res;
}

inline DualAscentResult dual_ascent(const Histogram& a, const Histogram& b, const CostMatrix& C) {
  return dual_ascent(a.weights(), b.weights(), C);
}

// ---------------------------------------------------------------------------
// Auction
// ---------------------------------------------------------------------------

struct AuctionOptions {
  bool epsilon_scaling = true;
  bool record_prices = false;
};

struct AuctionResult {
  std::vector<Index> assignment;  // row i -> column assignment[i]
  Vector prices;
  double cost = 0.0;
  long iterations = 0;            // bids in the final phase
  long total_iterations = 0;      // bids over all phases
  std::vector<Vector> price_trace;
};

/// Auction algorithm for the n x n assignment problem. The returned
/// permutation is within n * epsilon of the optimal assignment cost.
/// With epsilon scaling, phases run at ||C||_inf/2, /4, ... down to epsilon,
/// warm-starting the prices.
inline AuctionResult auction(const CostMatrix& cost, double epsilon, const AuctionOptions& options = {}) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw InputError("auction: cost must be square");
  if (!(epsilon > 0.0)) throw InputError("auction: epsilon must be positive");
  const Matrix& C = cost.entries();

  AuctionResult res;
  res.prices = Vector::Zero(n);
  Vector& g = res.prices;
  std::vector<Index> owner, xi;

  auto run_phase = [&](double eps) {
    xi.assign(static_cast<std::size_t>(n), -1);
    owner.assign(static_cast<std::size_t>(n), -1);
    std::deque<Index> unassigned(static_cast<std::size_t>(n));
    std::iota(unassigned.begin(), unassigned.end(), Index{0});
    long bids = 0;
    while (!unassigned.empty()) {
      const Index i = unassigned.front();
      unassigned.pop_front();
      Index j1 = 0;
      double v1 = std::numeric_limits<double>::infinity(), v2 = v1;
      for (Index j = 0; j < n; ++j) {
        const double v = C(i, j) - g[j];
        if (v < v1) {
          v2 = v1;
          v1 = v;
          j1 = j;
        } else if (v < v2) {
          v2 = v;
        }
      }
      if (!std::isfinite(v2)) v2 = v1;
      g[j1] -= (v2 - v1) + eps;
      const Index prev_owner = owner[static_cast<std::size_t>(j1)];
      if (prev_owner >= 0) {
        xi[static_cast<std::size_t>(prev_owner)] = -1;
        unassigned.push_back(prev_owner);
      }
      owner[static_cast<std::size_t>(j1)] = i;
      xi[static_cast<std::size_t>(i)] = j1;
      ++bids;
      if (options.record_prices) res.price_trace.push_back(g);
    }
    return bids;
  };

  if (options.epsilon_scaling) {
    for (double e = cost.max_abs() / 2.0; e > epsilon; e /= 4.0) res.total_iterations += run_phase(e);
  }
  res.iterations = run_phase(epsilon);
  res.total_iterations += res.iterations;
  res.assignment = xi;
  res.cost = 0.0;
  for (Index i = 0; i < n; ++i) res.cost += C(i, xi[static_cast<std::size_t>(i)]);
  return res;
}

}  // namespace otkit
