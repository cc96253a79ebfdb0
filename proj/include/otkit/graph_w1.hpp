#pragma once

// W1 on weighted graphs with the geodesic distance: flow (Beckmann) and
// Lipschitz-potential formulations.

#include "otkit/exact_lp.hpp"

#include <queue>

namespace otkit {

struct GraphEdge {
  Index i = 0;
  Index j = 0;
  double length = 1.0;
};

/// Undirected graph with positive edge lengths.
class WeightedGraph {
 public:
  WeightedGraph() = default;
  WeightedGraph(Index n, std::vector<GraphEdge> edges) : n_(n), edges_(std::move(edges)) {
    if (n_ <= 0) throw InputError("graph: need at least one node");
    adj_.assign(static_cast<std::size_t>(n_), {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const GraphEdge& ed = edges_[e];
      if (ed.i < 0 || ed.j < 0 || ed.i >= n_ || ed.j >= n_) throw InputError("graph: edge index out of range");
      if (ed.i == ed.j) throw InputError("graph: self-loops are not allowed");
      if (!(ed.length > 0.0) || !std::isfinite(ed.length)) throw InputError("graph: edge lengths must be positive");
      adj_[static_cast<std::size_t>(ed.i)].push_back(e);
      adj_[static_cast<std::size_t>(ed.j)].push_back(e);
    }
  }

  Index nodes() const { return n_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const std::vector<std::size_t>& incident(Index v) const { return adj_[static_cast<std::size_t>(v)]; }
  Index other(std::size_t e, Index v) const { return edges_[e].i == v ? edges_[e].j : edges_[e].i; }

  /// r x c 4-neighbour grid with unit lengths; node index = row * c + col.
  static WeightedGraph grid(Index r, Index c, double length = 1.0) {
    std::vector<GraphEdge> edges;
    for (Index y = 0; y < r; ++y)
      for (Index x = 0; x < c; ++x) {
        const Index v = y * c + x;
        if (x + 1 < c) edges.push_back({v, v + 1, length});
        if (y + 1 < r) edges.push_back({v, v + c, length});
      }
    return WeightedGraph(r * c, std::move(edges));
  }

 private:
  Index n_ = 0;
  std::vector<GraphEdge> edges_;
  std::vector<std::vector<std::size_t>> adj_;
};

namespace detail {

struct ShortestPathTree {
  Vector dist;
  std::vector<long> via_edge;  // edge used to reach each node, -1 at the root
};

inline ShortestPathTree dijkstra(const WeightedGraph& G, Index root) {
  const Index n = G.nodes();
  ShortestPathTree t{Vector::Constant(n, std::numeric_limits<double>::infinity()),
                     std::vector<long>(static_cast<std::size_t>(n), -1)};
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  t.dist[root] = 0.0;
  heap.push({0.0, root});
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > t.dist[v]) continue;
    for (std::size_t e : G.incident(v)) {
      const Index u = G.other(e, v);
      const double nd = d + G.edges()[e].length;
      if (nd < t.dist[u]) {
        t.dist[u] = nd;
        t.via_edge[static_cast<std::size_t>(u)] = static_cast<long>(e);
        heap.push({nd, u});
      }
    }
  }
  return t;
}

}  // namespace detail

/// All-pairs shortest path lengths (Dijkstra from every node).
inline Matrix geodesic_matrix(const WeightedGraph& G) {
  const Index n = G.nodes();
  Matrix D(n, n);
  for (Index v = 0; v < n; ++v) {
    const detail::ShortestPathTree t = detail::dijkstra(G, v);
    if (!t.dist.allFinite()) throw InputError("geodesic_matrix: graph is disconnected");
    D.row(v) = t.dist.transpose();
  }
  return 0.5 * (D + D.transpose());
}

/// Nonnegative flow on both orientations of each edge: forward is i -> j.
struct EdgeFlow {
  Vector forward;
  Vector backward;

  /// div(s)_v = outflow - inflow.
  Vector divergence(const WeightedGraph& G) const {
    Vector div = Vector::Zero(G.nodes());
    for (std::size_t e = 0; e < G.edges().size(); ++e) {
      const Index k = static_cast<Index>(e);
      const double net = forward[k] - backward[k];
      div[G.edges()[e].i] += net;
      div[G.edges()[e].j] -= net;
    }
    return div;
  }

  double cost(const WeightedGraph& G) const {
    double acc = 0.0;
    for (std::size_t e = 0; e < G.edges().size(); ++e) {
      const Index k = static_cast<Index>(e);
      acc += G.edges()[e].length * (forward[k] + backward[k]);
    }
    return acc;
  }
};

struct GraphFlowResult {
  double value = 0.0;
  EdgeFlow flow;
};

struct GraphPotentialResult {
  double value = 0.0;
  Vector potential;
};

namespace detail {

inline void require_balanced(const Vector& a, const WeightedGraph& G, const char* who) {
  if (a.size() != G.nodes()) throw InputError(std::string(who) + ": vector size must equal node count");
  if (!a.allFinite()) throw InputError(std::string(who) + ": entries must be finite");
  if (std::abs(a.sum()) > 1e-10) throw InputError(std::string(who) + ": entries must sum to zero");
}

// Transport between the positive part (rows) and negative part (columns) of a.
struct SignedSplit {
  std::vector<Index> pos, neg;
  Vector mass_pos, mass_neg;
};

inline SignedSplit split_signed(const Vector& a) {
  SignedSplit s;
  for (Index v = 0; v < a.size(); ++v) {
    if (a[v] > 0.0) s.pos.push_back(v);
    else if (a[v] < 0.0) s.neg.push_back(v);
  }
  s.mass_pos.resize(static_cast<Index>(s.pos.size()));
  s.mass_neg.resize(static_cast<Index>(s.neg.size()));
  for (std::size_t k = 0; k < s.pos.size(); ++k) s.mass_pos[static_cast<Index>(k)] = a[s.pos[k]];
  for (std::size_t k = 0; k < s.neg.size(); ++k) s.mass_neg[static_cast<Index>(k)] = -a[s.neg[k]];
  // Rebalance the last entry so both parts have identical floating-point totals.
  if (!s.neg.empty()) s.mass_neg[s.mass_neg.size() - 1] += s.mass_pos.sum() - s.mass_neg.sum();
  return s;
}

inline NetworkSimplexResult transport_signed(const SignedSplit& s, const Matrix& D) {
  Matrix C(static_cast<Index>(s.pos.size()), static_cast<Index>(s.neg.size()));
  for (std::size_t p = 0; p < s.pos.size(); ++p)
    for (std::size_t q = 0; q < s.neg.size(); ++q)
      C(static_cast<Index>(p), static_cast<Index>(q)) = D(s.pos[p], s.neg[q]);
  return network_simplex(s.mass_pos, s.mass_neg, CostMatrix(C, {"geodesic", 1.0}));
}

}  // namespace detail

/// min sum w s subject to div(s) = a, by transport between a+ and a- over
/// the geodesic matrix, each pair routed along a shortest path.
inline GraphFlowResult w1_graph_flow(const Vector& a, const WeightedGraph& G) {
  detail::require_balanced(a, G, "w1_graph_flow");
  const auto E = static_cast<Index>(G.edges().size());
  GraphFlowResult out{0.0, {Vector::Zero(E), Vector::Zero(E)}};
  const detail::SignedSplit s = detail::split_signed(a);
  if (s.pos.empty() || s.neg.empty()) return out;

  std::vector<detail::ShortestPathTree> trees;
  Matrix D(G.nodes(), G.nodes());
  for (Index v = 0; v < G.nodes(); ++v) {
    trees.push_back(detail::dijkstra(G, v));
    if (!trees.back().dist.allFinite()) throw InputError("w1_graph_flow: graph is disconnected");
    D.row(v) = trees.back().dist.transpose();
  }
  const NetworkSimplexResult lp = detail::transport_signed(s, D);

  // Route pos[p] -> neg[q]: walk back from neg[q] in the tree rooted at pos[p].
  Vector fwd = Vector::Zero(E), bwd = Vector::Zero(E);
  for (std::size_t p = 0; p < s.pos.size(); ++p) {
    const detail::ShortestPathTree& t = trees[static_cast<std::size_t>(s.pos[p])];
    for (std::size_t q = 0; q < s.neg.size(); ++q) {
      const double mass = lp.plan(static_cast<Index>(p), static_cast<Index>(q));
      if (mass <= 0.0) continue;
      Index v = s.neg[q];
      while (v != s.pos[p]) {
        const auto e = static_cast<std::size_t>(t.via_edge[static_cast<std::size_t>(v)]);
        const Index u = G.other(e, v);  // flow goes u -> v
        if (G.edges()[e].i == u) fwd[static_cast<Index>(e)] += mass;
        else bwd[static_cast<Index>(e)] += mass;
        v = u;
      }
    }
  }
  // Cancel opposite flows on the same edge.
  const Vector net = fwd - bwd;
  out.flow.forward = net.cwiseMax(0.0);
  out.flow.backward = (-net).cwiseMax(0.0);
  out.value = out.flow.cost(G);
  return out;
}

/// max <f, a> subject to |f_i - f_j| <= w_ij on every edge. Potentials come
/// from the transport duals, extended by f(x) = min_q d(x, neg_q) - g_q.
inline GraphPotentialResult w1_graph_potential(const Vector& a, const WeightedGraph& G) {
  detail::require_balanced(a, G, "w1_graph_potential");
  GraphPotentialResult out{0.0, Vector::Zero(G.nodes())};
  const detail::SignedSplit s = detail::split_signed(a);
  if (s.pos.empty() || s.neg.empty()) return out;
  const Matrix D = geodesic_matrix(G);
  const NetworkSimplexResult lp = detail::transport_signed(s, D);
  const Vector& g = lp.duals.g;
  for (Index x = 0; x < G.nodes(); ++x) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < s.neg.size(); ++q)
      best = std::min(best, D(x, s.neg[q]) - g[static_cast<Index>(q)]);
    out.potential[x] = best;
  }
  out.value = out.potential.dot(a);
  return out;
}

/// Direct min-cost flow on the graph (successive shortest paths with
/// Bellman-Ford); independent of the transport reduction, for small graphs.
inline GraphFlowResult w1_graph_min_cost_flow(const Vector& a, const WeightedGraph& G) {
  detail::require_balanced(a, G, "w1_graph_min_cost_flow");
  const Index n = G.nodes();
  const auto E = static_cast<Index>(G.edges().size());
  Vector fwd = Vector::Zero(E), bwd = Vector::Zero(E);
  Vector supply = a;
  const double tol = 1e-13 * (1.0 + a.cwiseAbs().sum());
  for (long round = 0; round < 100 * (n + E) * (n + E) + 100; ++round) {
    // Residual arcs: every edge in both directions (uncapacitated); the
    // reverse of an existing flow has negative cost and capacity = flow.
    Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
    std::vector<long> pred_arc(static_cast<std::size_t>(n), -1);
    for (Index v = 0; v < n; ++v)
      if (supply[v] > tol) dist[v] = 0.0;
    if (!(dist.array() == 0.0).any()) break;
    for (Index pass = 0; pass < n; ++pass) {
      bool changed = false;
      for (Index e = 0; e < E; ++e) {
        const GraphEdge& ed = G.edges()[static_cast<std::size_t>(e)];
        // arc 2e: i -> j, arc 2e+1: j -> i; cost is -w when it cancels opposite flow
        const double cij = bwd[e] > 0.0 ? -ed.length : ed.length;
        const double cji = fwd[e] > 0.0 ? -ed.length : ed.length;
        if (dist[ed.i] + cij < dist[ed.j] - 1e-15) {
          dist[ed.j] = dist[ed.i] + cij;
          pred_arc[static_cast<std::size_t>(ed.j)] = 2 * e;
          changed = true;
        }
        if (dist[ed.j] + cji < dist[ed.i] - 1e-15) {
          dist[ed.i] = dist[ed.j] + cji;
          pred_arc[static_cast<std::size_t>(ed.i)] = 2 * e + 1;
          changed = true;
        }
      }
      if (!changed) break;
    }
    Index sink = -1;
    for (Index v = 0; v < n; ++v)
      if (supply[v] < -tol && std::isfinite(dist[v]) && (sink < 0 || dist[v] < dist[sink])) sink = v;
    if (sink < 0) break;
    // Bottleneck along the path.
    double amount = -supply[sink];
    Index v = sink;
    while (pred_arc[static_cast<std::size_t>(v)] >= 0) {
      const long arc = pred_arc[static_cast<std::size_t>(v)];
      const Index e = arc / 2;
      const GraphEdge& ed = G.edges()[static_cast<std::size_t>(e)];
      if (arc % 2 == 0 && bwd[e] > 0.0) amount = std::min(amount, bwd[e]);
      if (arc % 2 == 1 && fwd[e] > 0.0) amount = std::min(amount, fwd[e]);
      v = arc % 2 == 0 ? ed.i : ed.j;
    }
    amount = std::min(amount, supply[v]);
    Index w = sink;
    while (pred_arc[static_cast<std::size_t>(w)] >= 0) {
      const long arc = pred_arc[static_cast<std::size_t>(w)];
      const Index e = arc / 2;
      const GraphEdge& ed = G.edges()[static_cast<std::size_t>(e)];
      if (arc % 2 == 0) {
        if (bwd[e] > 0.0) bwd[e] = std::max(0.0, bwd[e] - amount);
        else fwd[e] += amount;
        w = ed.i;
      } else {
        if (fwd[e] > 0.0) fwd[e] = std::max(0.0, fwd[e] - amount);
        else bwd[e] += amount;
        w = ed.j;
      }
    }
    supply[v] -= amount;
    supply[sink] += amount;
  }
  GraphFlowResult out{0.0, {fwd, bwd}};
  out.value = out.flow.cost(G);
  return out;
}

}  // namespace otkit
