#include <gtest/gtest.h>

#include "otkit/exact_lp.hpp"
#include "otkit/graph_w1.hpp"
#include "test_util.hpp"

using namespace otkit;
using otkit::testing::floyd_warshall;
using otkit::testing::random_histogram;

namespace {

WeightedGraph random_connected_graph(std::mt19937_64& rng, Index n, int extra) {
  std::uniform_real_distribution<double> len(0.1, 2.0);
  std::vector<GraphEdge> edges;
  for (Index v = 1; v < n; ++v) {
    std::uniform_int_distribution<Index> parent(0, v - 1);
    edges.push_back({parent(rng), v, len(rng)});
  }
  std::uniform_int_distribution<Index> node(0, n - 1);
  for (int k = 0; k < extra; ++k) {
    const Index i = node(rng), j = node(rng);
    if (i != j) edges.push_back({i, j, len(rng)});
  }
  return WeightedGraph(n, edges);
}

std::vector<std::tuple<Index, Index, double>> as_tuples(const WeightedGraph& G) {
  std::vector<std::tuple<Index, Index, double>> t;
  for (const auto& e : G.edges()) t.emplace_back(e.i, e.j, e.length);
  return t;
}

Vector random_signed(std::mt19937_64& rng, Index n) {
  return random_histogram(rng, n) - random_histogram(rng, n);
}

}  // namespace

TEST(WeightedGraph, Validation) {
  EXPECT_THROW(WeightedGraph(0, {}), InputError);
  EXPECT_THROW(WeightedGraph(2, {{0, 2, 1.0}}), InputError);
  EXPECT_THROW(WeightedGraph(2, {{0, 0, 1.0}}), InputError);
  EXPECT_THROW(WeightedGraph(2, {{0, 1, 0.0}}), InputError);
  EXPECT_THROW(geodesic_matrix(WeightedGraph(3, {{0, 1, 1.0}})), InputError);
  const WeightedGraph g = WeightedGraph::grid(2, 3);
  EXPECT_EQ(g.edges().size(), 7u);
}

TEST(Geodesic, MatchesFloydWarshall) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const WeightedGraph G = random_connected_graph(rng, 9, 6);
    EXPECT_LT((geodesic_matrix(G) - floyd_warshall(9, as_tuples(G))).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(GraphW1, PathGraphClosedForm) {
  // On a path, the flow through edge (v, v+1) is the prefix sum of a.
  std::mt19937_64 rng(2);
  const Index n = 10;
  std::vector<GraphEdge> edges;
  std::uniform_real_distribution<double> len(0.5, 1.5);
  for (Index v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1, len(rng)});
  const WeightedGraph G(n, edges);
  const Vector a = random_signed(rng, n);
  double expect = 0.0, prefix = 0.0;
  for (Index v = 0; v + 1 < n; ++v) {
    prefix += a[v];
    expect += std::abs(prefix) * edges[static_cast<std::size_t>(v)].length;
  }
  EXPECT_NEAR(w1_graph_flow(a, G).value, expect, 1e-13);
  EXPECT_NEAR(w1_graph_potential(a, G).value, expect, 1e-13);
}

TEST(GraphW1, FlowPotentialAndMinCostFlowAgree) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Index n = 8;
    const WeightedGraph G = random_connected_graph(rng, n, 8);
    const Vector a = random_signed(rng, n);
    const GraphFlowResult flow = w1_graph_flow(a, G);
    const GraphPotentialResult pot = w1_graph_potential(a, G);
    const GraphFlowResult mcf = w1_graph_min_cost_flow(a, G);
    // Independent value: transport a+ -> a- over Floyd-Warshall distances.
    const Vector ap = a.cwiseMax(0.0), am = (-a).cwiseMax(0.0);
    const double lp = exact_ot_value(ap, am, CostMatrix(floyd_warshall(n, as_tuples(G))));
    EXPECT_NEAR(flow.value, lp, 1e-12);
    EXPECT_NEAR(pot.value, lp, 1e-12);
    EXPECT_NEAR(mcf.value, lp, 1e-12);
    EXPECT_LT((flow.flow.divergence(G) - a).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((mcf.flow.divergence(G) - a).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_NEAR(flow.flow.cost(G), flow.value, 1e-13);
    EXPECT_GE(flow.flow.forward.minCoeff(), 0.0);
    EXPECT_GE(flow.flow.backward.minCoeff(), 0.0);
    for (const auto& e : G.edges()) EXPECT_LE(std::abs(pot.potential[e.i] - pot.potential[e.j]), e.length + 1e-12);
    EXPECT_NEAR(pot.potential.dot(a), pot.value, 1e-12);
  }
}

TEST(GraphW1, RejectsUnbalancedInput) {
  const WeightedGraph G = WeightedGraph::grid(2, 2);
  EXPECT_THROW(w1_graph_flow(Vector::Ones(4), G), InputError);
  EXPECT_THROW(w1_graph_potential(Vector::Zero(3), G), InputError);
  EXPECT_EQ(w1_graph_flow(Vector::Zero(4), G).value, 0.0);
}
