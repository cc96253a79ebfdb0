#include <gtest/gtest.h>

#include "otkit/exact_lp.hpp"
#include "test_util.hpp"

using namespace otkit;
using otkit::testing::permutation_minimum;
using otkit::testing::random_histogram;
using otkit::testing::random_integer_costs;
using otkit::testing::random_matrix;

namespace {

// Minimum over all basic feasible solutions: every choice of n + m - 1 cells
// whose equality system has a unique nonnegative solution.
double vertex_enumeration(const Vector& a, const Vector& b, const Matrix& C) {
  const Index n = a.size(), m = b.size(), k = n + m - 1;
  Vector rhs(n + m);
  rhs << a, b;
  std::vector<int> pick(static_cast<std::size_t>(n * m), 0);
  std::fill(pick.end() - k, pick.end(), 1);
  double best = std::numeric_limits<double>::infinity();
  do {
    Matrix A = Matrix::Zero(n + m, k);
    std::vector<Index> cells;
    for (Index c = 0; c < n * m; ++c)
      if (pick[static_cast<std::size_t>(c)]) cells.push_back(c);
    for (Index t = 0; t < k; ++t) {
      A(cells[t] / m, t) = 1.0;
      A(n + cells[t] % m, t) = 1.0;
    }
    Eigen::FullPivLU<Matrix> lu(A);
    if (lu.rank() < k) continue;
    const Vector x = lu.solve(rhs);
    if ((A * x - rhs).norm() > 1e-10 || x.minCoeff() < -1e-12) continue;
    double v = 0.0;
    for (Index t = 0; t < k; ++t) v += x[t] * C(cells[t] / m, cells[t] % m);
    best = std::min(best, v);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace

TEST(CTransform, DefinitionAndFeasibility) {
  std::mt19937_64 rng(1);
  const CostMatrix C(random_matrix(rng, 4, 5));
  const Vector f = random_matrix(rng, 4, 1);
  const Vector g = ctransform(f, C);
  for (Index j = 0; j < 5; ++j) {
    double m = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < 4; ++i) m = std::min(m, C(i, j) - f[i]);
    EXPECT_DOUBLE_EQ(g[j], m);
  }
  EXPECT_LE(DualPair({f, g}).max_violation(C), 1e-15);
  // f^{C Cbar} >= f and the triple transform is idempotent.
  const Vector fcc = cbar_transform(g, C);
  EXPECT_TRUE(((fcc - f).array() >= -1e-15).all());
  EXPECT_LT((ctransform(fcc, C) - g).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(ctransform(Vector::Zero(3), C), InputError);
}

TEST(NorthwestCorner, TextbookExample) {
  const TransportPlan P = northwest_corner(Histogram({0.2, 0.5, 0.3}), Histogram({0.5, 0.1, 0.4}));
  Matrix expect(3, 3);
  expect << 0.2, 0, 0, 0.3, 0.1, 0.1, 0, 0, 0.3;
  EXPECT_LT((P.matrix - expect).cwiseAbs().maxCoeff(), 1e-16);
  EXPECT_EQ(P.nonzeros(), 5);
}

TEST(NorthwestCorner, PermutedOrdersRespectMarginals) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Histogram a(random_histogram(rng, 5)), b(random_histogram(rng, 4));
    std::vector<Index> r{4, 2, 0, 1, 3}, c{1, 3, 0, 2};
    const TransportPlan P = northwest_corner(a, b, r, c);
    EXPECT_LT(validate_plan(P, a, b).total(), 1e-14);
    EXPECT_LE(P.nonzeros(), 8);
    EXPECT_GE(P.matrix.minCoeff(), 0.0);
  }
  EXPECT_THROW(northwest_corner(Histogram({1.0}), Histogram({2.0}, MassMode::mass)), InputError);
}

TEST(NetworkSimplex, MatchesVertexEnumeration) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const Index n = 2 + t % 2, m = 3;
    const Vector a = random_histogram(rng, n), b = random_histogram(rng, m);
    const CostMatrix C(random_matrix(rng, n, m));
    const NetworkSimplexResult r = network_simplex(a, b, C);
    EXPECT_NEAR(r.value, vertex_enumeration(a, b, C.entries()), 1e-12);
    EXPECT_TRUE(certify_optimality(r.plan, r.duals, a, b, C).optimal);
    EXPECT_NEAR(r.duals.f.dot(a) + r.duals.g.dot(b), r.value, 1e-12);
  }
}

TEST(NetworkSimplex, DegenerateIntegerInstances) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const Index n = 6;
    const Vector u = Vector::Constant(n, 1.0 / n);
    const CostMatrix C(random_integer_costs(rng, n, n, 5));
    const NetworkSimplexResult r = network_simplex(u, u, C);
    EXPECT_NEAR(r.value, permutation_minimum(C.entries()) / n, 1e-12);
    EXPECT_EQ(static_cast<Index>(r.basis.size()), 2 * n - 1);
  }
}

TEST(NetworkSimplex, ObjectiveTraceIsMonotone) {
  std::mt19937_64 rng(5);
  const Vector a = random_histogram(rng, 8), b = random_histogram(rng, 9);
  const CostMatrix C(random_matrix(rng, 8, 9));
  const NetworkSimplexResult r = network_simplex(a, b, C, {0, true});
  ASSERT_FALSE(r.objective_trace.empty());
  for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
    EXPECT_LE(r.objective_trace[k], r.objective_trace[k - 1] + 1e-14);
  EXPECT_NEAR(r.objective_trace.back(), r.value, 1e-14);
}

TEST(NetworkSimplex, RejectsMismatchedMass) {
  EXPECT_THROW(network_simplex(Vector::Constant(2, 0.5), Vector::Constant(2, 0.4), CostMatrix(Matrix::Ones(2, 2))),
               InputError);
}

TEST(Certificate, DetectsSuboptimalPlan) {
  Matrix Cm(2, 2);
  Cm << 0, 1, 1, 0;
  const CostMatrix C(Cm);
  const Vector u = Vector::Constant(2, 0.5);
  TransportPlan anti{Matrix::Zero(2, 2)};
  anti.matrix(0, 1) = anti.matrix(1, 0) = 0.5;
  const DualPair zero{Vector::Zero(2), Vector::Zero(2)};
  const Certificate c = certify_optimality(anti, zero, u, u, C);
  EXPECT_TRUE(c.primal_feasible);
  EXPECT_TRUE(c.dual_feasible);
  EXPECT_FALSE(c.complementary);
  EXPECT_FALSE(c.optimal);
  EXPECT_EQ(c.slack_violations.size(), 2u);
}

TEST(DualAscent, AgreesWithSimplex) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Vector a = random_histogram(rng, 7), b = random_histogram(rng, 5);
    const CostMatrix C(random_matrix(rng, 7, 5));
    const DualAscentResult d = dual_ascent(a, b, C);
    EXPECT_NEAR(d.value, network_simplex(a, b, C).value, 1e-11);
    EXPECT_LT(marginal_residual(d.plan.matrix, a, b).total(), 1e-12);
    EXPECT_LE(d.duals.max_violation(C), 1e-12);
    for (std::size_t k = 1; k < d.dual_trace.size(); ++k) EXPECT_GE(d.dual_trace[k], d.dual_trace[k - 1] - 1e-14);
  }
}

TEST(Auction, WithinNEpsilonOfOptimum) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const Index n = 6;
    const CostMatrix C(random_matrix(rng, n, n));
    const double eps = 1e-3;
    const AuctionResult r = auction(C, eps);
    std::vector<Index> sorted = r.assignment;
    std::sort(sorted.begin(), sorted.end());
    for (Index i = 0; i < n; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
    const double best = permutation_minimum(C.entries());
    EXPECT_GE(r.cost, best - 1e-14);
    EXPECT_LE(r.cost, best + n * eps);
  }
}

TEST(Auction, IntegerCostsSmallEpsilonIsExact) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Index n = 5;
    const CostMatrix C(random_integer_costs(rng, n, n, 20));
    const AuctionResult r = auction(C, 1.0 / (n + 1), {false, false});
    EXPECT_DOUBLE_EQ(r.cost, permutation_minimum(C.entries()));
  }
  EXPECT_THROW(auction(CostMatrix(Matrix::Ones(2, 3)), 0.1), InputError);
  EXPECT_THROW(auction(CostMatrix(Matrix::Ones(2, 2)), 0.0), InputError);
}
