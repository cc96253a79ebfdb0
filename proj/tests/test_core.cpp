#include <gtest/gtest.h>

#include "otkit/core.hpp"
#include "test_util.hpp"

using namespace otkit;
using otkit::testing::random_histogram;
using otkit::testing::random_matrix;

TEST(Histogram, RejectsBadWeights) {
  EXPECT_THROW(Histogram({0.5, 0.6}), InputError);
  EXPECT_THROW(Histogram({-0.1, 1.1}), InputError);
  EXPECT_THROW(Histogram{Vector()}, InputError);
  EXPECT_THROW(Histogram::normalized(Vector::Zero(3)), InputError);
  EXPECT_NO_THROW(Histogram({2.0, 3.0}, MassMode::mass));
}

TEST(Histogram, NormalizedAndUniform) {
  const Histogram h = Histogram::normalized(Vector::LinSpaced(4, 1.0, 4.0));
  EXPECT_NEAR(h.total(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(h[3], 0.4);
  const Histogram u = Histogram::uniform(5);
  EXPECT_DOUBLE_EQ(u[2], 0.2);
  EXPECT_TRUE(u.strictly_positive());
}

TEST(DiscreteMeasure, DroppingZerosKeepsPositiveAtoms) {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  EXPECT_THROW(DiscreteMeasure(x, Histogram({0.5, 0.0, 0.5})), InputError);
  const DiscreteMeasure m = DiscreteMeasure::dropping_zeros(x, Histogram({0.5, 0.0, 0.5}));
  ASSERT_EQ(m.size(), 2);
  EXPECT_EQ(m.points()(1, 0), 2.0);
}

TEST(CostMatrix, SignedFlag) {
  Matrix C(1, 2);
  C << -1.0, 2.0;
  EXPECT_THROW(CostMatrix{C}, InputError);
  EXPECT_NO_THROW(CostMatrix(C, {}, true));
  EXPECT_THROW(CostMatrix(Matrix::Constant(1, 1, std::nan(""))), InputError);
}

TEST(BuildCost, MatchesPairwiseNorms) {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(rng, 5, 3), y = random_matrix(rng, 4, 3);
  for (double p : {1.0, 1.5, 2.0}) {
    const CostMatrix C = build_cost(DiscreteMeasure::empirical(x), DiscreteMeasure::empirical(y), p);
    EXPECT_LT((C.entries() - otkit::testing::pairwise_power(x, y, p)).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(build_cost(DiscreteMeasure::empirical(x), DiscreteMeasure::empirical(Matrix::Zero(2, 2))), InputError);
}

TEST(DualPair, CenteringPreservesSums) {
  std::mt19937_64 rng(2);
  DualPair d{random_matrix(rng, 4, 1), random_matrix(rng, 3, 1)};
  const DualPair c = d.centered();
  EXPECT_NEAR(c.f.sum(), 0.0, 1e-14);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_NEAR(c.f[i] + c.g[j], d.f[i] + d.g[j], 1e-14);
}

TEST(DualPair, MaxViolation) {
  DualPair d{Vector::Constant(2, 1.0), Vector::Constant(2, 0.5)};
  EXPECT_DOUBLE_EQ(d.max_violation(CostMatrix(Matrix::Constant(2, 2, 1.0))), 0.5);
  EXPECT_DOUBLE_EQ(d.max_violation(CostMatrix(Matrix::Constant(2, 2, 2.0))), 0.0);
}

TEST(Scalings, RoundTripDuals) {
  std::mt19937_64 rng(3);
  const DualPair d{random_matrix(rng, 5, 1, -1, 1), random_matrix(rng, 5, 1, -1, 1)};
  const DualPair back = Scalings::from_duals(d, 0.3).duals();
  EXPECT_LT((back.f - d.f).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((back.g - d.g).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ExpElementwise, UnderflowsToZero) {
  Vector x(3);
  x << -1e6, 0.0, -800.0;
  const Vector e = exp_elementwise(x);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_EQ(e[1], 1.0);
  EXPECT_EQ(e[2], 0.0);
}

TEST(Entropy, ProductPlan) {
  // H(a b^T) = H(a) + H(b) - 1 with H(p) = -sum p (log p - 1).
  std::mt19937_64 rng(4);
  const Vector a = random_histogram(rng, 4), b = random_histogram(rng, 6);
  const double ha = entropy(a), hb = entropy(b);
  EXPECT_NEAR(entropy(a * b.transpose()), ha + hb - 1.0, 1e-13);
  Matrix z = Matrix::Zero(2, 2);
  z(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(entropy(z), 1.0);
}

TEST(MarginalResidual, ShapesAndValues) {
  Matrix P(2, 2);
  P << 0.25, 0.25, 0.25, 0.25;
  const Vector a = Vector::Constant(2, 0.5);
  EXPECT_EQ(marginal_residual(P, a, a).total(), 0.0);
  Vector b(2);
  b << 0.7, 0.3;
  EXPECT_NEAR(marginal_residual(P, a, b).columns, 0.4, 1e-15);
  EXPECT_THROW(marginal_residual(P, Vector::Ones(3), a), InputError);
}

TEST(BarycentricProjection, PermutationPlanMapsPoints) {
  Matrix y(3, 1);
  y << 10.0, 20.0, 30.0;
  TransportPlan P{Matrix::Zero(3, 3)};
  P.matrix(0, 2) = P.matrix(1, 0) = P.matrix(2, 1) = 1.0 / 3.0;
  const Matrix m = barycentric_projection(P, Histogram::uniform(3), DiscreteMeasure::empirical(y));
  EXPECT_DOUBLE_EQ(m(0, 0), 30.0);
  EXPECT_DOUBLE_EQ(m(1, 0), 10.0);
  EXPECT_DOUBLE_EQ(m(2, 0), 20.0);
}

TEST(PushForward, KeepsWeightsAndAtoms) {
  Matrix x(2, 1);
  x << 1.0, 1.5;
  const DiscreteMeasure m(x, Histogram({0.3, 0.7}));
  const DiscreteMeasure p = push_forward(m, [](const Eigen::RowVectorXd&) { return Eigen::RowVectorXd::Zero(2); });
  EXPECT_EQ(p.size(), 2);
  EXPECT_EQ(p.dim(), 2);
  EXPECT_DOUBLE_EQ(p.weights()[1], 0.7);
}
