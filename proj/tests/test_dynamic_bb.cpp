#include <gtest/gtest.h>

#include "otkit/closed_form.hpp"
#include "otkit/dynamic_bb.hpp"
#include "otkit/exact_lp.hpp"
#include "test_util.hpp"

using namespace otkit;
using otkit::testing::cell_centres;
using otkit::testing::gaussian_cells;
using otkit::testing::random_histogram;
using otkit::testing::random_matrix;

namespace {

// Objective of the theta prox after eliminating J' (optimal J' = a' J / (a' + 2 gamma)).
double reduced_prox_objective(double ap, double a, double jj, double gamma) {
  if (ap <= 0.0) return 0.5 * (a * a + jj);
  const double s = ap + 2.0 * gamma;
  return 0.5 * (a - ap) * (a - ap) + 0.5 * jj * (2.0 * gamma / s) * (2.0 * gamma / s) + gamma * jj * ap / (s * s);
}

double golden_minimum(double a, double jj, double gamma, double* arg) {
  double lo = 0.0, hi = std::abs(a) + std::sqrt(jj) + 10.0;
  // Coarse scan, then golden section around the best sample.
  double best = lo, bestv = reduced_prox_objective(lo, a, jj, gamma);
  for (int k = 1; k <= 2000; ++k) {
    const double x = hi * k / 2000.0;
    const double v = reduced_prox_objective(x, a, jj, gamma);
    if (v < bestv) {
      bestv = v;
      best = x;
    }
  }
  lo = std::max(0.0, best - hi / 2000.0);
  hi = best + hi / 2000.0;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    if (reduced_prox_objective(x1, a, jj, gamma) < reduced_prox_objective(x2, a, jj, gamma)) hi = x2;
    else lo = x1;
  }
  const double x = 0.5 * (lo + hi);
  *arg = reduced_prox_objective(x, a, jj, gamma) < bestv ? x : best;
  return std::min(bestv, reduced_prox_objective(x, a, jj, gamma));
}

}  // namespace

TEST(Theta, Values) {
  EXPECT_DOUBLE_EQ(theta(2.0, 8.0), 4.0);
  EXPECT_EQ(theta(0.0, 0.0), 0.0);
  EXPECT_TRUE(std::isinf(theta(0.0, 1.0)));
  EXPECT_TRUE(std::isinf(theta(-1.0, 0.0)));
}

TEST(ThetaProx, MatchesScalarSearch) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0), g(0.01, 2.0);
  for (int t = 0; t < 300; ++t) {
    const double a = u(rng), gamma = g(rng);
    const Eigen::Vector2d J(u(rng), t % 3 == 0 ? 0.0 : u(rng));
    const ThetaProx p = theta_prox(a, J, gamma);
    double arg = 0.0;
    const double best = golden_minimum(a, J.squaredNorm(), gamma, &arg);
    const double got = 0.5 * ((a - p.a) * (a - p.a) + (J - p.J).squaredNorm()) + gamma * theta(p.a, p.J.squaredNorm());
    EXPECT_LE(got, best + 1e-10) << "a=" << a << " gamma=" << gamma;
    EXPECT_NEAR(p.a, arg, 1e-6);
  }
}

TEST(ThetaProx, ZeroWhenMassIsVeryNegative) {
  const ThetaProx p = theta_prox(-5.0, Eigen::Vector2d(0.1, 0.0), 0.1);
  EXPECT_EQ(p.a, 0.0);
  EXPECT_EQ(p.J.norm(), 0.0);
}

TEST(Mccann, EndpointsAndDiracs) {
  Matrix x(1, 2), y(1, 2);
  x << 0.0, 0.0;
  y << 1.0, 2.0;
  const DiscreteMeasure a = DiscreteMeasure::empirical(x), b = DiscreteMeasure::empirical(y);
  const TransportPlan P{Matrix::Ones(1, 1)};
  for (double t : {0.0, 0.25, 1.0}) {
    const DiscreteMeasure m = mccann_interpolate(P, a, b, t);
    ASSERT_EQ(m.size(), 1);
    EXPECT_DOUBLE_EQ(m.points()(0, 0), t);
    EXPECT_DOUBLE_EQ(m.points()(0, 1), 2.0 * t);
  }
  EXPECT_THROW(mccann_interpolate(P, a, b, 1.5), InputError);
}

TEST(Mccann, GeodesicDistances) {
  // W2(mu_s, mu_t) = |t - s| W2(alpha, beta) along the interpolation.
  std::mt19937_64 rng(2);
  const DiscreteMeasure a(random_matrix(rng, 6, 2), Histogram(random_histogram(rng, 6)));
  const DiscreteMeasure b(random_matrix(rng, 5, 2), Histogram(random_histogram(rng, 5)));
  const NetworkSimplexResult r = network_simplex(a.weights(), b.weights(), build_cost(a, b));
  const double w = std::sqrt(r.value);
  const DiscreteMeasure m1 = mccann_interpolate(r.plan, a, b, 0.25), m2 = mccann_interpolate(r.plan, a, b, 0.75);
  const double d = std::sqrt(exact_ot_value(m1.weights().weights(), m2.weights().weights(), build_cost(m1, m2)));
  EXPECT_NEAR(d, 0.5 * w, 1e-9);
  EXPECT_LE(m1.size(), 10);
}

TEST(ContinuityProjection, MatchesDenseReference) {
  std::mt19937_64 rng(3);
  const GridShape s{4, 5, 3};
  StaggeredField F(s);
  F.a = random_matrix(rng, F.a.size(), 1);
  F.J1 = random_matrix(rng, F.J1.size(), 1, -1, 1);
  F.J2 = random_matrix(rng, F.J2.size(), 1, -1, 1);
  const Vector r0 = random_histogram(rng, 15), r1 = random_histogram(rng, 15);
  const StaggeredField fast = continuity_projection(F, r0, r1);
  const StaggeredField ref = continuity_projection_reference(F, r0, r1);
  EXPECT_LT((fast.a - ref.a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fast.J1 - ref.J1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((fast.J2 - ref.J2).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(continuity_residual(fast, r0, r1), 1e-12);
  const StaggeredField twice = continuity_projection(fast, r0, r1);
  EXPECT_LT((twice.a - fast.a).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_GT(continuity_residual(F, r0, r1), 1e-3);
}

TEST(BenamouBrenier, OneDimensionalGaussians) {
  const Index n = 64;
  const Vector r0 = gaussian_cells(n, 0.3, 0.06), r1 = gaussian_cells(n, 0.65, 0.09);
  BenamouBrenierOptions opt;
  opt.T = 16;
  opt.iterations = 600;
  const BenamouBrenierResult res = benamou_brenier(r0, r1, n, 1, opt);
  const Vector x = cell_centres(n);
  const double w = w_p_1d(DiscreteMeasure::dropping_zeros(x, Histogram(r0)), DiscreteMeasure::dropping_zeros(x, Histogram(r1)), 2.0);
  EXPECT_NEAR(res.value, w * w, 0.05 * w * w);
  EXPECT_LT(continuity_residual(res.field, r0, r1), 1e-9);
  EXPECT_EQ(res.trace.size(), 600u);
}

TEST(BenamouBrenier, TwoDimensionalTranslation) {
  const Index n = 16;
  const Vector gx0 = gaussian_cells(n, 0.35, 0.08), gx1 = gaussian_cells(n, 0.6, 0.08), gy = gaussian_cells(n, 0.5, 0.1);
  Vector r0(n * n), r1(n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      r0[i * n + j] = gx0[i] * gy[j];
      r1[i * n + j] = gx1[i] * gy[j];
    }
  BenamouBrenierOptions opt;
  opt.T = 8;
  opt.iterations = 400;
  opt.threads = 2;
  const BenamouBrenierResult res = benamou_brenier(r0 / r0.sum(), r1 / r1.sum(), n, n, opt);
  EXPECT_NEAR(res.value, 0.25 * 0.25, 0.05 * 0.0625);
}

TEST(BenamouBrenier, InputValidation) {
  EXPECT_THROW(benamou_brenier(Vector::Constant(4, 0.25), Vector::Constant(3, 1.0 / 3), 4, 1), InputError);
  EXPECT_THROW(benamou_brenier(Vector::Constant(4, 0.3), Vector::Constant(4, 0.25), 4, 1), InputError);
  BenamouBrenierOptions opt;
  opt.relaxation = 2.0;
  EXPECT_THROW(benamou_brenier(Vector::Constant(4, 0.25), Vector::Constant(4, 0.25), 4, 1, opt), InputError);
}
