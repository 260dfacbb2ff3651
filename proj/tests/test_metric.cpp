#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ssdml;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST(MetricL, ConstructionChecks) {
  EXPECT_NO_THROW(MetricL::identity(4));
  EXPECT_LT(MetricL::random_orthonormal(8, 3, 1).orthonormality_error(), 1e-12);
  EXPECT_THROW(MetricL(Matrix::Ones(3, 2), true), Error);
  EXPECT_NO_THROW(MetricL(Matrix::Ones(3, 2), false));
  EXPECT_THROW(MetricL(Matrix::Ones(2, 3), false), Error);
}

TEST(Mahalanobis, Examples) {
  EXPECT_EQ(mahalanobis_sq(Matrix::Identity(2, 2), vec({1, 2}), vec({1, 2})), 0.0);
  EXPECT_DOUBLE_EQ(mahalanobis_sq(Matrix::Identity(2, 2), vec({0, 0}), vec({3, 4})), 25.0);
  Matrix l(2, 1);
  l << 1, 0;
  EXPECT_EQ(mahalanobis_sq(l, vec({0, 5}), vec({0, -5})), 0.0);
  EXPECT_THROW(mahalanobis_sq(l, vec({0, 5, 1}), vec({0, -5, 1})), DimensionError);
}

TEST(Mahalanobis, SymmetryAndTriangle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const Matrix l = MetricL::random_orthonormal(6, 3, 100 + t).matrix();
    const Matrix p = oracle::gaussian(3, 6, rng);
    const Vector a = p.row(0).transpose(), b = p.row(1).transpose(), c = p.row(2).transpose();
    EXPECT_EQ(mahalanobis_sq(l, a, b), mahalanobis_sq(l, b, a));
    const double ab = std::sqrt(mahalanobis_sq(l, a, b)), bc = std::sqrt(mahalanobis_sq(l, b, c)),
                 ac = std::sqrt(mahalanobis_sq(l, a, c));
    EXPECT_LE(ac, ab + bc + 1e-12);
  }
}

TEST(AngularMargin, Examples) {
  AngularConfig a45{45.0};
  const Matrix i2 = Matrix::Identity(2, 2);
  EXPECT_EQ(angular_margin(i2, vec({1, 1}), vec({1, 1}), vec({1, 1}), a45), 0.0);
  EXPECT_NEAR(angular_margin(i2, vec({0, 0}), vec({0, 0}), vec({1, 0}), a45), -4.0, 1e-12);
  EXPECT_THROW(AngularConfig{90.0}.tan_sq(), ConfigError);
  EXPECT_THROW(AngularConfig{0.0}.tan_sq(), ConfigError);
}

TEST(AngularLoss, Values) {
  Matrix z(3, 2);
  z << 0, 0, 0, 0, 1, 0;
  const std::vector<Triplet> degenerate{{0, 1, 1}};
  const std::vector<Triplet> t{{0, 1, 2}};
  const Matrix i2 = Matrix::Identity(2, 2);
  EXPECT_NEAR(angular_loss(i2, z, degenerate, {45.0}), std::log(2.0), 1e-15);
  // m = -4 -> log(1 + e^-4)
  EXPECT_NEAR(angular_loss(i2, z, t, {45.0}), 0.0181499279, 1e-9);
  EXPECT_NEAR(softplus(100.0), 100.0, 1e-12);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
  EXPECT_EQ(softplus(1000.0), 1000.0);
  EXPECT_NEAR(softplus(30.5), std::log1p(std::exp(30.5)), 1e-12);
}

TEST(AngularLoss, MonotoneInPositiveDistance) {
  Matrix z(3, 2);
  z << 0, 0, 0.1, 0, 0, 2;
  const std::vector<Triplet> t{{0, 1, 2}};
  const Matrix i2 = Matrix::Identity(2, 2);
  double prev = angular_loss(i2, z, t, {40.0});
  for (int s = 0; s < 20; ++s) {
    z(1, 0) += 0.2;
    z(2, 0) = (z(0, 0) + z(1, 0)) / 2;  // keep the negative's offset from the midpoint fixed
    const double cur = angular_loss(i2, z, t, {40.0});
    EXPECT_GE(cur, prev);
    prev = cur;
  }
}

TEST(AngularGrad, DegenerateIsZero) {
  Matrix z = Matrix::Ones(3, 4);
  const std::vector<Triplet> t{{0, 1, 2}};
  const Matrix l = MetricL::random_orthonormal(4, 2, 3).matrix();
  EXPECT_EQ(angular_loss_grad_L(l, z, t, {40.0}).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(angular_loss_grad_embeddings(l, z, t, {40.0}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(AngularGrad, FiniteDifferencesSixByThree) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix l = oracle::gaussian(6, 3, rng, 0.5);
    const Matrix z = oracle::gaussian(7, 6, rng, 0.5);
    const auto batch = gradcheck::random_triplets(rng, 7, 5);
    const AngularConfig cfg{45.0};
    const Matrix gl = angular_loss_grad_L(l, z, batch, cfg);
    const Matrix nl = finite_difference([&](const Matrix& x) { return angular_loss(x, z, batch, cfg); }, l);
    EXPECT_LE(relative_error(gl, nl), 1e-5);
    const Matrix gz = angular_loss_grad_embeddings(l, z, batch, cfg);
    const Matrix nz = finite_difference([&](const Matrix& x) { return angular_loss(l, x, batch, cfg); }, z);
    EXPECT_LE(relative_error(gz, nz), 1e-5);
  }
}

TEST(AngularGrad, LinearInBatch) {
  std::mt19937_64 rng(5);
  const Matrix l = oracle::gaussian(5, 2, rng);
  const Matrix z = oracle::gaussian(8, 5, rng);
  const auto a = gradcheck::random_triplets(rng, 8, 4);
  const auto b = gradcheck::random_triplets(rng, 8, 3);
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const Matrix sum = angular_loss_grad_L(l, z, a, {40.0}) + angular_loss_grad_L(l, z, b, {40.0});
  EXPECT_LT((angular_loss_grad_L(l, z, ab, {40.0}) - sum).cwiseAbs().maxCoeff(), 1e-10);
}

// m depends only on differences, so the per-triplet role gradients sum to zero.
TEST(AngularGrad, TranslationInvariance) {
  std::mt19937_64 rng(6);
  const Matrix l = oracle::gaussian(4, 4, rng);
  const Matrix z = oracle::gaussian(3, 4, rng);
  const std::vector<Triplet> t{{0, 1, 2}};
  const Matrix g = angular_loss_grad_embeddings(l, z, t, {40.0});
  EXPECT_LT(g.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Embed, ContractionAndSpanIsometry) {
  const Matrix l = MetricL::random_orthonormal(10, 4, 7).matrix();
  std::mt19937_64 rng(8);
  EXPECT_EQ(embed(l, Matrix::Identity(10, 10)), l);
  for (int t = 0; t < 1000; ++t) {
    const Vector v = oracle::gaussian(10, 1, rng).col(0);
    EXPECT_LE((l.transpose() * v).squaredNorm(), v.squaredNorm() + 1e-12);
    const Vector s = l * oracle::gaussian(4, 1, rng).col(0);
    EXPECT_NEAR((l.transpose() * s).squaredNorm(), s.squaredNorm(), 1e-10 * std::max(1.0, s.squaredNorm()));
  }
}
