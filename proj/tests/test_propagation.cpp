#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ssdml;

TEST(Propagate, GammaZeroIsIdentity) {
  std::mt19937_64 rng(1);
  const Matrix q = oracle::random_q(20, 3, rng);
  const Matrix w0 = oracle::gaussian(20, 20, rng);
  EXPECT_EQ(propagate_direct(q, w0, 0.0), w0);
  const auto it = propagate_iterative(q, w0, 0.0, 1e-10, 10);
  EXPECT_EQ(it.iterations, 1);
  EXPECT_EQ(it.values, w0);
}

// (I - gQ)^-1 = 1/(1-g^2) [[1,g],[g,1]]; times (1-g) and the all-ones W0 gives ones.
TEST(Propagate, TwoNodeClosedForm) {
  Matrix q(2, 2), w0 = Matrix::Ones(2, 2);
  q << 0, 1, 1, 0;
  for (double g : {0.1, 0.5, 0.9, 0.99}) {
    const Matrix w = propagate_direct(q, w0, g);
    EXPECT_LT((w - w0).cwiseAbs().maxCoeff(), 1e-12) << g;
  }
}

// Chain labeled(0) - unlabeled(1) - labeled(2), same class, k = 1 on x = 0, 1, 2.
// Node 1 ties between 0 and 2 and takes 0. Solving by hand:
// W*(1, .) = [g, 1, g] / (1 + g) and W*(0, 1) = W*(2, 1) = g / (1 + g),
// so after symmetrization the unlabeled node has affinity g / (1 + g) to both.
TEST(Propagate, ChainHandSolution) {
  Matrix z(3, 1);
  z << 0, 1, 2;
  const auto g = build_knn(z, 1);
  ASSERT_EQ(g.neighbors, (std::vector<Index>{1, 0, 1}));
  const Matrix w0 = seed_affinity(std::vector<std::optional<int>>{0, std::nullopt, 0});
  double prev = 0.0;
  for (double gamma : {0.1, 0.5, 0.9, 0.99}) {
    PropagationOptions opt;
    opt.gamma = gamma;
    const Matrix w = propagate(g, w0, opt).values;
    const double expect = gamma / (1 + gamma);
    EXPECT_NEAR(w(1, 0), expect, 1e-12);
    EXPECT_NEAR(w(1, 2), expect, 1e-12);
    EXPECT_GT(w(1, 0), prev);
    prev = w(1, 0);
  }
}

TEST(Propagate, IterativeMatchesDirect) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Index n = oracle::uniform(rng, 3, 200);
    const Index k = oracle::uniform(rng, 1, static_cast<int>(std::min<Index>(10, n - 1)));
    const auto g = build_knn(oracle::gaussian(Eigen::Index(n), 3, rng), k);
    std::vector<std::optional<int>> labels(n);
    for (auto& l : labels)
      if (oracle::uniform(rng, 0, 3) == 0) l = oracle::uniform(rng, 0, 2);
    const Matrix w0 = seed_affinity(labels);
    for (double gamma : {0.5, 0.9, 0.99}) {
      const Matrix d = propagate_direct(neighbor_matrix(g), w0, gamma);
      const auto it = propagate_iterative(g, w0, gamma, 1e-10, 100000);
      EXPECT_LE((d - it.values).cwiseAbs().maxCoeff(), 1e-8) << "trial " << t << " gamma " << gamma;
    }
  }
}

TEST(Propagate, DenseAndGraphIterationsAgree) {
  std::mt19937_64 rng(3);
  const auto g = build_knn(oracle::gaussian(60, 2, rng), 4);
  const Matrix w0 = oracle::gaussian(60, 60, rng);
  const auto a = propagate_iterative(g, w0, 0.9, 1e-12, 10000);
  const auto b = propagate_iterative(neighbor_matrix(g), w0, 0.9, 1e-12, 10000);
  EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagate, ConvergesAtPaperGamma) {
  std::mt19937_64 rng(4);
  const auto g = build_knn(oracle::gaussian(100, 3, rng), 10);
  const auto res = propagate_iterative(g, Matrix::Identity(100, 100), 0.99, 1e-8, 10000);
  EXPECT_GT(res.iterations, 1);
  EXPECT_LE(res.last_change, 1e-8);
}

TEST(Propagate, NonConvergenceReported) {
  std::mt19937_64 rng(5);
  const auto g = build_knn(oracle::gaussian(30, 2, rng), 2);
  EXPECT_THROW(propagate_iterative(g, Matrix::Identity(30, 30), 0.99, 1e-14, 3), ConvergenceError);
}

TEST(Propagate, BadGamma) {
  Matrix q = Matrix::Zero(2, 2);
  EXPECT_THROW(propagate_direct(q, q, 1.0), ConfigError);
  EXPECT_THROW(propagate_direct(q, q, -0.1), ConfigError);
}

TEST(Propagate, SolverChoiceIrrelevant) {
  std::mt19937_64 rng(6);
  const auto g = build_knn(oracle::gaussian(80, 3, rng), 6);
  std::vector<std::optional<int>> labels(80);
  for (int i = 0; i < 10; ++i) labels[static_cast<Index>(i)] = i % 3;
  const Matrix w0 = seed_affinity(labels);
  PropagationOptions d, it;
  d.solver = Solver::Direct;
  it.solver = Solver::Iterative;
  it.tol = 1e-12;
  EXPECT_LT((propagate(g, w0, d).values - propagate(g, w0, it).values).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Symmetrize, Examples) {
  Matrix a(2, 2), e(2, 2);
  a << 0, 2, 0, 0;
  e << 0, 1, 1, 0;
  EXPECT_EQ(symmetrize(a), e);
  EXPECT_EQ(symmetrize(e), e);
  std::mt19937_64 rng(7);
  const Matrix r = oracle::gaussian(9, 9, rng);
  const Matrix s = symmetrize(r);
  EXPECT_EQ(symmetrize(s), s);
  EXPECT_EQ(s, Matrix(s.transpose()));
}
