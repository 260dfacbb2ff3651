#pragma once

#include "ssdml/common.hpp"

#include <algorithm>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace ssdml {

/// Directed exact kNN graph. Row i of `neighbors` (flattened, k per node)
/// lists i's k nearest nodes by ascending squared Euclidean distance, ties
/// broken by ascending index, never i itself.
struct NeighborGraph {
  Index n = 0;
  Index k = 0;
  std::vector<Index> neighbors;

  std::span<const Index> of(Index i) const { return {neighbors.data() + i * k, k}; }
};

namespace detail {

inline void knn_rows(const Matrix& z, Index k, Index begin, Index end, std::vector<Index>& out) {
  const auto n = static_cast<Index>(z.rows());
  std::vector<std::pair<double, Index>> cand;
  cand.reserve(n - 1);
  for (Index i = begin; i < end; ++i) {
    cand.clear();
    const auto zi = z.row(static_cast<Eigen::Index>(i));
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.emplace_back((zi - z.row(static_cast<Eigen::Index>(j))).squaredNorm(), j);
    }
    // pair ordering is (distance, index), which is exactly the tie rule.
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (Index r = 0; r < k; ++r) out[i * k + r] = cand[r].second;
  }
}

}  // namespace detail

/// Exact kNN over the rows of `z`. Rows are split into contiguous blocks
/// across `threads` workers; each row's result depends only on `z`, so the
/// output does not depend on the thread count.
inline NeighborGraph build_knn(const Matrix& z, Index k, unsigned threads = 1) {
  const auto n = static_cast<Index>(z.rows());
  if (k < 1 || k >= n)
    throw ConfigError("build_knn: need 1 <= k < n (k=" + std::to_string(k) +
                      ", n=" + std::to_string(n) + ")");
  NeighborGraph g{n, k, std::vector<Index>(n * k)};
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    detail::knn_rows(z, k, 0, n, g.neighbors);
    return g;
  }
  std::vector<std::jthread> pool;
  const Index block = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const Index b = t * block;
    const Index e = std::min(n, b + block);
    if (b >= e) break;
    pool.emplace_back([&z, k, b, e, &g] { detail::knn_rows(z, k, b, e, g.neighbors); });
  }
  return g;
}

/// Dense row-stochastic Q with Q(i, j) = 1/k for j in N_k(i).
inline Matrix neighbor_matrix(const NeighborGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n);
  Matrix q = Matrix::Zero(n, n);
  const double w = 1.0 / static_cast<double>(g.k);
  for (Index i = 0; i < g.n; ++i)
    for (Index j : g.of(i)) q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
  return q;
}

/// Seed affinities for nodes with the given (optional) labels:
/// +1 on the diagonal and between same-class labeled nodes, -1 between
/// labeled nodes of different classes, 0 whenever an unlabeled node is involved.
inline Matrix seed_affinity(std::span<const std::optional<int>> labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  Matrix w0 = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    w0(i, i) = 1.0;
    if (!labels[static_cast<Index>(i)]) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (!labels[static_cast<Index>(j)]) continue;
      const double v = *labels[static_cast<Index>(i)] == *labels[static_cast<Index>(j)] ? 1.0 : -1.0;
      w0(i, j) = v;
      w0(j, i) = v;
    }
  }
  return w0;
}

/// Unnormalized graph Laplacian D - W of a symmetric affinity matrix.
inline Matrix laplacian(const Matrix& w) {
  require_dims(w.rows() == w.cols(), "laplacian: matrix must be square");
  const double asym = (w - w.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12)
    throw NumericError("laplacian: affinity matrix is not symmetric (max |W - W^T| = " +
                       std::to_string(asym) + ")");
  Matrix lap = -w;
  lap.diagonal() += w.rowwise().sum();
  return lap;
}

/// Symmetric 0/1 adjacency of the kNN graph (edge if either endpoint lists the other).
inline Matrix knn_adjacency(const NeighborGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n);
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < g.n; ++i)
    for (Index j : g.of(i)) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
      a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
    }
  return a;
}

}  // namespace ssdml
