#pragma once

#include "ssdml/common.hpp"
#include "ssdml/graph.hpp"

#include <algorithm>
#include <compare>
#include <numeric>
#include <span>
#include <vector>

namespace ssdml {

struct Triplet {
  Index anchor = 0;
  Index positive = 0;
  Index negative = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

using TripletBatch = std::vector<Triplet>;

/// The anchor's graph neighbors ordered by descending affinity W(anchor, .),
/// ties broken by ascending node index.
inline std::vector<Index> sorted_neighborhood(const Matrix& w, const NeighborGraph& g, Index anchor) {
  require(anchor < g.n, "sorted_neighborhood: anchor out of range");
  const auto nb = g.of(anchor);
  std::vector<Index> out(nb.begin(), nb.end());
  const auto a = static_cast<Eigen::Index>(anchor);
  std::sort(out.begin(), out.end(), [&](Index x, Index y) {
    const double wx = w(a, static_cast<Eigen::Index>(x));
    const double wy = w(a, static_cast<Eigen::Index>(y));
    if (wx != wy) return wx > wy;
    return x < y;
  });
  return out;
}

/// Per anchor, pair the i-th ranked neighbor (positive) with the (k/2 + i)-th
/// (negative), i = 1..k/2. Output order follows `anchors`.
inline std::vector<Triplet> mine_triplets(const Matrix& w, const NeighborGraph& g,
                                          std::span<const Index> anchors) {
  if (g.k % 2 != 0) throw ConfigError("mine_triplets: k must be even, got " + std::to_string(g.k));
  require_dims(static_cast<Index>(w.rows()) == g.n && w.rows() == w.cols(),
               "mine_triplets: affinity matrix must be n x n");
  const Index half = g.k / 2;
  std::vector<Triplet> out;
  out.reserve(anchors.size() * half);
  for (Index a : anchors) {
    const auto sorted = sorted_neighborhood(w, g, a);
    for (Index i = 0; i < half; ++i) out.push_back({a, sorted[i], sorted[half + i]});
  }
  return out;
}

inline std::vector<Triplet> mine_triplets(const Matrix& w, const NeighborGraph& g) {
  std::vector<Index> anchors(g.n);
  std::iota(anchors.begin(), anchors.end(), Index{0});
  return mine_triplets(w, g, anchors);
}

/// Shuffle under `seed`, then cut into consecutive batches of `batch_size`
/// (the last one may be short). Callers re-batch every epoch with a
/// seed derived through mix_seed.
inline std::vector<TripletBatch> batch_triplets(std::vector<Triplet> triplets, Index batch_size,
                                                std::uint64_t seed) {
  require(batch_size >= 1, "batch_triplets: batch size must be >= 1");
  if (triplets.empty()) throw DataError("batch_triplets: no triplets were mined");
  Rng rng(seed);
  std::shuffle(triplets.begin(), triplets.end(), rng);
  std::vector<TripletBatch> batches;
  for (Index start = 0; start < triplets.size(); start += batch_size) {
    const Index end = std::min(triplets.size(), start + batch_size);
    batches.emplace_back(triplets.begin() + static_cast<std::ptrdiff_t>(start),
                         triplets.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace ssdml
