#pragma once

#include "ssdml/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ssdml {

struct KMeansResult {
  std::vector<int> assignments;
  Matrix centers;
  double inertia = 0.0;
  int iterations = 0;
};

namespace detail {

inline double inertia_of(const Matrix& z, const Matrix& centers, const std::vector<int>& assign) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    s += (z.row(i) - centers.row(assign[static_cast<Index>(i)])).squaredNorm();
  return s;
}

inline Matrix kmeanspp_init(const Matrix& z, int c, Rng& rng) {
  const auto n = z.rows();
  Matrix centers(c, z.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = z.row(first(rng));
  Vector d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (z.row(i) - centers.row(0)).squaredNorm();
  for (int k = 1; k < c; ++k) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        cum += d2(i);
        if (cum >= target && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.row(k) = z.row(pick);
    for (Eigen::Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (z.row(i) - centers.row(k)).squaredNorm());
  }
  return centers;
}

}  // namespace detail

/// Lloyd's algorithm from a k-means++ start. Iterates until assignments
/// stop changing or `max_iter`; an empty cluster is reseeded at the point
/// farthest from its current center.
inline KMeansResult kmeans(const Matrix& z, int c, std::uint64_t seed, int max_iter = 100) {
  const auto n = z.rows();
  require(c >= 1 && c <= n, "kmeans: need 1 <= C <= n");
  Rng rng(seed);
  KMeansResult res;
  res.centers = detail::kmeanspp_init(z, c, rng);
  res.assignments.assign(static_cast<Index>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < c; ++k) {
        const double d = (z.row(i) - res.centers.row(k)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (res.assignments[static_cast<Index>(i)] != best) {
        res.assignments[static_cast<Index>(i)] = best;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed) break;
    Matrix sums = Matrix::Zero(c, z.cols());
    std::vector<int> counts(static_cast<Index>(c), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignments[static_cast<Index>(i)]) += z.row(i);
      ++counts[static_cast<Index>(res.assignments[static_cast<Index>(i)])];
    }
    for (int k = 0; k < c; ++k) {
      if (counts[static_cast<Index>(k)] > 0) {
        res.centers.row(k) = sums.row(k) / counts[static_cast<Index>(k)];
        continue;
      }
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (z.row(i) - res.centers.row(res.assignments[static_cast<Index>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      res.centers.row(k) = z.row(far);
    }
  }
  res.inertia = detail::inertia_of(z, res.centers, res.assignments);
  return res;
}

/// Best-inertia result over `restarts` seeded runs (ties keep the earliest).
inline KMeansResult kmeans_restarts(const Matrix& z, int c, std::uint64_t seed, int restarts = 10,
                                    int max_iter = 100) {
  require(restarts >= 1, "kmeans_restarts: need at least one restart");
  KMeansResult best;
  for (int r = 0; r < restarts; ++r) {
    auto res = kmeans(z, c, mix_seed(seed, static_cast<std::uint64_t>(r)), max_iter);
    if (r == 0 || res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

/// I(A; Y) / ((H(A) + H(Y)) / 2) with natural logs; 0 when the denominator is 0.
inline double nmi(std::span<const int> assignments, std::span<const int> labels) {
  if (assignments.size() != labels.size())
    throw DimensionError("nmi: assignments and labels differ in length");
  const auto n = static_cast<double>(labels.size());
  if (labels.empty()) return 0.0;
  std::map<int, double> ca, cy;
  std::map<std::pair<int, int>, double> joint;
  for (Index i = 0; i < labels.size(); ++i) {
    ca[assignments[i]] += 1.0;
    cy[labels[i]] += 1.0;
    joint[{assignments[i], labels[i]}] += 1.0;
  }
  auto entropy = [n](const std::map<int, double>& counts) {
    double h = 0.0;
    for (const auto& [k, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double ha = entropy(ca);
  const double hy = entropy(cy);
  double mi = 0.0;
  for (const auto& [key, c] : joint)
    mi += (c / n) * std::log(c * n / (ca[key.first] * cy[key.second]));
  const double denom = (ha + hy) / 2.0;
  if (denom <= 0.0) return 0.0;
  return std::max(0.0, mi / denom);
}

/// Percentage of points with at least one same-class point among their K
/// nearest neighbors (Euclidean, self excluded, ties broken by index).
inline std::map<int, double> recall_at_k(const Matrix& z, std::span<const int> labels,
                                         std::span<const int> ks) {
  const auto n = static_cast<Index>(z.rows());
  require_dims(labels.size() == n, "recall_at_k: label count differs from row count");
  require(!ks.empty(), "recall_at_k: no K values given");
  const int max_k = *std::max_element(ks.begin(), ks.end());
  require(*std::min_element(ks.begin(), ks.end()) >= 1, "recall_at_k: K must be >= 1");
  if (static_cast<Index>(max_k) >= n)
    throw ConfigError("recall_at_k: K=" + std::to_string(max_k) + " needs more than " +
                      std::to_string(n) + " points");
  std::map<int, Index> hits;
  std::vector<std::pair<double, Index>> cand;
  cand.reserve(n);
  for (Index i = 0; i < n; ++i) {
    cand.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i)
        cand.emplace_back((z.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(j))).squaredNorm(), j);
    std::partial_sort(cand.begin(), cand.begin() + max_k, cand.end());
    // Rank of the first same-class neighbor (max_k + 1 if none in range).
    int first_hit = max_k + 1;
    for (int r = 0; r < max_k; ++r)
      if (labels[cand[static_cast<Index>(r)].second] == labels[i]) {
        first_hit = r + 1;
        break;
      }
    for (int k : ks)
      if (first_hit <= k) ++hits[k];
  }
  std::map<int, double> out;
  for (int k : ks) out[k] = 100.0 * static_cast<double>(hits[k]) / static_cast<double>(n);
  return out;
}

struct EvalReport {
  double nmi = 0.0;
  std::map<int, double> recall_at;
  Index n_test = 0;
};

inline std::vector<int> default_recall_ks() { return {1, 2, 4, 8}; }

/// NMI of k-means (C = distinct labels, best of `restarts`) plus Recall@K.
inline EvalReport evaluate_embeddings(const Matrix& z, std::span<const int> labels,
                                      std::span<const int> ks, std::uint64_t seed, int restarts = 10) {
  const std::set<int> classes(labels.begin(), labels.end());
  EvalReport rep;
  rep.n_test = labels.size();
  const auto km = kmeans_restarts(z, static_cast<int>(classes.size()), seed, restarts);
  rep.nmi = nmi(km.assignments, labels);
  rep.recall_at = recall_at_k(z, labels, ks);
  return rep;
}

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

/// {"nmi": ..., "r@1": ..., ...}; recalls rounded to one decimal.
inline nlohmann::ordered_json to_json(const EvalReport& rep) {
  nlohmann::ordered_json j;
  j["nmi"] = rep.nmi;
  for (const auto& [k, v] : rep.recall_at) j["r@" + std::to_string(k)] = round1(v);
  return j;
}

}  // namespace ssdml
