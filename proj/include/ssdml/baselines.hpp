#pragma once

#include "ssdml/common.hpp"
#include "ssdml/manifold.hpp"
#include "ssdml/metric.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ssdml {

/// Labeled pair with y = +1 for same class, -1 otherwise.
struct LabeledPair {
  Index i = 0;
  Index j = 0;
  int y = 1;
};

struct IndexPair {
  Index i = 0;
  Index j = 0;
};

/// Pair whose squared distance enters an objective with weight w.
struct WeightedPair {
  Index i = 0;
  Index j = 0;
  double w = 0.0;
};

struct SeraphConfig {
  double eta = 1.0;
  double mu = 1.0;
  double lambda = 1e-3;

  void validate() const {
    require(mu >= 0.0 && lambda >= 0.0, "SERAPH: mu and lambda must be non-negative");
  }
};

struct LrmlConfig {
  double gamma_s = 1.0;
  double gamma_d = 1.0;

  void validate() const {
    require(gamma_s >= 0.0 && gamma_d >= 0.0, "LRML: pair weights must be non-negative");
    require(gamma_s > 0.0 || gamma_d > 0.0, "LRML: gamma_S and gamma_D cannot both be zero");
  }
};

/// (zi - zj)^T M (zi - zj).
inline double mahalanobis_sq_full(const Matrix& m, const Eigen::Ref<const Vector>& zi,
                                  const Eigen::Ref<const Vector>& zj) {
  require_dims(m.rows() == m.cols() && zi.size() == m.rows() && zj.size() == m.rows(),
               "mahalanobis: dimension mismatch");
  const Vector u = zi - zj;
  return u.dot(m * u);
}

/// p = 1 / (1 + exp(y (d_M - eta))).
inline double pair_probability(const Matrix& m, const Eigen::Ref<const Vector>& zi,
                               const Eigen::Ref<const Vector>& zj, int y, double eta) {
  return logistic(-static_cast<double>(y) * (mahalanobis_sq_full(m, zi, zj) - eta));
}

namespace detail {

inline Vector row_vec(const Matrix& z, Index i) {
  return z.row(static_cast<Eigen::Index>(i)).transpose();
}

inline void check_pair_indices(const Matrix& z, Index i, Index j) {
  if (i >= static_cast<Index>(z.rows()) || j >= static_cast<Index>(z.rows()))
    throw DimensionError("pair index out of range");
}

// Shared accumulator for objectives of the form sum_k f_k(d_M(pair_k)):
// given df/dd per pair, dJ/dM = sum w u u^T and dJ/dz_i = +-2 w M u.
struct PairGradients {
  std::vector<Index> i, j;
  std::vector<double> w;

  void add(Index a, Index b, double weight) {
    i.push_back(a);
    j.push_back(b);
    w.push_back(weight);
  }

  Matrix grad_m(const Matrix& z) const {
    const auto d = z.cols();
    Matrix g = Matrix::Zero(d, d);
    if (w.empty()) return g;
    Matrix u(static_cast<Eigen::Index>(w.size()), d);
    Vector s(static_cast<Eigen::Index>(w.size()));
    for (Index k = 0; k < w.size(); ++k) {
      u.row(static_cast<Eigen::Index>(k)) =
          z.row(static_cast<Eigen::Index>(i[k])) - z.row(static_cast<Eigen::Index>(j[k]));
      s(static_cast<Eigen::Index>(k)) = w[k];
    }
    g.noalias() = u.transpose() * s.asDiagonal() * u;
    return g;
  }

  Matrix grad_z(const Matrix& m, const Matrix& z) const {
    Matrix g = Matrix::Zero(z.rows(), z.cols());
    const Matrix ms = (m + m.transpose()) / 2.0;
    for (Index k = 0; k < w.size(); ++k) {
      const auto a = static_cast<Eigen::Index>(i[k]);
      const auto b = static_cast<Eigen::Index>(j[k]);
      const Vector mu = ms * (z.row(a) - z.row(b)).transpose();
      g.row(a) += 2.0 * w[k] * mu.transpose();
      g.row(b) -= 2.0 * w[k] * mu.transpose();
    }
    return g;
  }
};

inline double p_log_p(double p, double log_p) { return p < 1e-300 ? 0.0 : p * log_p; }

}  // namespace detail

// ---------------------------------------------------------------------------
// SERAPH

/// mu * sum over unlabeled pairs of sum_y p(y) log p(y). This is the
/// bracketed (non-positive) quantity; the objective subtracts it, so the
/// objective charges mu * entropy for each unlabeled pair.
inline double seraph_entropy_term(const Matrix& m, const Matrix& z,
                                  std::span<const IndexPair> unlabeled, const SeraphConfig& cfg) {
  double sum = 0.0;
  for (const auto& pr : unlabeled) {
    detail::check_pair_indices(z, pr.i, pr.j);
    const double s = mahalanobis_sq_full(m, detail::row_vec(z, pr.i), detail::row_vec(z, pr.j)) - cfg.eta;
    // y = +1: p = sigma(-s), log p = -softplus(s); y = -1 mirrors it.
    sum += detail::p_log_p(logistic(-s), -softplus(s)) + detail::p_log_p(logistic(s), -softplus(-s));
  }
  return cfg.mu * sum;
}

/// -[ sum_labeled log p(y_ij) + mu sum_unlabeled sum_y p log p ] + lambda Tr(M).
inline double seraph_objective(const Matrix& m, const Matrix& z, std::span<const LabeledPair> labeled,
                               std::span<const IndexPair> unlabeled, const SeraphConfig& cfg) {
  cfg.validate();
  double nll = 0.0;
  for (const auto& pr : labeled) {
    detail::check_pair_indices(z, pr.i, pr.j);
    const double s = mahalanobis_sq_full(m, detail::row_vec(z, pr.i), detail::row_vec(z, pr.j)) - cfg.eta;
    nll += softplus(static_cast<double>(pr.y) * s);
  }
  return nll - seraph_entropy_term(m, z, unlabeled, cfg) + cfg.lambda * m.trace();
}

namespace detail {

inline PairGradients seraph_pair_weights(const Matrix& m, const Matrix& z,
                                         std::span<const LabeledPair> labeled,
                                         std::span<const IndexPair> unlabeled, const SeraphConfig& cfg) {
  PairGradients pg;
  for (const auto& pr : labeled) {
    check_pair_indices(z, pr.i, pr.j);
    const double s = mahalanobis_sq_full(m, row_vec(z, pr.i), row_vec(z, pr.j)) - cfg.eta;
    const double y = static_cast<double>(pr.y);
    pg.add(pr.i, pr.j, y * logistic(y * s));
  }
  for (const auto& pr : unlabeled) {
    check_pair_indices(z, pr.i, pr.j);
    const double dist = mahalanobis_sq_full(m, row_vec(z, pr.i), row_vec(z, pr.j));
    const double p = logistic(cfg.eta - dist);
    pg.add(pr.i, pr.j, cfg.mu * p * (1.0 - p) * (cfg.eta - dist));
  }
  return pg;
}

}  // namespace detail

inline Matrix seraph_gradient(const Matrix& m, const Matrix& z, std::span<const LabeledPair> labeled,
                              std::span<const IndexPair> unlabeled, const SeraphConfig& cfg) {
  cfg.validate();
  Matrix g = detail::seraph_pair_weights(m, z, labeled, unlabeled, cfg).grad_m(z);
  g.diagonal().array() += cfg.lambda;
  return (g + g.transpose()) / 2.0;
}

inline Matrix seraph_grad_embeddings(const Matrix& m, const Matrix& z,
                                     std::span<const LabeledPair> labeled,
                                     std::span<const IndexPair> unlabeled, const SeraphConfig& cfg) {
  cfg.validate();
  return detail::seraph_pair_weights(m, z, labeled, unlabeled, cfg).grad_z(m, z);
}

// ---------------------------------------------------------------------------
// LRML

/// Tr(M X^T Lap X) for rows-as-examples X, i.e. Tr(M X_c Lap X_c^T) with
/// X_c = X^T holding one example per column.
inline double laplacian_regularizer(const Matrix& m, const Matrix& z, const Matrix& lap) {
  require_dims(lap.rows() == z.rows() && lap.cols() == z.rows(),
               "laplacian_regularizer: Laplacian size differs from example count");
  return (m * (z.transpose() * lap * z)).trace();
}

/// 1/2 sum_ij W_ij d_M(z_i, z_j), computed pair by pair.
inline double laplacian_regularizer_pairwise(const Matrix& m, const Matrix& z, const Matrix& w) {
  require_dims(w.rows() == z.rows() && w.cols() == z.rows(),
               "laplacian_regularizer_pairwise: affinity size differs from example count");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
      if (w(i, j) == 0.0) continue;
      const Vector u = (z.row(i) - z.row(j)).transpose();
      sum += w(i, j) * u.dot(m * u);
    }
  return 0.5 * sum;
}

inline double lrml_objective(const Matrix& m, const Matrix& z, std::span<const LabeledPair> labeled,
                             const Matrix& lap, const LrmlConfig& cfg) {
  cfg.validate();
  double sim = 0.0, dis = 0.0;
  for (const auto& pr : labeled) {
    detail::check_pair_indices(z, pr.i, pr.j);
    const double d2 = mahalanobis_sq_full(m, detail::row_vec(z, pr.i), detail::row_vec(z, pr.j));
    (pr.y > 0 ? sim : dis) += d2;
  }
  return cfg.gamma_s * sim - cfg.gamma_d * dis + laplacian_regularizer(m, z, lap);
}

/// gamma_S sum_sim u u^T - gamma_D sum_dis u u^T + X^T Lap X; independent of M.
inline Matrix lrml_gradient(const Matrix& m, const Matrix& z, std::span<const LabeledPair> labeled,
                            const Matrix& lap, const LrmlConfig& cfg) {
  cfg.validate();
  detail::PairGradients pg;
  for (const auto& pr : labeled) {
    detail::check_pair_indices(z, pr.i, pr.j);
    pg.add(pr.i, pr.j, pr.y > 0 ? cfg.gamma_s : -cfg.gamma_d);
  }
  Matrix g = pg.grad_m(z);
  if (lap.size() > 0) {
    require_dims(lap.rows() == z.rows(), "lrml_gradient: Laplacian size differs from example count");
    g += z.transpose() * lap * z;
  }
  (void)m;
  return (g + g.transpose()) / 2.0;
}

/// sum_k w_k d_M(pair_k). LRML in edge form: labeled pairs carry
/// gamma_S / -gamma_D and each undirected graph edge carries W_ij, which
/// equals the Laplacian form by the pairwise identity.
inline double weighted_pair_objective(const Matrix& m, const Matrix& z, std::span<const WeightedPair> pairs) {
  double sum = 0.0;
  for (const auto& pr : pairs) {
    detail::check_pair_indices(z, pr.i, pr.j);
    sum += pr.w * mahalanobis_sq_full(m, detail::row_vec(z, pr.i), detail::row_vec(z, pr.j));
  }
  return sum;
}

inline Matrix weighted_pair_gradient(const Matrix& z, std::span<const WeightedPair> pairs) {
  detail::PairGradients pg;
  for (const auto& pr : pairs) pg.add(pr.i, pr.j, pr.w);
  Matrix g = pg.grad_m(z);
  return (g + g.transpose()) / 2.0;
}

inline Matrix weighted_pair_grad_embeddings(const Matrix& m, const Matrix& z,
                                            std::span<const WeightedPair> pairs) {
  detail::PairGradients pg;
  for (const auto& pr : pairs) pg.add(pr.i, pr.j, pr.w);
  return pg.grad_z(m, z);
}

// ---------------------------------------------------------------------------
// PSD cone

/// Symmetrize, eigendecompose, clamp negative eigenvalues to zero.
inline Matrix project_psd(const Matrix& m) {
  require_dims(m.rows() == m.cols(), "project_psd: matrix must be square");
  const Matrix sym = (m + m.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("project_psd: eigensolver failed");
  const Vector lam = es.eigenvalues().cwiseMax(0.0);
  Matrix out = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  return (out + out.transpose()) / 2.0;
}

/// Euclidean projection onto {M PSD, Tr(M) <= cap}: eigenvalues are
/// projected onto {lambda >= 0, sum lambda <= cap}.
inline Matrix project_psd_trace(const Matrix& m, double cap) {
  require(cap > 0.0, "project_psd_trace: cap must be positive");
  const Matrix sym = (m + m.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("project_psd_trace: eigensolver failed");
  Vector lam = es.eigenvalues().cwiseMax(0.0);
  if (lam.sum() > cap) {
    // Simplex projection of the raw eigenvalues onto {x >= 0, sum x = cap}.
    std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(v.begin(), v.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t r = 0; r < v.size(); ++r) {
      cum += v[r];
      const double t = (cum - cap) / static_cast<double>(r + 1);
      if (v[r] - t > 0.0) theta = t;
    }
    lam = (es.eigenvalues().array() - theta).cwiseMax(0.0);
  }
  Matrix out = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  return (out + out.transpose()) / 2.0;
}

/// L with L L^T = M for PSD M (eigenvectors scaled by sqrt eigenvalues).
inline Matrix psd_factor(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es((m + m.transpose()) / 2.0);
  if (es.info() != Eigen::Success) throw NumericError("psd_factor: eigensolver failed");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

struct PsdOptions {
  int max_iter = 10;
  double step0 = 1.0;
  double armijo_c = 1e-4;
  int max_halvings = 30;
  /// Projection applied after each gradient step; project_psd when empty.
  std::function<Matrix(const Matrix&)> project;
};

struct PsdResult {
  Matrix m;
  std::vector<double> values;  // objective after every accepted step, starting with the initial value
  bool stalled = false;
};

/// Projected gradient descent with backtracking: a step is accepted only if
/// f(P(M - a G)) <= f(M) - (c / a) ||P(M - a G) - M||^2, so the objective
/// sequence never increases.
inline PsdResult optimize_psd(const Matrix& m0, const Objective& f, const PsdOptions& opt) {
  auto project = opt.project ? opt.project : [](const Matrix& m) { return project_psd(m); };
  PsdResult res{project(m0), {}, false};
  Evaluation cur = f(res.m);
  res.values.push_back(cur.value);
  double step = opt.step0;
  for (int it = 0; it < opt.max_iter; ++it) {
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      Matrix trial = project(res.m - step * cur.gradient);
      const double moved = (trial - res.m).squaredNorm();
      if (moved == 0.0) return res;  // stationary under the projection
      Evaluation next = f(trial);
      if (std::isfinite(next.value) && next.value <= cur.value - opt.armijo_c / step * moved) {
        res.m = std::move(trial);
        cur = std::move(next);
        res.values.push_back(cur.value);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    step *= 2.0;
  }
  return res;
}

}  // namespace ssdml
