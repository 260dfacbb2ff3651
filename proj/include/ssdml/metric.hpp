#pragma once

#include "ssdml/common.hpp"
#include "ssdml/mining.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>

namespace ssdml {

/// d x l factor of the learned metric M = L L^T.
class MetricL {
 public:
  MetricL() = default;

  MetricL(Matrix l, bool orth_enforced) : l_(std::move(l)), orth_(orth_enforced) {
    if (l_.rows() < 1 || l_.cols() < 1 || l_.cols() > l_.rows())
      throw DimensionError("MetricL: need d >= l >= 1, got " + std::to_string(l_.rows()) + "x" +
                           std::to_string(l_.cols()));
    if (!l_.allFinite()) throw NumericError("MetricL: non-finite entries");
    if (orth_ && orthonormality_error() > 1e-8)
      throw NumericError("MetricL: columns are not orthonormal (||L^T L - I||_F = " +
                         std::to_string(orthonormality_error()) + ")");
  }

  static MetricL identity(Index d, bool orth_enforced = true) {
    return {Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)),
            orth_enforced};
  }

  /// Q factor of a Gaussian d x l matrix (with diag(R) > 0).
  static MetricL random_orthonormal(Index d, Index l, std::uint64_t seed, bool orth_enforced = true) {
    require(l >= 1 && l <= d, "random_orthonormal: need 1 <= l <= d");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(l));
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    const Matrix r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    return {std::move(q), orth_enforced};
  }

  const Matrix& matrix() const { return l_; }
  Index input_dim() const { return static_cast<Index>(l_.rows()); }
  Index output_dim() const { return static_cast<Index>(l_.cols()); }
  bool orth_enforced() const { return orth_; }
  Matrix metric() const { return l_ * l_.transpose(); }

  double orthonormality_error() const {
    return (l_.transpose() * l_ - Matrix::Identity(l_.cols(), l_.cols())).norm();
  }

 private:
  Matrix l_;
  bool orth_ = false;
};

/// Angle of the angular triplet loss, in degrees, 0 < alpha < 90.
struct AngularConfig {
  double alpha_deg = 40.0;

  double tan_sq() const {
    if (!(alpha_deg > 0.0 && alpha_deg < 90.0))
      throw ConfigError("angular loss: alpha must lie in (0, 90) degrees, got " +
                        std::to_string(alpha_deg));
    const double t = std::tan(alpha_deg * std::numbers::pi / 180.0);
    return t * t;
  }
};

inline double softplus(double m) {
  if (m > 30.0) return m + std::log1p(std::exp(-m));
  return std::log1p(std::exp(m));
}

inline double logistic(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

/// ||L^T (zi - zj)||^2; the d x d metric is never formed.
inline double mahalanobis_sq(const Matrix& l, const Eigen::Ref<const Vector>& zi,
                             const Eigen::Ref<const Vector>& zj) {
  require_dims(zi.size() == l.rows() && zj.size() == l.rows(),
               "mahalanobis_sq: vector length differs from metric dimension");
  return (l.transpose() * (zi - zj)).squaredNorm();
}

/// m = d_L(z, z+) - 4 tan^2(alpha) d_L(z-, (z + z+)/2).
inline double angular_margin(const Matrix& l, const Eigen::Ref<const Vector>& z,
                             const Eigen::Ref<const Vector>& zp, const Eigen::Ref<const Vector>& zn,
                             const AngularConfig& cfg) {
  const Vector avg = (z + zp) / 2.0;
  return mahalanobis_sq(l, z, zp) - 4.0 * cfg.tan_sq() * mahalanobis_sq(l, zn, avg);
}

namespace detail {

// Differences u = z - z+ and v = z- - (z + z+)/2 for every triplet, one per row.
struct TripletDiffs {
  Matrix u;
  Matrix v;
};

inline TripletDiffs triplet_diffs(const Matrix& z, std::span<const Triplet> batch) {
  const auto t = static_cast<Eigen::Index>(batch.size());
  TripletDiffs d{Matrix(t, z.cols()), Matrix(t, z.cols())};
  for (Eigen::Index i = 0; i < t; ++i) {
    const auto& tr = batch[static_cast<Index>(i)];
    const auto a = z.row(static_cast<Eigen::Index>(tr.anchor));
    const auto p = z.row(static_cast<Eigen::Index>(tr.positive));
    const auto n = z.row(static_cast<Eigen::Index>(tr.negative));
    d.u.row(i) = a - p;
    d.v.row(i) = n - (a + p) / 2.0;
  }
  return d;
}

inline void check_batch(const Matrix& l, const Matrix& z, std::span<const Triplet> batch) {
  if (batch.empty()) throw DataError("angular loss: empty triplet batch");
  require_dims(z.cols() == l.rows(), "angular loss: embedding dimension differs from L rows");
  const auto n = static_cast<Index>(z.rows());
  for (const auto& t : batch)
    if (t.anchor >= n || t.positive >= n || t.negative >= n)
      throw DimensionError("angular loss: triplet index out of range");
}

}  // namespace detail

struct AngularEvaluation {
  double loss = 0.0;
  Matrix grad_l;       // d x l, filled when requested
  Vector margins;      // m_i per triplet
};

/// Loss sum_i softplus(m_i) over the batch and, optionally, dJ/dL
/// = sum_i sigma(m_i) [2 u u^T L - 8 tan^2(alpha) v v^T L], evaluated as
/// U^T diag(s) (U L) so each triplet costs O(d l).
inline AngularEvaluation angular_objective(const Matrix& l, const Matrix& z,
                                           std::span<const Triplet> batch, const AngularConfig& cfg,
                                           bool with_grad = true) {
  detail::check_batch(l, z, batch);
  const double t = cfg.tan_sq();
  const auto diffs = detail::triplet_diffs(z, batch);
  const Matrix ul = diffs.u * l;
  const Matrix vl = diffs.v * l;
  AngularEvaluation ev;
  ev.margins = ul.rowwise().squaredNorm() - 4.0 * t * vl.rowwise().squaredNorm();
  Vector s(ev.margins.size());
  for (Eigen::Index i = 0; i < ev.margins.size(); ++i) {
    ev.loss += softplus(ev.margins(i));
    s(i) = logistic(ev.margins(i));
  }
  if (with_grad) {
    ev.grad_l = 2.0 * diffs.u.transpose() * (s.asDiagonal() * ul) -
                8.0 * t * diffs.v.transpose() * (s.asDiagonal() * vl);
  }
  return ev;
}

inline double angular_loss(const Matrix& l, const Matrix& z, std::span<const Triplet> batch,
                           const AngularConfig& cfg) {
  return angular_objective(l, z, batch, cfg, false).loss;
}

inline Matrix angular_loss_grad_L(const Matrix& l, const Matrix& z, std::span<const Triplet> batch,
                                  const AngularConfig& cfg) {
  return angular_objective(l, z, batch, cfg, true).grad_l;
}

/// dJ/dz for every row of `z` (rows not touched by the batch are zero).
/// With Mx = L (L^T x): dm/dz = 2Mu + 4tMv, dm/dz+ = -2Mu + 4tMv,
/// dm/dz- = -8tMv, each scaled by sigma(m).
inline Matrix angular_loss_grad_embeddings(const Matrix& l, const Matrix& z,
                                           std::span<const Triplet> batch, const AngularConfig& cfg) {
  detail::check_batch(l, z, batch);
  const double t = cfg.tan_sq();
  const auto diffs = detail::triplet_diffs(z, batch);
  const Matrix ul = diffs.u * l;
  const Matrix vl = diffs.v * l;
  const Matrix mu = ul * l.transpose();
  const Matrix mv = vl * l.transpose();
  const Vector m = ul.rowwise().squaredNorm() - 4.0 * t * vl.rowwise().squaredNorm();
  Matrix grad = Matrix::Zero(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double s = logistic(m(i));
    const auto& tr = batch[static_cast<Index>(i)];
    grad.row(static_cast<Eigen::Index>(tr.anchor)) += s * (2.0 * mu.row(i) + 4.0 * t * mv.row(i));
    grad.row(static_cast<Eigen::Index>(tr.positive)) += s * (-2.0 * mu.row(i) + 4.0 * t * mv.row(i));
    grad.row(static_cast<Eigen::Index>(tr.negative)) += s * (-8.0 * t * mv.row(i));
  }
  return grad;
}

/// Rows L^T x for each row x of `x`.
inline Matrix embed(const Matrix& l, const Matrix& x) {
  require_dims(x.cols() == l.rows(), "embed: feature dimension differs from L rows");
  return x * l;
}

}  // namespace ssdml
