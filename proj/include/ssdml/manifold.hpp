#pragma once

#include "ssdml/common.hpp"
#include "ssdml/metric.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace ssdml {

/// Projection of a Euclidean gradient onto the tangent space of the
/// Stiefel manifold at L: G - L sym(L^T G).
inline Matrix tangent_project(const Matrix& l, const Matrix& g) {
  require_dims(l.rows() == g.rows() && l.cols() == g.cols(), "tangent_project: shape mismatch");
  const Matrix ltg = l.transpose() * g;
  return g - l * ((ltg + ltg.transpose()) / 2.0);
}

/// Q factor of the thin QR of (L - step * xi) with diag(R) > 0.
inline Matrix retract_qr(const Matrix& l, const Matrix& xi, double step) {
  require_dims(l.rows() == xi.rows() && l.cols() == xi.cols(), "retract_qr: shape mismatch");
  require(step > 0.0, "retract_qr: step must be positive");
  if (xi.isZero(0.0)) return l;
  const Matrix y = l - step * xi;
  Eigen::HouseholderQR<Matrix> qr(y);
  const auto p = y.cols();
  Matrix q = qr.householderQ() * Matrix::Identity(y.rows(), p);
  const auto& r = qr.matrixQR();
  const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(std::abs(r(j, j)) > 1e-12 * scale))
      throw NumericError("retract_qr: rank-deficient step (|R_jj| = " +
                         std::to_string(std::abs(r(j, j))) + ")");
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

/// Objective value and Euclidean gradient with respect to L.
struct Evaluation {
  double value = 0.0;
  Matrix gradient;
};

using Objective = std::function<Evaluation(const Matrix&)>;

struct OptimizerOptions {
  int max_iter = 10;
  double step0 = 1.0;
  bool conjugate = true;    // Polak-Ribiere+ directions; steepest descent when false
  bool orthogonal = true;   // false: plain gradient descent on L, no retraction
  double armijo_c = 1e-4;
  double shrink = 0.5;
  int max_halvings = 30;
  double grad_tol = 1e-9;
  /// Called after every accepted iterate with (iteration, L, value).
  std::function<void(int, const Matrix&, double)> on_iterate;
};

struct OptimizeResult {
  Matrix l;
  double initial_value = 0.0;
  double final_value = 0.0;
  int iterations = 0;
  bool stalled = false;
  bool converged = false;  // gradient norm fell below grad_tol
};

/// First-order minimization of `f` over L, on the Stiefel manifold when
/// `opt.orthogonal` (QR retraction, transport by re-projection) or in plain
/// R^{d x l} otherwise. Every accepted step satisfies the Armijo condition,
/// so the objective never increases.
inline OptimizeResult optimize_L(const Matrix& l0, const Objective& f, const OptimizerOptions& opt) {
  require(opt.step0 > 0.0, "optimize_L: step0 must be positive");
  OptimizeResult res;
  res.l = l0;
  Evaluation cur = f(res.l);
  res.initial_value = res.final_value = cur.value;
  if (!std::isfinite(cur.value)) throw NumericError("optimize_L: objective is not finite at start");

  auto riemannian = [&](const Matrix& l, const Matrix& g) {
    return opt.orthogonal ? tangent_project(l, g) : g;
  };
  auto step_to = [&](const Matrix& l, const Matrix& dir, double step) -> Matrix {
    return opt.orthogonal ? retract_qr(l, -dir, step) : Matrix(l + step * dir);
  };

  Matrix grad = riemannian(res.l, cur.gradient);
  Matrix dir;
  Matrix prev_grad;
  double step = opt.step0;
  for (int it = 0; it < opt.max_iter; ++it) {
    const double gnorm = grad.norm();
    if (gnorm < opt.grad_tol) {
      res.converged = true;
      break;
    }
    if (opt.conjugate && it > 0) {
      // Previous direction and gradient transported by re-projection.
      const Matrix pdir = riemannian(res.l, dir);
      const Matrix pgrad = riemannian(res.l, prev_grad);
      const double denom = prev_grad.squaredNorm();
      const double beta = denom > 0.0 ? std::max(0.0, (grad.cwiseProduct(grad - pgrad)).sum() / denom) : 0.0;
      dir = -grad + beta * pdir;
      if ((dir.cwiseProduct(grad)).sum() >= 0.0) dir = -grad;
    } else {
      dir = -grad;
    }
    const double slope = (dir.cwiseProduct(grad)).sum();

    bool accepted = false;
    Matrix trial_l;
    Evaluation trial;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      try {
        trial_l = step_to(res.l, dir, step);
        trial = f(trial_l);
      } catch (const NumericError&) {
        step *= opt.shrink;
        continue;
      }
      if (std::isfinite(trial.value) && trial.value <= cur.value + opt.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= opt.shrink;
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    prev_grad = grad;
    res.l = std::move(trial_l);
    cur = std::move(trial);
    grad = riemannian(res.l, cur.gradient);
    res.final_value = cur.value;
    res.iterations = it + 1;
    if (opt.on_iterate) opt.on_iterate(res.iterations, res.l, cur.value);
    step *= 2.0;  // let the next line search start a little longer
  }
  return res;
}

/// Convenience wrapper returning a MetricL.
inline MetricL optimize_metric(const MetricL& l0, const Objective& f, OptimizerOptions opt) {
  opt.orthogonal = l0.orth_enforced();
  auto res = optimize_L(l0.matrix(), f, opt);
  return {std::move(res.l), l0.orth_enforced()};
}

}  // namespace ssdml
