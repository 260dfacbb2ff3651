#pragma once

#include "ssdml/common.hpp"
#include "ssdml/graph.hpp"

#include <cmath>
#include <string>

namespace ssdml {

/// Symmetric propagated affinities together with the walk weight that produced them.
struct AffinityMatrix {
  Matrix values;
  double gamma = 0.0;
};

namespace detail {

inline void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ConfigError("propagation: gamma must lie in [0, 1), got " + std::to_string(gamma));
}

// (Q * W) using neighbor lists instead of the dense Q.
inline Matrix apply_q(const NeighborGraph& g, const Matrix& w) {
  Matrix out = Matrix::Zero(w.rows(), w.cols());
  const double inv_k = 1.0 / static_cast<double>(g.k);
  for (Index i = 0; i < g.n; ++i) {
    auto row = out.row(static_cast<Eigen::Index>(i));
    for (Index j : g.of(i)) row += w.row(static_cast<Eigen::Index>(j));
    row *= inv_k;
  }
  return out;
}

}  // namespace detail

/// W* = (1 - gamma) (I - gamma Q)^{-1} W0 by one LU factorization and a
/// column-wise solve; the inverse is never formed.
inline Matrix propagate_direct(const Matrix& q, const Matrix& w0, double gamma) {
  detail::check_gamma(gamma);
  require_dims(q.rows() == q.cols() && w0.rows() == q.rows() && w0.cols() == q.rows(),
               "propagate_direct: Q and W0 must be n x n");
  if (gamma == 0.0) return w0;
  const auto n = q.rows();
  Matrix a = -gamma * q;
  a.diagonal().array() += 1.0;
  Eigen::PartialPivLU<Matrix> lu(a);
  Matrix rhs = (1.0 - gamma) * w0;
  Matrix w = lu.solve(rhs);
  if (!w.allFinite()) throw NumericError("propagate_direct: solve produced non-finite values");
  // Residual check guards against a numerically singular system.
  const double resid = (a * w - rhs).cwiseAbs().maxCoeff();
  if (resid > 1e-6 * std::max(1.0, rhs.cwiseAbs().maxCoeff()) * static_cast<double>(n))
    throw NumericError("propagate_direct: system is numerically singular (residual " +
                       std::to_string(resid) + ")");
  return w;
}

struct IterativeResult {
  Matrix values;
  int iterations = 0;
  double last_change = 0.0;
};

/// Fixed-point iteration W <- gamma Q W + (1 - gamma) W0 from W0, stopping
/// once the max-abs change is <= tol.
inline IterativeResult propagate_iterative(const NeighborGraph& g, const Matrix& w0, double gamma,
                                           double tol, int max_iter) {
  detail::check_gamma(gamma);
  require(tol > 0.0, "propagate_iterative: tol must be positive");
  require_dims(static_cast<Index>(w0.rows()) == g.n && w0.rows() == w0.cols(),
               "propagate_iterative: W0 must be n x n");
  const Matrix base = (1.0 - gamma) * w0;
  IterativeResult res{w0, 0, 0.0};
  for (int it = 1; it <= max_iter; ++it) {
    Matrix next = gamma * detail::apply_q(g, res.values) + base;
    res.last_change = (next - res.values).cwiseAbs().maxCoeff();
    res.values = std::move(next);
    res.iterations = it;
    if (!std::isfinite(res.last_change))
      throw NumericError("propagate_iterative: non-finite values at iteration " + std::to_string(it));
    if (res.last_change <= tol) return res;
  }
  throw ConvergenceError("propagate_iterative: no convergence after " + std::to_string(max_iter) +
                             " iterations (last change " + std::to_string(res.last_change) + ")",
                         res.last_change, max_iter);
}

/// Same as above with an explicit dense Q; used where only Q is at hand.
inline IterativeResult propagate_iterative(const Matrix& q, const Matrix& w0, double gamma,
                                           double tol, int max_iter) {
  detail::check_gamma(gamma);
  require(tol > 0.0, "propagate_iterative: tol must be positive");
  require_dims(q.rows() == q.cols() && w0.rows() == q.rows() && w0.cols() == q.rows(),
               "propagate_iterative: Q and W0 must be n x n");
  const Matrix base = (1.0 - gamma) * w0;
  IterativeResult res{w0, 0, 0.0};
  for (int it = 1; it <= max_iter; ++it) {
    Matrix next = gamma * (q * res.values) + base;
    res.last_change = (next - res.values).cwiseAbs().maxCoeff();
    res.values = std::move(next);
    res.iterations = it;
    if (!std::isfinite(res.last_change))
      throw NumericError("propagate_iterative: non-finite values at iteration " + std::to_string(it));
    if (res.last_change <= tol) return res;
  }
  throw ConvergenceError("propagate_iterative: no convergence after " + std::to_string(max_iter) +
                             " iterations (last change " + std::to_string(res.last_change) + ")",
                         res.last_change, max_iter);
}

/// (W + W^T) / 2.
inline Matrix symmetrize(const Matrix& w) {
  require_dims(w.rows() == w.cols(), "symmetrize: matrix must be square");
  Matrix out(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) out(i, j) = (w(i, j) + w(j, i)) / 2.0;
  return out;
}

enum class Solver { Auto, Direct, Iterative };

struct PropagationOptions {
  double gamma = 0.99;
  Solver solver = Solver::Auto;
  Index direct_max_nodes = 2000;
  double tol = 1e-8;
  int max_iter = 10000;
};

/// Full affinity pipeline for one partition: seed affinities, propagation
/// over the graph, symmetrization.
inline AffinityMatrix propagate(const NeighborGraph& g, const Matrix& w0,
                                const PropagationOptions& opt = {}) {
  const bool direct = opt.solver == Solver::Direct ||
                      (opt.solver == Solver::Auto && g.n <= opt.direct_max_nodes);
  Matrix w_star = direct ? propagate_direct(neighbor_matrix(g), w0, opt.gamma)
                         : propagate_iterative(g, w0, opt.gamma, opt.tol, opt.max_iter).values;
  return {symmetrize(w_star), opt.gamma};
}

}  // namespace ssdml
