#pragma once

#include "ssdml/baselines.hpp"
#include "ssdml/common.hpp"
#include "ssdml/encoder.hpp"
#include "ssdml/graph.hpp"
#include "ssdml/metric.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace ssdml {

/// Central differences of a scalar function of a matrix, entry by entry.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double h = 1e-6) {
  Matrix g(at.rows(), at.cols());
  Matrix x = at;
  for (Eigen::Index j = 0; j < at.cols(); ++j)
    for (Eigen::Index i = 0; i < at.rows(); ++i) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double fp = f(x);
      x(i, j) = orig - h;
      const double fm = f(x);
      x(i, j) = orig;
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  return g;
}

/// max |a - b| / max(max |a|, max |b|, 1e-10): relative to the gradient's
/// scale, so tiny entries do not dominate.
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  require_dims(analytic.rows() == numeric.rows() && analytic.cols() == numeric.cols(),
               "relative_error: shape mismatch");
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-10});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

namespace gradcheck {

inline Matrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng);
  return m;
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline std::vector<Triplet> random_triplets(Rng& rng, Index n, Index count) {
  std::vector<Triplet> out;
  std::uniform_int_distribution<Index> pick(0, n - 1);
  while (out.size() < count) {
    Triplet t{pick(rng), pick(rng), pick(rng)};
    if (t.anchor != t.positive && t.anchor != t.negative && t.positive != t.negative) out.push_back(t);
  }
  return out;
}

struct Instance {
  Matrix l;
  Matrix z;
  std::vector<Triplet> batch;
  AngularConfig cfg;
};

inline Instance angular_instance(Rng& rng) {
  const int d = uniform_int(rng, 2, 10);
  const int l = uniform_int(rng, 1, d);
  const int n = uniform_int(rng, 3, 8);
  Instance in;
  in.l = gaussian(d, l, rng, 0.6);
  in.z = gaussian(n, d, rng, 0.6);
  in.batch = random_triplets(rng, static_cast<Index>(n), static_cast<Index>(uniform_int(rng, 1, 6)));
  in.cfg.alpha_deg = std::uniform_real_distribution<double>(25.0, 55.0)(rng);
  return in;
}

inline double angular_wrt_l(std::uint64_t seed) {
  Rng rng(seed);
  const auto in = angular_instance(rng);
  const Matrix analytic = angular_loss_grad_L(in.l, in.z, in.batch, in.cfg);
  const Matrix numeric = finite_difference([&](const Matrix& l) { return angular_loss(l, in.z, in.batch, in.cfg); }, in.l);
  return relative_error(analytic, numeric);
}

inline double angular_wrt_embeddings(std::uint64_t seed) {
  Rng rng(seed);
  const auto in = angular_instance(rng);
  const Matrix analytic = angular_loss_grad_embeddings(in.l, in.z, in.batch, in.cfg);
  const Matrix numeric = finite_difference([&](const Matrix& z) { return angular_loss(in.l, z, in.batch, in.cfg); }, in.z);
  return relative_error(analytic, numeric);
}

/// Total angular loss through the encoder, checked for both A and b.
inline double encoder_end_to_end(std::uint64_t seed) {
  Rng rng(seed);
  const int d_in = uniform_int(rng, 2, 8);
  const int d = uniform_int(rng, 2, 8);
  const int l = uniform_int(rng, 1, d);
  const int n = uniform_int(rng, 3, 8);
  Encoder enc{gaussian(d, d_in, rng), gaussian(d, 1, rng).col(0), uniform_int(rng, 0, 3) != 0};
  const Matrix x = gaussian(n, d_in, rng);
  const Matrix lm = gaussian(d, l, rng);
  const auto batch = random_triplets(rng, static_cast<Index>(n), static_cast<Index>(uniform_int(rng, 1, 6)));
  const AngularConfig cfg{std::uniform_real_distribution<double>(25.0, 55.0)(rng)};

  const Matrix z = forward(enc, x);
  const auto grads = backward(enc, x, angular_loss_grad_embeddings(lm, z, batch, cfg));
  const Matrix num_a = finite_difference(
      [&](const Matrix& a) {
        Encoder e = enc;
        e.a = a;
        return angular_loss(lm, forward(e, x), batch, cfg);
      },
      enc.a);
  const Matrix num_b = finite_difference(
      [&](const Matrix& b) {
        Encoder e = enc;
        e.b = b.col(0);
        return angular_loss(lm, forward(e, x), batch, cfg);
      },
      Matrix(enc.b));
  // b alone can have an exactly zero gradient (the loss is translation
  // invariant without normalization), so score [A | b] as one block.
  Matrix analytic(enc.a.rows(), enc.a.cols() + 1), numeric(enc.a.rows(), enc.a.cols() + 1);
  analytic << grads.da, grads.db;
  numeric << num_a, num_b;
  return relative_error(analytic, numeric);
}

inline Matrix random_psd(Rng& rng, int d, double scale) {
  const Matrix a = gaussian(d, d, rng, scale);
  return a * a.transpose();
}

inline double seraph_wrt_m(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 2, 6);
  const int n = uniform_int(rng, 4, 10);
  const Matrix z = gaussian(n, d, rng);
  const Matrix m = random_psd(rng, d, 0.5);
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(n) - 1);
  std::vector<LabeledPair> lab;
  std::vector<IndexPair> unl;
  for (int c = 0; c < 6; ++c) {
    Index i = pick(rng), j = pick(rng);
    if (i == j) continue;
    lab.push_back({i, j, uniform_int(rng, 0, 1) ? 1 : -1});
    Index p = pick(rng), q = pick(rng);
    if (p != q) unl.push_back({p, q});
  }
  SeraphConfig cfg{std::uniform_real_distribution<double>(0.5, 3.0)(rng), 0.7, 1e-2};
  const Matrix analytic = seraph_gradient(m, z, lab, unl, cfg);
  const Matrix numeric = finite_difference([&](const Matrix& mm) { return seraph_objective(mm, z, lab, unl, cfg); }, m);
  return relative_error(analytic, numeric);
}

inline double lrml_wrt_m(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 2, 6);
  const int n = uniform_int(rng, 4, 10);
  const Matrix z = gaussian(n, d, rng);
  const Matrix m = random_psd(rng, d, 0.5);
  Matrix w = gaussian(n, n, rng).cwiseAbs();
  w = ((w + w.transpose()) / 2.0).eval();
  w.diagonal().setZero();
  const Matrix lap = laplacian(w);
  std::uniform_int_distribution<Index> pick(0, static_cast<Index>(n) - 1);
  std::vector<LabeledPair> lab;
  for (int c = 0; c < 6; ++c) {
    Index i = pick(rng), j = pick(rng);
    if (i != j) lab.push_back({i, j, uniform_int(rng, 0, 1) ? 1 : -1});
  }
  LrmlConfig cfg{std::uniform_real_distribution<double>(0.1, 2.0)(rng), std::uniform_real_distribution<double>(0.1, 2.0)(rng)};
  const Matrix analytic = lrml_gradient(m, z, lab, lap, cfg);
  const Matrix numeric = finite_difference([&](const Matrix& mm) { return lrml_objective(mm, z, lab, lap, cfg); }, m);
  return relative_error(analytic, numeric);
}

struct Suite {
  std::string name;
  std::function<double(std::uint64_t)> run;
};

inline std::vector<Suite> suites() {
  return {{"angular_L", angular_wrt_l},
          {"angular_embeddings", angular_wrt_embeddings},
          {"encoder_end_to_end", encoder_end_to_end},
          {"seraph_M", seraph_wrt_m},
          {"lrml_M", lrml_wrt_m}};
}

/// Worst relative error of every suite over `instances` seeded instances.
inline std::map<std::string, double> run_all(std::uint64_t seed, int instances) {
  std::map<std::string, double> worst;
  const auto all = suites();
  for (std::size_t s = 0; s < all.size(); ++s) {
    double w = 0.0;
    for (int i = 0; i < instances; ++i)
      w = std::max(w, all[s].run(mix_seed(seed, s * 100003 + static_cast<std::uint64_t>(i))));
    worst[all[s].name] = w;
  }
  return worst;
}

}  // namespace gradcheck
}  // namespace ssdml
