#pragma once

#include "ssdml/common.hpp"

#include <string>

namespace ssdml {

/// Affine feature map z = A x + b, optionally followed by l2 normalization.
struct Encoder {
  Matrix a;  // d x d_in
  Vector b;  // d
  bool normalize = true;

  Index input_dim() const { return static_cast<Index>(a.cols()); }
  Index output_dim() const { return static_cast<Index>(a.rows()); }

  /// A = [I 0] (top-left identity), b = 0: starts as a coordinate projection.
  static Encoder identity(Index d_in, Index d, bool normalize) {
    require(d >= 1 && d_in >= 1, "Encoder: dimensions must be >= 1");
    return {Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d_in)),
            Vector::Zero(static_cast<Eigen::Index>(d)), normalize};
  }
};

struct EncoderGrad {
  Matrix da;
  Vector db;
};

inline void check_encoder_input(const Encoder& enc, const Matrix& x) {
  require_dims(x.cols() == enc.a.cols(), "encoder: input has " + std::to_string(x.cols()) +
                                             " columns, expected " + std::to_string(enc.a.cols()));
  require_dims(enc.b.size() == enc.a.rows(), "encoder: bias length differs from output dim");
}

inline Matrix forward(const Encoder& enc, const Matrix& x) {
  check_encoder_input(enc, x);
  Matrix z = x * enc.a.transpose();
  z.rowwise() += enc.b.transpose();
  return enc.normalize ? normalize_rows(z) : z;
}

/// Gradient of a loss with respect to (A, b) given dLoss/dz for each row
/// of forward(enc, x). Normalization contributes the Jacobian (I - zz^T)/||z||.
inline EncoderGrad backward(const Encoder& enc, const Matrix& x, const Matrix& upstream) {
  check_encoder_input(enc, x);
  require_dims(upstream.rows() == x.rows() && upstream.cols() == enc.a.rows(),
               "encoder backward: upstream gradient shape mismatch");
  Matrix g = upstream;
  if (enc.normalize) {
    Matrix pre = x * enc.a.transpose();
    pre.rowwise() += enc.b.transpose();
    for (Eigen::Index i = 0; i < pre.rows(); ++i) {
      const double n = pre.row(i).norm();
      if (!(n >= 1e-12))
        throw NumericError("degenerate embedding: row " + std::to_string(i) + " maps to zero");
      const Vector zhat = pre.row(i).transpose() / n;
      const Vector gi = upstream.row(i).transpose();
      g.row(i) = ((gi - zhat * zhat.dot(gi)) / n).transpose();
    }
  }
  return {g.transpose() * x, g.colwise().sum().transpose()};
}

inline Encoder sgd_update(const Encoder& enc, const EncoderGrad& grad, double lr) {
  require(lr >= 0.0, "sgd_update: learning rate must be non-negative");
  require_dims(grad.da.rows() == enc.a.rows() && grad.da.cols() == enc.a.cols() &&
                   grad.db.size() == enc.b.size(),
               "sgd_update: gradient shape mismatch");
  Encoder out = enc;
  out.a -= lr * grad.da;
  out.b -= lr * grad.db;
  return out;
}

}  // namespace ssdml
