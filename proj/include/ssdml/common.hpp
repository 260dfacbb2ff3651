#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ssdml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = std::size_t;
using Rng = std::mt19937_64;

// Error taxonomy. ConfigError maps to usage failures at the CLI (exit 1);
// everything derived from DataError or NumericError maps to exit 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct FormatError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  using DataError::DataError;
};

struct DimensionError : DataError {
  using DataError::DataError;
};

struct NumericError : Error {
  using Error::Error;
};

struct ConvergenceError : NumericError {
  ConvergenceError(const std::string& what, double residual_, int iterations_)
      : NumericError(what), residual(residual_), iterations(iterations_) {}
  double residual;
  int iterations;
};

// SplitMix64 finalizer; used to derive independent child seeds
// (per partition, per epoch, per restart) from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline void require_dims(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

/// Row-wise l2 normalization. Rows with norm below `eps` raise NumericError.
inline Matrix normalize_rows(const Matrix& z, double eps = 1e-12) {
  Matrix out = z;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (!(n >= eps)) {
      throw NumericError("degenerate embedding: row " + std::to_string(i) +
                         " has norm below " + std::to_string(eps));
    }
    out.row(i) /= n;
  }
  return out;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ssdml
