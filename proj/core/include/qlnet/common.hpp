#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace qlnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when array dimensions do not chain or do not match the data.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown for invalid configuration values (negative rates, empty ranges, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an input file is missing, truncated or has the wrong format.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an iterative numerical routine fails to converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds from a
// master seed so that parallel execution order never changes results.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(master ^ mix_seed(a)) ^ b) ^ mix_seed(c + 0x51ULL));
}

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row-major so the draw order is independent of Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * dist(rng);
  return m;
}

inline Vector gaussian_vector(Eigen::Index n, double scale, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * dist(rng);
  return v;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace qlnet
