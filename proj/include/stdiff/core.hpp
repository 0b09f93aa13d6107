#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace stdiff {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Single RNG type used everywhere so seeded runs are reproducible bit-for-bit.
using Rng = std::mt19937_64;

inline Matrix randn(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<Scalar> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

inline Matrix rand_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                           Scalar lo = -1.0, Scalar hi = 1.0) {
  std::uniform_real_distribution<Scalar> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

struct SpecError : std::runtime_error {
  explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace stdiff
