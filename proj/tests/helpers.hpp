#pragma once

#include <initializer_list>
#include <random>

#include "isvd/linalg.hpp"

namespace isvd::test {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Matrix gaussian(Index m, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = normal(rng);
  return a;
}

inline Matrix low_rank(Index m, Index n, Index r, std::uint64_t seed) {
  return gaussian(m, r, seed) * gaussian(n, r, seed + 1000).transpose();
}

/// Random orthonormal basis of a k-dimensional subspace of R^n.
inline Matrix random_basis(Index n, Index k, std::uint64_t seed) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(n, k, seed));
  return qr.householderQ() * Matrix::Identity(n, k);
}

}  // namespace isvd::test
