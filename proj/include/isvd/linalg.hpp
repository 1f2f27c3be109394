// Dense matrix primitives and batch SVD routines.
//
// The batch SVD serves two roles: it decomposes the small cores inside the
// incremental engine, and it is the full-SVD oracle that drift metrics are
// measured against.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace isvd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thin SVD triple U * diag(S) * Vt.
///
/// U is m x r with orthonormal columns, Vt is r x n with orthonormal rows,
/// S is nonnegative and nonincreasing.
struct SvdFactors {
  Matrix U;
  Vector S;
  Matrix Vt;

  Index rank() const { return S.size(); }
  Index rows() const { return U.rows(); }
  Index cols() const { return Vt.cols(); }
};

/// Singular values below this fraction of the largest one are reported as 0.
inline constexpr double kRelativeZeroThreshold = 1e-12;

/// Above this size the batch SVD switches from one-sided Jacobi to
/// divide-and-conquer bidiagonalization.
inline constexpr Index kJacobiCutoff = 64;

namespace detail {

inline void require_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": matrix has non-finite entries");
  }
}

// Largest-magnitude entry of each U column made nonnegative (lowest index wins
// ties); the matching Vt row is flipped with it.
inline void canonicalize_signs(SvdFactors& f) {
  for (Index c = 0; c < f.U.cols(); ++c) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < f.U.rows(); ++i) {
      const double v = std::abs(f.U(i, c));
      if (v > best_abs) {
        best_abs = v;
        best = i;
      }
    }
    if (f.U.rows() > 0 && f.U(best, c) < 0.0) {
      f.U.col(c) *= -1.0;
      f.Vt.row(c) *= -1.0;
    }
  }
}

inline void zero_negligible(Vector& s) {
  if (s.size() == 0) return;
  const double cutoff = kRelativeZeroThreshold * s(0);
  for (Index i = 0; i < s.size(); ++i) {
    if (s(i) < cutoff) s(i) = 0.0;
  }
}

}  // namespace detail

/// Thin SVD of a dense matrix: r = min(m, n) triplets, sign-canonicalized,
/// with negligible singular values flushed to zero.
inline SvdFactors full_svd(const Matrix& a) {
  detail::require_finite(a, "full_svd");
  SvdFactors f;
  const Index r = std::min(a.rows(), a.cols());
  if (r == 0) {
    f.U = Matrix(a.rows(), 0);
    f.S = Vector(0);
    f.Vt = Matrix(0, a.cols());
    return f;
  }
  if (r < kJacobiCutoff) {
    Eigen::JacobiSVD<Matrix, Eigen::ColPivHouseholderQRPreconditioner> svd(
        a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    f.U = svd.matrixU();
    f.S = svd.singularValues();
    f.Vt = svd.matrixV().transpose();
  } else {
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    f.U = svd.matrixU();
    f.S = svd.singularValues();
    f.Vt = svd.matrixV().transpose();
  }
  detail::zero_negligible(f.S);
  detail::canonicalize_signs(f);
  return f;
}

/// Keep the leading min(k, r) triplets of an existing decomposition.
inline SvdFactors leading(const SvdFactors& f, Index k) {
  const Index keep = std::min(k, f.rank());
  return SvdFactors{f.U.leftCols(keep), f.S.head(keep), f.Vt.topRows(keep)};
}

/// Best rank-k approximation (Eckart-Young) as a factor triple.
inline SvdFactors truncated_svd(const Matrix& a, Index k) {
  if (k < 1) throw std::invalid_argument("truncated_svd: rank must be >= 1");
  return leading(full_svd(a), k);
}

inline Matrix reconstruct(const SvdFactors& f) {
  if (f.U.cols() != f.S.size() || f.Vt.rows() != f.S.size()) {
    throw std::invalid_argument("reconstruct: factor shapes disagree");
  }
  return f.U * f.S.asDiagonal() * f.Vt;
}

inline double frobenius_norm(const Matrix& a) { return a.norm(); }

/// ||Q^T Q - I||_F.
inline double orthonormality_defect(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

/// Largest principal angle between the column spaces of two orthonormal bases.
///
/// cos(theta) is the smallest singular value of Q1^T Q2. The sine is taken from
/// the part of Q2 outside span(Q1) so that near-zero angles keep full relative
/// accuracy; theta = atan2(sin, cos) agrees with arccos(sigma_min) everywhere.
inline double principal_angle_max(const Matrix& q1, const Matrix& q2) {
  if (q1.cols() != q2.cols() || q1.rows() != q2.rows()) {
    throw std::invalid_argument("principal_angle_max: bases have different shapes");
  }
  constexpr double kMaxDefect = 1e-6;
  if (orthonormality_defect(q1) > kMaxDefect || orthonormality_defect(q2) > kMaxDefect) {
    throw std::invalid_argument("principal_angle_max: inputs are not orthonormal");
  }
  if (q1.cols() == 0) return 0.0;

  const Matrix cross = q1.transpose() * q2;
  const Vector cosines = Eigen::JacobiSVD<Matrix>(cross).singularValues();
  const double c = std::clamp(cosines(cosines.size() - 1), 0.0, 1.0);

  const Matrix outside = q2 - q1 * cross;
  const double s =
      std::clamp(Eigen::JacobiSVD<Matrix>(outside).singularValues()(0), 0.0, 1.0);
  return std::clamp(std::atan2(s, c), 0.0, std::numbers::pi / 2);
}

}  // namespace isvd
