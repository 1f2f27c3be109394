#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "isvd/linalg.hpp"
#include "isvd/testing/oracles.hpp"

using namespace isvd;
using isvd::test::gaussian;
using isvd::test::mat;

namespace {

void expect_valid(const Matrix& a, const SvdFactors& f) {
  EXPECT_LE((a - reconstruct(f)).norm(), 1e-9 * std::max(1.0, a.norm()));
  EXPECT_LE(orthonormality_defect(f.U), 1e-8);
  EXPECT_LE(orthonormality_defect(f.Vt.transpose()), 1e-8);
  for (Index i = 0; i < f.S.size(); ++i) {
    EXPECT_GE(f.S(i), 0.0);
    if (i > 0) EXPECT_LE(f.S(i), f.S(i - 1));
  }
}

}  // namespace

TEST(FullSvd, PythagoreanColumn) {
  const SvdFactors f = full_svd(mat({{3, 0}, {0, 0}, {4, 0}}));
  ASSERT_EQ(f.S.size(), 2);
  EXPECT_NEAR(f.S(0), 5.0, 1e-12);
  EXPECT_EQ(f.S(1), 0.0);
}

TEST(FullSvd, Identity) {
  const SvdFactors f = full_svd(Matrix::Identity(3, 3));
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(f.S(i), 1.0, 1e-14);
  EXPECT_NEAR((f.U.cwiseAbs() * f.Vt.cwiseAbs() - Matrix::Identity(3, 3)).norm(), 0.0, 1e-12);
}

TEST(FullSvd, MatchesGramEigenvalues) {
  const Matrix a = gaussian(8, 6, 42);
  const SvdFactors f = full_svd(a);
  const auto g = isvd::testing::gram_singular_values(a);
  ASSERT_EQ(f.S.size(), static_cast<Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(f.S(static_cast<Index>(i)), g[i], 1e-8);
}

TEST(FullSvd, FrozenSpectrum) {
  // Values from the Gram-eigenvalue oracle for this 3x2 matrix:
  // A^T A = [[35, 44], [44, 56]], eigenvalues 45.5 +- sqrt(10.5^2 + 44^2).
  const SvdFactors f = full_svd(mat({{1, 2}, {3, 4}, {5, 6}}));
  const double d = std::sqrt(10.5 * 10.5 + 44.0 * 44.0);
  EXPECT_NEAR(f.S(0), std::sqrt(45.5 + d), 1e-12);
  EXPECT_NEAR(f.S(1), std::sqrt(45.5 - d), 1e-12);
}

TEST(FullSvd, PostconditionsOnShapes) {
  std::uint64_t seed = 1;
  for (Index m : {1, 2, 7, 30, 70})
    for (Index n : {1, 3, 9, 65}) {
      const Matrix a = gaussian(m, n, seed++);
      expect_valid(a, full_svd(a));
    }
}

TEST(FullSvd, RejectsNonFinite) {
  Matrix a = Matrix::Ones(2, 2);
  a(1, 0) = std::nan("");
  EXPECT_THROW(full_svd(a), std::invalid_argument);
  a(1, 0) = INFINITY;
  EXPECT_THROW(full_svd(a), std::invalid_argument);
}

TEST(FullSvd, SignCanonicalization) {
  const Matrix a = gaussian(6, 4, 9);
  const SvdFactors f = full_svd(a);
  const SvdFactors g = full_svd(-a);
  for (Index c = 0; c < f.U.cols(); ++c) {
    Index arg = 0;
    f.U.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GE(f.U(arg, c), 0.0);
  }
  // Negating A negates Vt and leaves U untouched under the convention.
  EXPECT_NEAR((f.U - g.U).norm(), 0.0, 1e-10);
  EXPECT_NEAR((f.Vt + g.Vt).norm(), 0.0, 1e-10);
}

TEST(FullSvd, SignTieLowestIndexWins) {
  const double h = std::sqrt(0.5);
  SvdFactors f{mat({{-h, h}, {h, h}}), test::vec({2, 1}), mat({{1, 0}, {0, 1}})};
  isvd::detail::canonicalize_signs(f);
  EXPECT_EQ(f.U(0, 0), h);
  EXPECT_EQ(f.U(1, 0), -h);
  EXPECT_EQ(f.Vt(0, 0), -1.0);
  EXPECT_EQ(f.U(0, 1), h);
}

TEST(FullSvd, NegligibleValuesFlushedToZero) {
  const Matrix a = test::low_rank(10, 8, 2, 5);
  const SvdFactors f = full_svd(a);
  for (Index i = 2; i < f.S.size(); ++i) EXPECT_EQ(f.S(i), 0.0);
}

TEST(FullSvd, EnergyIdentity) {
  const Matrix a = gaussian(12, 9, 77);
  EXPECT_NEAR(full_svd(a).S.squaredNorm(), a.squaredNorm(), 1e-9 * a.squaredNorm());
}

TEST(TruncatedSvd, DominantDirection) {
  const SvdFactors f = truncated_svd(mat({{4, 0}, {0, 3}}), 1);
  ASSERT_EQ(f.S.size(), 1);
  EXPECT_NEAR(f.S(0), 4.0, 1e-14);
  EXPECT_NEAR((reconstruct(f) - mat({{4, 0}, {0, 0}})).norm(), 0.0, 1e-14);
}

TEST(TruncatedSvd, FullRankKept) {
  const Matrix a = mat({{4, 0}, {0, 3}});
  EXPECT_NEAR((reconstruct(truncated_svd(a, 2)) - a).norm(), 0.0, 1e-14);
}

TEST(TruncatedSvd, ExactOnRankThree) {
  const Matrix a = test::low_rank(10, 7, 3, 11);
  EXPECT_LE((a - reconstruct(truncated_svd(a, 3))).norm(), 1e-8);
}

TEST(TruncatedSvd, ResidualIsTrailingEnergy) {
  const Matrix a = gaussian(15, 11, 3);
  const auto sv = isvd::testing::gram_singular_values(a);
  for (Index k : {1, 4, 8}) {
    double tail = 0.0;
    for (std::size_t i = static_cast<std::size_t>(k); i < sv.size(); ++i) tail += sv[i] * sv[i];
    EXPECT_NEAR((a - reconstruct(truncated_svd(a, k))).norm(), std::sqrt(tail), 1e-8);
  }
}

TEST(TruncatedSvd, EckartYoungAgainstRandomCompetitors) {
  const Matrix a = gaussian(9, 7, 21);
  const double best = (a - reconstruct(truncated_svd(a, 2))).norm();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Matrix b = test::low_rank(9, 7, 2, 500 + s) * 0.3;
    EXPECT_LE(best, (a - b).norm() + 1e-9);
  }
  // Competitor built from perturbed optimal factors.
  SvdFactors f = truncated_svd(a, 2);
  f.S(1) *= 1.01;
  EXPECT_LE(best, (a - reconstruct(f)).norm() + 1e-9);
}

TEST(TruncatedSvd, RejectsRankBelowOne) {
  EXPECT_THROW(truncated_svd(Matrix::Identity(2, 2), 0), std::invalid_argument);
}

TEST(TruncatedSvd, RankCappedByShape) {
  EXPECT_EQ(truncated_svd(gaussian(3, 5, 1), 10).rank(), 3);
}

TEST(Reconstruct, Diagonal) {
  SvdFactors f{Matrix::Identity(2, 2), test::vec({2, 1}), Matrix::Identity(2, 2)};
  EXPECT_EQ(reconstruct(f), mat({{2, 0}, {0, 1}}));
}

TEST(Reconstruct, RoundTrip) {
  const Matrix a = gaussian(7, 5, 8);
  EXPECT_LE((reconstruct(full_svd(a)) - a).norm(), 1e-9 * std::max(1.0, a.norm()));
}

TEST(Reconstruct, ZeroSpectrum) {
  SvdFactors f{Matrix::Identity(3, 2), Vector::Zero(2), Matrix::Identity(2, 4)};
  EXPECT_EQ(reconstruct(f), Matrix::Zero(3, 4));
}

TEST(Reconstruct, ShapeMismatch) {
  SvdFactors f{Matrix::Identity(3, 2), Vector::Zero(3), Matrix::Identity(2, 4)};
  EXPECT_THROW(reconstruct(f), std::invalid_argument);
}

TEST(FrobeniusNorm, Examples) {
  EXPECT_DOUBLE_EQ(frobenius_norm(mat({{3, 4}})), 5.0);
  EXPECT_EQ(frobenius_norm(Matrix::Zero(3, 3)), 0.0);
  const Matrix a = gaussian(6, 6, 4);
  EXPECT_NEAR(frobenius_norm(a), full_svd(a).S.norm(), 1e-9);
}

TEST(PrincipalAngle, Examples) {
  const Matrix i4 = Matrix::Identity(4, 4);
  EXPECT_EQ(principal_angle_max(i4.leftCols(2), i4.leftCols(2)), 0.0);
  const Matrix e1 = test::vec({1, 0}), e2 = test::vec({0, 1});
  EXPECT_NEAR(principal_angle_max(e1, e2), std::numbers::pi / 2, 1e-15);
  const Matrix diag = test::vec({1 / std::sqrt(2.0), 1 / std::sqrt(2.0)});
  EXPECT_NEAR(principal_angle_max(e1, diag), std::numbers::pi / 4, 1e-15);
}

TEST(PrincipalAngle, SymmetricAndRotationInvariant) {
  const Matrix q1 = test::random_basis(8, 3, 1);
  const Matrix q2 = test::random_basis(8, 3, 2);
  EXPECT_NEAR(principal_angle_max(q1, q2), principal_angle_max(q2, q1), 1e-12);
  // Same subspace, different basis: rotate q1 by a random orthogonal 3x3.
  const Matrix rot = test::random_basis(3, 3, 3);
  EXPECT_LE(principal_angle_max(q1, q1 * rot), 1e-12);
  // Cross-check against the arccos-of-Gram route.
  EXPECT_NEAR(principal_angle_max(q1, q2), isvd::testing::principal_angle_via_gram(q1, q2), 1e-7);
}

TEST(PrincipalAngle, RangeAndRejections) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double a = principal_angle_max(test::random_basis(6, 2, s), test::random_basis(6, 2, s + 100));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, std::numbers::pi / 2);
  }
  EXPECT_THROW(principal_angle_max(Matrix::Identity(3, 2), Matrix::Identity(3, 1)), std::invalid_argument);
  EXPECT_THROW(principal_angle_max(2.0 * Matrix::Identity(3, 2), Matrix::Identity(3, 2)), std::invalid_argument);
}

TEST(OrthonormalityDefect, Examples) {
  EXPECT_EQ(orthonormality_defect(Matrix::Identity(3, 3)), 0.0);
  EXPECT_NEAR(orthonormality_defect(2.0 * Matrix::Identity(2, 2)), 3.0 * std::sqrt(2.0), 1e-14);
}

TEST(Oracle, JacobiEigenvaluesKnownMatrix) {
  // [[2,1],[1,2]] has eigenvalues 3 and 1.
  const auto ev = isvd::testing::symmetric_eigenvalues(mat({{2, 1}, {1, 2}}));
  EXPECT_NEAR(ev[0], 3.0, 1e-14);
  EXPECT_NEAR(ev[1], 1.0, 1e-14);
}
