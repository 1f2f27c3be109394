// Incremental truncated SVD of an evolving dense matrix.
//
// Supports row appends, column appends and single-entry (rank-1) updates using
// small-core Brand-style algebra, plus full refreshes from the exact matrix.

#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include "isvd/linalg.hpp"

namespace isvd {

struct RowAppend {
  Vector x;
};

struct ColAppend {
  Vector y;
};

struct RankOne {
  Index i = 0;
  Index j = 0;
  double delta = 0.0;
};

using UpdateEvent = std::variant<RowAppend, ColAppend, RankOne>;

inline const char* event_name(const UpdateEvent& ev) {
  return std::visit(
      [](const auto& e) -> const char* {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, RowAppend>) return "row";
        else if constexpr (std::is_same_v<T, ColAppend>) return "col";
        else return "rank1";
      },
      ev);
}

struct EngineConfig {
  /// Residual norms at or below this are treated as zero (no new direction).
  double tol = 1e-10;
  /// Re-orthonormalize factors when their defect exceeds reortho_threshold.
  bool reortho_guard = false;
  double reortho_threshold = 1e-6;
};

/// Outcome of an append: residual norm outside the current subspace and the
/// norm of the appended vector.
struct AppendInfo {
  double residual_norm = 0.0;
  double input_norm = 0.0;
  bool new_direction = false;
};

/// Core decomposition used for the small (r+1)-sized problems.
struct ExactCoreSvd {
  SvdFactors operator()(const Matrix& core) const { return full_svd(core); }
};

namespace detail {

// Row append on a factor triple (U, S, Vt) of an m x n matrix. Returns the
// untruncated factors of the (m+1) x n matrix and the residual information.
template <class CoreSvd>
std::pair<SvdFactors, AppendInfo> append_row(const Matrix& U, const Vector& S,
                                             const Matrix& Vt, const Vector& x,
                                             double tol, const CoreSvd& core_svd) {
  const Index m = U.rows();
  const Index n = Vt.cols();
  const Index r = S.size();

  // Projection onto span(V), repeated once to keep z orthogonal to V when x
  // nearly lies in the subspace.
  Vector p = Vt * x;
  Vector z = x - Vt.transpose() * p;
  const Vector correction = Vt * z;
  p += correction;
  z -= Vt.transpose() * correction;
  double rho = z.norm();

  AppendInfo info;
  info.input_norm = x.norm();
  info.residual_norm = rho;
  const bool grow = rho > tol && r < n;
  info.new_direction = grow;

  // K = [[diag(S), 0], [p^T, rho]]; without a new direction the zero column
  // is dropped so the right subspace keeps its dimension.
  const Index kc = grow ? r + 1 : r;
  Matrix core = Matrix::Zero(r + 1, kc);
  core.topLeftCorner(r, r) = S.asDiagonal();
  core.block(r, 0, 1, r) = p.transpose();
  if (grow) core(r, r) = rho;

  const SvdFactors kf = core_svd(core);
  const Index c = kf.rank();

  SvdFactors out;
  out.U.resize(m + 1, c);
  out.U.topRows(m) = U * kf.U.topRows(r);
  out.U.row(m) = kf.U.row(r);
  out.S = kf.S;
  if (grow) {
    Matrix basis(r + 1, n);
    basis.topRows(r) = Vt;
    basis.row(r) = (z / rho).transpose();
    out.Vt = kf.Vt * basis;
  } else {
    out.Vt = kf.Vt * Vt;
  }
  return {std::move(out), info};
}

}  // namespace detail

/// Incremental SVD engine state.
///
/// Holds the maintained factors, the exact tracked matrix, the incrementally
/// tracked squared Frobenius norm and an optional reference subspace. The
/// CoreSvd parameter decomposes the small core matrices; it exists so tests
/// can substitute a deliberately faulty solver.
template <class CoreSvd = ExactCoreSvd>
class BasicIncrementalSvd {
 public:
  BasicIncrementalSvd(Matrix a0, Index k, EngineConfig config = {}, CoreSvd core = {})
      : config_(config), core_svd_(std::move(core)) {
    if (a0.rows() == 0 || a0.cols() == 0) {
      throw std::invalid_argument("IncrementalSvd: initial matrix is empty");
    }
    if (k < 1) throw std::invalid_argument("IncrementalSvd: rank must be >= 1");
    if (!(config_.tol > 0.0)) throw std::invalid_argument("IncrementalSvd: tol must be > 0");
    factors_ = truncated_svd(a0, k);
    tracked_ = std::move(a0);
    sq_norm_ = tracked_.squaredNorm();
    work_rank_ = k;
  }

  AppendInfo row_append(const Vector& x) {
    if (x.size() != tracked_.cols()) {
      throw std::invalid_argument("row_append: expected length " +
                                  std::to_string(tracked_.cols()) + ", got " +
                                  std::to_string(x.size()));
    }
    if (!x.allFinite()) throw std::invalid_argument("row_append: non-finite entries");

    auto [updated, info] =
        detail::append_row(factors_.U, factors_.S, factors_.Vt, x, config_.tol, core_svd_);
    factors_ = leading(updated, work_rank_);

    tracked_.conservativeResize(tracked_.rows() + 1, Eigen::NoChange);
    tracked_.row(tracked_.rows() - 1) = x.transpose();
    sq_norm_ += x.squaredNorm();
    finish_update();
    return info;
  }

  /// Column append by the transpose trick: the row routine runs on
  /// (V, S, U^T) and the roles are swapped back afterwards.
  AppendInfo col_append(const Vector& y) {
    if (y.size() != tracked_.rows()) {
      throw std::invalid_argument("col_append: expected length " +
                                  std::to_string(tracked_.rows()) + ", got " +
                                  std::to_string(y.size()));
    }
    if (!y.allFinite()) throw std::invalid_argument("col_append: non-finite entries");

    const Matrix u_t = factors_.Vt.transpose();
    const Matrix vt_t = factors_.U.transpose();
    auto [updated_t, info] =
        detail::append_row(u_t, factors_.S, vt_t, y, config_.tol, core_svd_);
    SvdFactors updated{updated_t.Vt.transpose(), updated_t.S, updated_t.U.transpose()};
    factors_ = leading(updated, work_rank_);

    tracked_.conservativeResize(Eigen::NoChange, tracked_.cols() + 1);
    tracked_.col(tracked_.cols() - 1) = y;
    sq_norm_ += y.squaredNorm();
    finish_update();
    return info;
  }

  /// A(i, j) += delta, projected onto span(U) x span(V). Rank is preserved.
  void rank_one_update(Index i, Index j, double delta) {
    if (i < 0 || i >= tracked_.rows() || j < 0 || j >= tracked_.cols()) {
      throw std::invalid_argument("rank_one_update: index (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ") out of bounds");
    }
    if (!std::isfinite(delta)) throw std::invalid_argument("rank_one_update: non-finite delta");

    const Vector su = factors_.U.row(i).transpose();
    const Vector sv = factors_.Vt.col(j);
    Matrix core = factors_.S.asDiagonal();
    core += delta * su * sv.transpose();
    const SvdFactors kf = core_svd_(core);

    SvdFactors updated{factors_.U * kf.U, kf.S, kf.Vt * factors_.Vt};
    factors_ = leading(updated, work_rank_);

    const double old = tracked_(i, j);
    tracked_(i, j) = old + delta;
    sq_norm_ += 2.0 * delta * old + delta * delta;
    finish_update();
  }

  /// Dispatch an event. Appends return their residual information.
  std::optional<AppendInfo> apply(const UpdateEvent& ev) {
    return std::visit(
        [this](const auto& e) -> std::optional<AppendInfo> {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, RowAppend>) return row_append(e.x);
          else if constexpr (std::is_same_v<T, ColAppend>) return col_append(e.y);
          else {
            rank_one_update(e.i, e.j, e.delta);
            return std::nullopt;
          }
        },
        ev);
  }

  /// Relative residual ||z|| / ||x|| an append would see, without applying it.
  /// Empty for rank-1 events and zero-norm vectors.
  std::optional<double> novelty(const UpdateEvent& ev) const {
    auto ratio = [](const Matrix& basis_rows, const Vector& v) -> std::optional<double> {
      const double vn = v.norm();
      if (basis_rows.cols() != v.size() || vn == 0.0) return std::nullopt;
      Vector z = v - basis_rows.transpose() * (basis_rows * v);
      z -= basis_rows.transpose() * (basis_rows * z);
      return z.norm() / vn;
    };
    if (const auto* r = std::get_if<RowAppend>(&ev)) return ratio(factors_.Vt, r->x);
    if (const auto* c = std::get_if<ColAppend>(&ev)) return ratio(factors_.U.transpose(), c->y);
    return std::nullopt;
  }

  /// Recompute the truncated SVD from the exact matrix.
  void refresh(bool store_reference) {
    factors_ = truncated_svd(tracked_, work_rank_);
    sq_norm_ = tracked_.squaredNorm();
    if (store_reference) reference_ = factors_.U;
  }

  /// Store the current left basis as the drift reference.
  void mark_reference() { reference_ = factors_.U; }

  /// Lowering the rank truncates at once; raising it takes effect at the next
  /// append or refresh.
  void set_rank(Index k) {
    if (k < 1) throw std::invalid_argument("set_rank: rank must be >= 1");
    work_rank_ = k;
    if (k < factors_.rank()) factors_ = leading(factors_, k);
  }

  const SvdFactors& factors() const { return factors_; }
  const Matrix& tracked() const { return tracked_; }
  double tracked_sq_norm() const { return sq_norm_; }
  const std::optional<Matrix>& reference() const { return reference_; }
  Index work_rank() const { return work_rank_; }
  Index rank() const { return factors_.rank(); }
  Index rows() const { return tracked_.rows(); }
  Index cols() const { return tracked_.cols(); }
  Index step() const { return step_; }
  const EngineConfig& config() const { return config_; }

 private:
  void finish_update() {
    ++step_;
    if (config_.reortho_guard) reorthonormalize_if_needed();
  }

  // Thin QR of both bases with the triangular factors folded into a small
  // core whose SVD restores an exact triple.
  void reorthonormalize_if_needed() {
    const double threshold = config_.reortho_threshold;
    if (orthonormality_defect(factors_.U) <= threshold &&
        orthonormality_defect(factors_.Vt.transpose()) <= threshold) {
      return;
    }
    const Index r = factors_.rank();
    Eigen::HouseholderQR<Matrix> qr_u(factors_.U);
    Eigen::HouseholderQR<Matrix> qr_v(factors_.Vt.transpose());
    const Matrix q_u = qr_u.householderQ() * Matrix::Identity(factors_.U.rows(), r);
    const Matrix q_v = qr_v.householderQ() * Matrix::Identity(factors_.Vt.cols(), r);
    const Matrix r_u = qr_u.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
    const Matrix r_v = qr_v.matrixQR().topRows(r).template triangularView<Eigen::Upper>();
    const SvdFactors kf = core_svd_(Matrix(r_u * factors_.S.asDiagonal() * r_v.transpose()));
    factors_ = SvdFactors{q_u * kf.U, kf.S, kf.Vt * q_v.transpose()};
  }

  EngineConfig config_;
  CoreSvd core_svd_;
  SvdFactors factors_;
  Matrix tracked_;
  double sq_norm_ = 0.0;
  std::optional<Matrix> reference_;
  Index work_rank_ = 1;
  Index step_ = 0;
};

using IncrementalSvd = BasicIncrementalSvd<>;

}  // namespace isvd
