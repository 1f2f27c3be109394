// Per-step diagnostics: reconstruction error against the full-SVD oracle,
// error ratio, explained variance ratio, principal angles and timings.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "isvd/engine.hpp"
#include "isvd/linalg.hpp"

namespace isvd {

/// One row of the experiment log.
struct MetricsRecord {
  Index step = 0;
  const char* event = "init";
  double frob_error = 0.0;
  std::optional<double> frob_opt;
  std::optional<double> frob_gap;
  std::optional<double> frob_ratio;
  std::optional<double> evr;
  std::optional<double> angle_ref;
  std::optional<double> angle_opt;
  std::optional<double> novelty;
  std::optional<double> ortho_u;
  std::optional<double> ortho_v;
  std::optional<double> spectral_gap;  // (sigma_k - sigma_{k+1}) / sigma_1 of the oracle
  double sq_norm = 0.0;                // tracked squared Frobenius norm
  double update_time = 0.0;
  std::optional<double> opt_time;
  bool refreshed = false;
  Index rank = 0;
  Index rows = 0;
  Index cols = 0;
};

/// Optimal rank-k baseline from a full SVD of the current matrix.
struct OracleBaseline {
  double frob_opt = 0.0;
  Matrix opt_basis;       // leading k left singular vectors
  Matrix opt_right;       // leading k right singular vectors (as columns)
  Vector singular_values; // full spectrum
  double opt_time = 0.0;
};

/// Wall-clock seconds spent in f().
template <class F>
double timed(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline OracleBaseline oracle_baseline(const Matrix& a, Index k) {
  if (k < 1) throw std::invalid_argument("oracle_baseline: rank must be >= 1");
  OracleBaseline out;
  SvdFactors full;
  out.opt_time = timed([&] { full = full_svd(a); });
  const Index keep = std::min(k, full.rank());
  const Index tail = full.rank() - keep;
  out.frob_opt = std::sqrt(full.S.tail(tail).squaredNorm());
  out.opt_basis = full.U.leftCols(keep);
  out.opt_right = full.Vt.topRows(keep).transpose();
  out.singular_values = std::move(full.S);
  return out;
}

template <class Engine>
double frob_error(const Engine& state) {
  return (state.tracked() - reconstruct(state.factors())).norm();
}

/// E_inc / E_opt, or empty when the optimal error is numerically zero.
inline std::optional<double> error_ratio(double e_inc, double e_opt) {
  if (e_opt > 1e-12 * std::max(1.0, e_inc)) return e_inc / e_opt;
  return std::nullopt;
}

/// Retained energy over the tracked squared norm, clamped to [0, 1]. Empty
/// when the tracked norm is zero.
template <class Engine>
std::optional<double> evr(const Engine& state) {
  const double total = state.tracked_sq_norm();
  if (!(total > 0.0)) return std::nullopt;
  return std::clamp(state.factors().S.squaredNorm() / total, 0.0, 1.0);
}

/// Largest angle between the stored reference and the current left basis.
/// Empty without a reference or when the rank changed since it was stored.
template <class Engine>
std::optional<double> angle_to_ref(const Engine& state) {
  const auto& ref = state.reference();
  if (!ref) return std::nullopt;
  const Matrix& u = state.factors().U;
  if (ref->cols() != u.cols() || ref->rows() > u.rows()) return std::nullopt;
  // Rows appended after the reference was stored are zero in the reference.
  Matrix padded = Matrix::Zero(u.rows(), ref->cols());
  padded.topRows(ref->rows()) = *ref;
  return principal_angle_max(padded, u);
}

template <class Engine>
double angle_to_opt(const Engine& state, const Matrix& opt_basis) {
  const Matrix& u = state.factors().U;
  if (opt_basis.cols() != u.cols() || opt_basis.rows() != u.rows()) {
    throw std::invalid_argument("angle_to_opt: oracle basis does not match current factors");
  }
  return principal_angle_max(opt_basis, u);
}

/// Assemble the record for the engine's current state. The oracle, when
/// given, must have been computed on the current tracked matrix.
template <class Engine>
MetricsRecord collect_metrics(const Engine& state, double update_time, bool refreshed,
                              const OracleBaseline* oracle) {
  MetricsRecord rec;
  rec.step = state.step();
  rec.frob_error = frob_error(state);
  rec.evr = evr(state);
  rec.angle_ref = angle_to_ref(state);
  rec.update_time = update_time;
  rec.refreshed = refreshed;
  rec.rank = state.rank();
  rec.rows = state.rows();
  rec.cols = state.cols();
  rec.sq_norm = state.tracked_sq_norm();
  if (oracle != nullptr) {
    const Vector& sv = oracle->singular_values;
    const Index k = state.rank();
    if (k >= 1 && sv.size() >= k && sv(0) > 0.0) {
      const double next = sv.size() > k ? sv(k) : 0.0;
      rec.spectral_gap = (sv(k - 1) - next) / sv(0);
    }
    rec.frob_opt = oracle->frob_opt;
    rec.frob_gap = rec.frob_error - oracle->frob_opt;
    rec.frob_ratio = error_ratio(rec.frob_error, oracle->frob_opt);
    if (oracle->opt_basis.cols() >= state.rank()) {
      rec.angle_opt = angle_to_opt(state, oracle->opt_basis.leftCols(state.rank()));
    }
    rec.opt_time = oracle->opt_time;
    rec.ortho_u = orthonormality_defect(state.factors().U);
    rec.ortho_v = orthonormality_defect(state.factors().Vt.transpose());
  }
  return rec;
}

}  // namespace isvd
