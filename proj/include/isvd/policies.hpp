// Refresh triggers and rank-selection rules. All functions are pure.

#pragma once

#include <algorithm>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "isvd/linalg.hpp"

namespace isvd {

enum class RefreshKind { none, periodic, error_based, angle_based };

inline std::string_view to_string(RefreshKind kind) {
  switch (kind) {
    case RefreshKind::none: return "none";
    case RefreshKind::periodic: return "periodic";
    case RefreshKind::error_based: return "error";
    case RefreshKind::angle_based: return "angle";
  }
  return "none";
}

inline RefreshKind parse_refresh_kind(std::string_view s) {
  if (s == "none") return RefreshKind::none;
  if (s == "periodic") return RefreshKind::periodic;
  if (s == "error") return RefreshKind::error_based;
  if (s == "angle") return RefreshKind::angle_based;
  throw std::invalid_argument("unknown refresh policy: " + std::string(s));
}

struct AdaptiveRank {
  double tau_evr = 0.9;
  Index k_min = 1;
  Index k_max = 1;
  double eta = 0.5;
};

struct PolicyConfig {
  RefreshKind kind = RefreshKind::none;
  Index period = 1000;           // T_refresh
  double gamma = 1.1;            // error-ratio threshold
  Index t_min = 0;               // minimum spacing for error-based refresh
  double theta_max = 0.2;        // radians
  std::optional<AdaptiveRank> adaptive_rank;

  void validate() const {
    if (period < 1) throw std::invalid_argument("policy: refresh period must be >= 1");
    if (!(gamma > 1.0)) throw std::invalid_argument("policy: gamma must be > 1");
    if (t_min < 0) throw std::invalid_argument("policy: t_min must be >= 0");
    if (!(theta_max > 0.0 && theta_max <= std::numbers::pi / 2)) {
      throw std::invalid_argument("policy: theta_max must lie in (0, pi/2]");
    }
    if (adaptive_rank) {
      const auto& a = *adaptive_rank;
      if (!(a.tau_evr > 0.0 && a.tau_evr <= 1.0)) {
        throw std::invalid_argument("policy: tau_evr must lie in (0, 1]");
      }
      if (a.k_min < 1 || a.k_min > a.k_max) {
        throw std::invalid_argument("policy: need 1 <= k_min <= k_max");
      }
      if (!(a.eta > 0.0 && a.eta < 1.0)) throw std::invalid_argument("policy: eta must lie in (0, 1)");
    }
  }
};

/// Step 0 is the freshly initialized state and never triggers.
inline bool periodic_should_refresh(Index t, Index period) {
  return period >= 1 && t > 0 && t % period == 0;
}

inline bool error_should_refresh(std::optional<double> ratio, double gamma, Index t,
                                 Index t_last, Index t_min) {
  return ratio.has_value() && *ratio > gamma && t - t_last >= t_min;
}

inline bool angle_should_refresh(std::optional<double> angle_opt, double theta_max) {
  return angle_opt.has_value() && *angle_opt > theta_max;
}

/// Smallest k in [k_min, k_max] whose leading energy fraction reaches tau;
/// k_max when none does.
inline Index evr_select_rank(const Vector& singular_values, double tau, Index k_min,
                             Index k_max) {
  if (singular_values.size() == 0) {
    throw std::invalid_argument("evr_select_rank: empty spectrum");
  }
  if (k_min > k_max) throw std::invalid_argument("evr_select_rank: k_min > k_max");
  const double total = singular_values.squaredNorm();
  if (!(total > 0.0)) return k_min;
  double kept = 0.0;
  for (Index k = 1; k <= k_max; ++k) {
    if (k <= singular_values.size()) kept += singular_values(k - 1) * singular_values(k - 1);
    if (k >= k_min && kept / total >= tau) return k;
  }
  return k_max;
}

inline Index novelty_rank_bump(double z_norm, double x_norm, double eta, Index k, Index k_max) {
  if (!(x_norm > 0.0)) return k;
  if (z_norm > eta * x_norm) return std::max(k, std::min(k + 1, k_max));
  return k;
}

}  // namespace isvd
