// Online factor / covariance pipeline: price ingestion, causally centered log
// returns, daily row appends through the engine and comparison of the
// incremental low-rank covariance and portfolio risk against a full-SVD
// oracle.

#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <future>
#include <istream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "isvd/engine.hpp"
#include "isvd/linalg.hpp"
#include "isvd/metrics.hpp"
#include "isvd/policies.hpp"
#include "isvd/random.hpp"

namespace isvd::finance {

/// Malformed price input, with the 1-based line (and column when known).
class PriceFileError : public std::runtime_error {
 public:
  PriceFileError(std::size_t line, std::optional<std::size_t> column, const std::string& what)
      : std::runtime_error(format(line, column, what)), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::optional<std::size_t> column() const { return column_; }

 private:
  static std::string format(std::size_t line, std::optional<std::size_t> column,
                            const std::string& what) {
    std::string out = "line " + std::to_string(line);
    if (column) out += ", column " + std::to_string(*column);
    return out + ": " + what;
  }
  std::size_t line_;
  std::optional<std::size_t> column_;
};

struct PriceTable {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  Matrix prices;  // dates x tickers
  std::size_t dropped_dates = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  int y = 0, m = 0, d = 0;
  std::from_chars(s.data(), s.data() + 4, y);
  std::from_chars(s.data() + 5, s.data() + 7, m);
  std::from_chars(s.data() + 8, s.data() + 10, d);
  using namespace std::chrono;
  return year_month_day{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}}
      .ok();
}

}  // namespace detail

/// Parse a wide price table: header `date,<ticker>...`, one ISO date per row,
/// strictly increasing. Rows with an empty cell are dropped and counted.
inline PriceTable parse_prices(std::istream& in) {
  PriceTable table;
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) throw PriceFileError(line_no, std::nullopt, "missing header");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_commas(line);
  if (header.size() < 2 || header[0] != "date") {
    throw PriceFileError(line_no, std::nullopt, "header must be `date,<ticker>,...`");
  }
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw PriceFileError(line_no, c + 1, "empty ticker name");
    table.tickers.emplace_back(header[c]);
  }
  const std::size_t n = table.tickers.size();

  std::vector<double> values;
  std::string last_date;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != n + 1) {
      throw PriceFileError(line_no, std::nullopt,
                           "expected " + std::to_string(n + 1) + " fields, found " +
                               std::to_string(cells.size()));
    }
    if (!detail::is_iso_date(cells[0])) {
      throw PriceFileError(line_no, 1, "not an ISO-8601 date: '" + std::string(cells[0]) + "'");
    }
    // Ordering is checked against every listed date, including dropped ones.
    if (!last_date.empty() && std::string_view(last_date) >= cells[0]) {
      throw PriceFileError(line_no, 1,
                           std::string(std::string_view(last_date) == cells[0]
                                           ? "duplicate date "
                                           : "dates out of order at ") +
                               std::string(cells[0]));
    }
    last_date = cells[0];

    bool missing = false;
    std::vector<double> row(n);
    for (std::size_t c = 0; c < n; ++c) {
      const std::string_view cell = cells[c + 1];
      if (cell.empty()) {
        missing = true;
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw PriceFileError(line_no, c + 2, "cannot parse price '" + std::string(cell) + "'");
      }
      if (v <= 0.0) {
        throw PriceFileError(line_no, c + 2, "price must be positive, got " + std::string(cell));
      }
      row[c] = v;
    }
    if (missing) {
      ++table.dropped_dates;
      continue;
    }
    table.dates.emplace_back(cells[0]);
    values.insert(values.end(), row.begin(), row.end());
  }

  const auto t = static_cast<Index>(table.dates.size());
  table.prices = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>(values.data(), t,
                                                                  static_cast<Index>(n));
  return table;
}

inline PriceTable load_prices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open price file: " + path);
  return parse_prices(in);
}

/// r(t, i) = log(P(t, i) / P(t-1, i)).
inline Matrix log_returns(const Matrix& prices) {
  if (prices.rows() < 2) throw std::invalid_argument("log_returns: need at least 2 dates");
  Matrix out(prices.rows() - 1, prices.cols());
  for (Index t = 1; t < prices.rows(); ++t)
    for (Index i = 0; i < prices.cols(); ++i)
      out(t - 1, i) = std::log(prices(t, i) / prices(t - 1, i));
  return out;
}

/// Expanding-mean centering: mu_t includes day t, so the first row is zero.
inline Matrix center_expanding(const Matrix& returns) {
  Matrix out(returns.rows(), returns.cols());
  Vector mu = Vector::Zero(returns.cols());
  for (Index t = 0; t < returns.rows(); ++t) {
    mu += (returns.row(t).transpose() - mu) / static_cast<double>(t + 1);
    out.row(t) = returns.row(t) - mu.transpose();
  }
  return out;
}

/// Exponentially weighted centering with mu_0 = 0.
inline Matrix center_ew(const Matrix& returns, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("center_ew: alpha must lie in (0, 1)");
  Matrix out(returns.rows(), returns.cols());
  Vector mu = Vector::Zero(returns.cols());
  for (Index t = 0; t < returns.rows(); ++t) {
    mu = (1.0 - alpha) * mu + alpha * returns.row(t).transpose();
    out.row(t) = returns.row(t) - mu.transpose();
  }
  return out;
}

struct Centering {
  enum class Mode { expanding, exponential } mode = Mode::expanding;
  double alpha = 0.0;
};

struct ReturnsPanel {
  std::vector<std::string> dates;  // date of each return row
  std::vector<std::string> tickers;
  Matrix returns;
  Matrix centered;
  Centering centering;
};

inline ReturnsPanel make_returns_panel(const PriceTable& prices, Centering centering = {}) {
  ReturnsPanel panel;
  panel.returns = log_returns(prices.prices);
  panel.dates.assign(prices.dates.begin() + 1, prices.dates.end());
  panel.tickers = prices.tickers;
  panel.centering = centering;
  panel.centered = centering.mode == Centering::Mode::expanding
                       ? center_expanding(panel.returns)
                       : center_ew(panel.returns, centering.alpha);
  return panel;
}

/// (1 / (t - 1)) * V diag(S^2) V^T.
inline Matrix low_rank_covariance(const SvdFactors& f, Index t) {
  if (t < 2) throw std::invalid_argument("low_rank_covariance: need t >= 2");
  const Matrix scaled = f.S.asDiagonal() * f.Vt;
  return scaled.transpose() * scaled / static_cast<double>(t - 1);
}

/// Relative Frobenius error; empty when the oracle covariance is zero.
inline std::optional<double> covariance_rel_error(const Matrix& inc, const Matrix& orc) {
  if (inc.rows() != orc.rows() || inc.cols() != orc.cols()) {
    throw std::invalid_argument("covariance_rel_error: shape mismatch");
  }
  const double denom = orc.norm();
  if (!(denom > 0.0)) return std::nullopt;
  return (inc - orc).norm() / denom;
}

struct PortfolioSpec {
  Vector weights;
  std::string label;
};

inline PortfolioSpec equal_weight(Index n) {
  if (n < 1) throw std::invalid_argument("equal_weight: need at least one asset");
  return PortfolioSpec{Vector::Constant(n, 1.0 / static_cast<double>(n)), "equal"};
}

/// Long-only weights drawn from a symmetric Dirichlet distribution.
inline PortfolioSpec dirichlet_weights(Index n, double concentration, std::uint64_t seed,
                                       std::string label = "dirichlet") {
  if (n < 1) throw std::invalid_argument("dirichlet_weights: need at least one asset");
  if (!(concentration > 0.0)) throw std::invalid_argument("dirichlet_weights: concentration must be > 0");
  auto rng = random::substream(seed, random::Stream::portfolios);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w(i) = gamma(rng);
  w /= w.sum();
  return PortfolioSpec{std::move(w), std::move(label)};
}

/// sqrt(w^T C w), clamped at zero for round-off.
inline double portfolio_vol(const Matrix& cov, const PortfolioSpec& w) {
  if (cov.rows() != cov.cols() || cov.rows() != w.weights.size()) {
    throw std::invalid_argument("portfolio_vol: dimension mismatch");
  }
  const double var = w.weights.dot(cov * w.weights);
  if (var < -1e-10) throw std::invalid_argument("portfolio_vol: covariance is not PSD along w");
  return std::sqrt(std::max(0.0, var));
}

inline std::optional<double> risk_rel_error(double vol_inc, double vol_orc) {
  if (!(vol_orc > 0.0)) return std::nullopt;
  return std::abs(vol_inc - vol_orc) / vol_orc;
}

struct RiskSnapshot {
  Index step = 0;
  std::string date;
  std::optional<double> cov_rel_error;
  std::vector<std::optional<double>> risk_rel_error;  // one per portfolio
  double angle_factor = 0.0;
  bool refreshed = false;
  Index rank = 0;
  double update_time = 0.0;
  double opt_time = 0.0;
};

struct FinanceConfig {
  Index t0 = 250;
  Index k = 5;
  PolicyConfig policy;
  Index log_every = 5;
  EngineConfig engine;
};

/// Streams the centered panel day by day after an initial window of t0 rows.
///
/// Snapshots are taken every log_every streamed days, on refresh days and on
/// the last day. The factor angle compares right singular subspaces (asset
/// loadings); the angle-based trigger uses that same angle.
template <class CoreSvd = ExactCoreSvd>
std::vector<RiskSnapshot> run_finance_stream(const ReturnsPanel& panel, const FinanceConfig& cfg,
                                             const std::vector<PortfolioSpec>& portfolios,
                                             CoreSvd core = {}) {
  cfg.policy.validate();
  if (cfg.policy.adaptive_rank) {
    throw std::invalid_argument("run_finance_stream: adaptive rank is not supported");
  }
  const Matrix& centered = panel.centered;
  const Index total = centered.rows();
  const Index n = centered.cols();
  if (cfg.t0 < 2 || cfg.t0 >= total) {
    throw std::invalid_argument("run_finance_stream: need 2 <= t0 < number of return days (" +
                                std::to_string(total) + ")");
  }
  if (cfg.k < 1 || cfg.k > n) throw std::invalid_argument("run_finance_stream: need 1 <= k <= assets");
  if (cfg.log_every < 1) throw std::invalid_argument("run_finance_stream: log_every must be >= 1");
  for (const auto& p : portfolios) {
    if (p.weights.size() != n) {
      throw std::invalid_argument("run_finance_stream: portfolio '" + p.label +
                                  "' has wrong dimension");
    }
  }

  BasicIncrementalSvd<CoreSvd> engine(centered.topRows(cfg.t0), cfg.k, cfg.engine,
                                      std::move(core));
  std::vector<RiskSnapshot> snapshots;
  const Index streamed = total - cfg.t0;
  Index t_last = 0;

  for (Index s = 1; s <= streamed; ++s) {
    const Index row = cfg.t0 + s - 1;
    const std::string& date =
        row < static_cast<Index>(panel.dates.size()) ? panel.dates[row] : std::string();
    double update_time = 0.0;
    try {
      update_time = timed([&] { engine.row_append(centered.row(row).transpose()); });
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("date " + date + ": " + e.what());
    }

    bool refresh_now = cfg.policy.kind == RefreshKind::periodic &&
                       periodic_should_refresh(s, cfg.policy.period);
    if (!(refresh_now || s % cfg.log_every == 0 || s == streamed)) continue;

    SvdFactors oracle;
    const double opt_time = timed([&] { oracle = full_svd(engine.tracked()); });
    auto factor_angle = [&] {
      const SvdFactors& f = engine.factors();
      return principal_angle_max(oracle.Vt.topRows(f.rank()).transpose(), f.Vt.transpose());
    };
    const Index t_rows = engine.rows();
    const Matrix cov_orc = low_rank_covariance(leading(oracle, engine.work_rank()), t_rows);

    if (cfg.policy.kind == RefreshKind::error_based) {
      const double e_inc = frob_error(engine);
      const double e_opt = std::sqrt(
          oracle.S.tail(oracle.rank() - std::min(engine.work_rank(), oracle.rank())).squaredNorm());
      refresh_now = error_should_refresh(error_ratio(e_inc, e_opt), cfg.policy.gamma, s, t_last,
                                         cfg.policy.t_min);
    } else if (cfg.policy.kind == RefreshKind::angle_based) {
      refresh_now = angle_should_refresh(factor_angle(), cfg.policy.theta_max);
    }
    if (refresh_now) {
      engine.refresh(true);
      t_last = s;
    }

    RiskSnapshot snap;
    snap.step = s;
    snap.date = date;
    const Matrix cov_inc = low_rank_covariance(engine.factors(), t_rows);
    snap.cov_rel_error = covariance_rel_error(cov_inc, cov_orc);
    for (const auto& p : portfolios) {
      snap.risk_rel_error.push_back(
          risk_rel_error(portfolio_vol(cov_inc, p), portfolio_vol(cov_orc, p)));
    }
    snap.angle_factor = factor_angle();
    snap.refreshed = refresh_now;
    snap.rank = engine.rank();
    snap.update_time = update_time;
    snap.opt_time = opt_time;
    snapshots.push_back(std::move(snap));
  }
  return snapshots;
}

/// Known-factor synthetic market used instead of downloaded data.
struct SyntheticPanelSpec {
  Index assets = 60;
  Index days = 1640;  // price dates; one fewer return row
  Index factors = 3;
  std::uint64_t seed = 0;
  double factor_vol = 0.01;
  double idio_vol = 0.005;
  /// Asset i carries idiosyncratic vol idio_vol * (1 + idio_spread * exp(-i / idio_decay)),
  /// which separates the trailing spectrum beyond the factor block.
  double idio_spread = 2.0;
  double idio_decay = 3.0;
  double drift = 2e-4;
  /// Per-day standard deviation of the random walk followed by each loading.
  double loading_drift = 0.01;
  /// Volatility multiplier applied from this return row on (regime shift).
  std::optional<Index> shift_day;
  double shift_multiplier = 3.0;
};

/// Business-day ISO dates starting 2018-01-02.
inline std::vector<std::string> business_dates(Index count) {
  using namespace std::chrono;
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  sys_days d = year{2018} / January / 2;
  while (static_cast<Index>(out.size()) < count) {
    const weekday wd{d};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{d};
      char buf[32];
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      out.emplace_back(buf);
    }
    d += days{1};
  }
  return out;
}

/// Prices from r_t = drift + B f_t + e_t, with standard-normal loadings B
/// (market column shifted to mean 1) that drift as slow random walks, Gaussian
/// factor returns, heteroscedastic
/// Gaussian idiosyncratic returns, and P_0 = 100.
inline PriceTable synthetic_prices(const SyntheticPanelSpec& spec) {
  if (spec.assets < 1 || spec.days < 2 || spec.factors < 0) {
    throw std::invalid_argument("synthetic_prices: invalid panel dimensions");
  }
  auto load_rng = random::substream(spec.seed, random::Stream::panel_loadings);
  auto ret_rng = random::substream(spec.seed, random::Stream::panel_returns);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix loadings(spec.assets, spec.factors);
  for (Index i = 0; i < spec.assets; ++i)
    for (Index f = 0; f < spec.factors; ++f)
      loadings(i, f) = normal(load_rng) + (f == 0 ? 1.0 : 0.0);

  PriceTable table;
  table.dates = business_dates(spec.days);
  for (Index i = 0; i < spec.assets; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "A%03ld", static_cast<long>(i));
    table.tickers.emplace_back(buf);
  }
  table.prices.resize(spec.days, spec.assets);
  table.prices.row(0).setConstant(100.0);
  Vector factor(spec.factors);
  for (Index t = 1; t < spec.days; ++t) {
    if (spec.loading_drift > 0.0 && t > 1) {
      for (Index i = 0; i < spec.assets; ++i)
        for (Index f = 0; f < spec.factors; ++f)
          loadings(i, f) += spec.loading_drift * normal(load_rng);
    }
    const double scale = spec.shift_day && t - 1 >= *spec.shift_day ? spec.shift_multiplier : 1.0;
    for (Index f = 0; f < spec.factors; ++f) factor(f) = spec.factor_vol * scale * normal(ret_rng);
    for (Index i = 0; i < spec.assets; ++i) {
      const double idio =
          spec.idio_vol * (1.0 + spec.idio_spread * std::exp(-static_cast<double>(i) / spec.idio_decay));
      const double r = spec.drift + loadings.row(i).dot(factor) + idio * scale * normal(ret_rng);
      table.prices(t, i) = table.prices(t - 1, i) * std::exp(r);
    }
  }
  return table;
}

struct GridCell {
  Index k = 0;
  std::optional<Index> refresh_every;
  std::vector<RiskSnapshot> snapshots;
};

/// Runs every (k, refresh cadence) combination on its own engine.
inline std::vector<GridCell> run_finance_grid(const ReturnsPanel& panel, const FinanceConfig& base,
                                              const std::vector<Index>& ks,
                                              const std::vector<std::optional<Index>>& cadences,
                                              const std::vector<PortfolioSpec>& portfolios) {
  std::vector<std::future<GridCell>> jobs;
  for (const Index k : ks) {
    for (const auto& cadence : cadences) {
      FinanceConfig cfg = base;
      cfg.k = k;
      cfg.policy.kind = cadence ? RefreshKind::periodic : RefreshKind::none;
      if (cadence) cfg.policy.period = *cadence;
      jobs.push_back(std::async(std::launch::async, [&panel, &portfolios, cfg, k, cadence] {
        return GridCell{k, cadence, run_finance_stream(panel, cfg, portfolios)};
      }));
    }
  }
  std::vector<GridCell> cells;
  cells.reserve(jobs.size());
  for (auto& job : jobs) cells.push_back(job.get());
  return cells;
}

}  // namespace isvd::finance
