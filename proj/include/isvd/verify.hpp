// Acceptance suite behind `isvd verify` and the acceptance test binary.
//
// Every check reruns its experiment from pinned seeds and compares against
// brute-force references from isvd/testing/oracles.hpp. The suite is a
// template over the core solver so a deliberately broken solver can be
// plugged in to confirm the checks actually bite.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "isvd/engine.hpp"
#include "isvd/finance.hpp"
#include "isvd/linalg.hpp"
#include "isvd/metrics.hpp"
#include "isvd/policies.hpp"
#include "isvd/stream_sim.hpp"
#include "isvd/testing/oracles.hpp"

namespace isvd::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  bool fast = false;        // skip the long-running experiment replications
  std::vector<int> only;    // empty: all checks
};

/// Fault fixture: flips the first left singular vector of every core SVD
/// without touching the matching right vector.
struct SignFlippedCoreSvd {
  SvdFactors operator()(const Matrix& core) const {
    SvdFactors f = full_svd(core);
    if (f.rank() > 0) f.U.col(0) *= -1.0;
    return f;
  }
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // wall-clock limit; <= 0 means none
  bool slow;
};

inline const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list = {
      {1, "append exactness (no truncation)", 10, false},
      {2, "rank-1 projection identity", 10, false},
      {3, "orthonormality on mixed stream", 60, true},
      {4, "Eckart-Young ordering", 0, false},
      {5, "rank-1 streaming replication band", 60, false},
      {6, "sawtooth reset at refresh", 0, false},
      {7, "rank/runtime scaling", 120, false},
      {8, "norm tracking", 0, false},
      {9, "finance synthetic pipeline ordering", 180, true},
      {10, "finance causality", 0, true},
      {11, "policy unit laws", 5, false},
      {12, "oracle cross-check of batch SVD", 0, false},
  };
  return list;
}

namespace detail {

inline std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct StreamStats {
  std::string name;
  std::optional<double> min_ratio;
  Index ratio_count = 0;
  double norm_rel_error = 0.0;
};

inline StreamStats summarize(std::string name, const SimulationResult& r) {
  StreamStats s{std::move(name), std::nullopt, 0, 0.0};
  for (const auto& rec : r.records) {
    if (!rec.frob_ratio) continue;
    ++s.ratio_count;
    s.min_ratio = s.min_ratio ? std::min(*s.min_ratio, *rec.frob_ratio) : *rec.frob_ratio;
  }
  const double direct = r.final_direct_sq_norm;
  s.norm_rel_error = std::abs(r.final_sq_norm - direct) / std::max(direct, 1e-300);
  return s;
}

inline StreamSpec rank_one_spec(Index events, std::optional<Index> period, std::uint64_t seed) {
  StreamSpec spec;
  spec.m = 50;
  spec.n = 40;
  spec.true_rank = 5;
  spec.noise_scale = 0.1;
  spec.scenario = Scenario::rank1;
  spec.events = events;
  spec.delta_sd = 0.05;
  spec.seed = seed;
  spec.sim.k = 5;
  spec.sim.log_every = 50;
  if (period) {
    spec.sim.policy.kind = RefreshKind::periodic;
    spec.sim.policy.period = *period;
  }
  return spec;
}

template <class Core>
class Suite {
 public:
  std::vector<StreamStats> streams;
  std::optional<SimulationResult> periodic_run;  // shared by checks 5 and 6

  CheckResult append_exactness() {
    CheckResult c;
    struct Case {
      const char* name;
      Index m, n, r;
      double noise;
      MixWeights mix;
      Index k;
    };
    // Exactly low-rank growth in both directions, then full-rank growth of
    // a matrix whose short side never exceeds k.
    const Case cases[] = {
        {"appends rank-3 mixed", 20, 15, 3, 0.0, {1, 1, 0}, 5},
        {"appends noisy rows", 30, 8, 3, 0.1, {1, 0, 0}, 8},
        {"appends noisy cols", 8, 30, 3, 0.1, {0, 1, 0}, 8},
    };
    double worst = 0.0;
    bool ok = true;
    std::uint64_t seed = 101;
    for (const auto& cs : cases) {
      Matrix a0 = gen_low_rank(cs.m, cs.n, cs.r, cs.noise, seed);
      const auto events = gen_mixed_stream(
          500, cs.mix, MixedStreamParams{cs.m, cs.n, cs.r, cs.noise, 0.05}, seed);
      SimulationConfig cfg;
      cfg.k = cs.k;
      cfg.log_every = 50;
      const auto res = simulate(std::move(a0), events, cfg, Core{});
      for (const auto& rec : res.records) {
        const double scale = std::max(1.0, std::sqrt(rec.sq_norm));
        const double rel = rec.frob_error / scale;
        worst = std::max(worst, rel);
        if (!(rel <= 1e-8)) ok = false;
      }
      streams.push_back(summarize(cs.name, res));
      ++seed;
    }
    c.passed = ok;
    c.detail = fmt("max frob_error/max(1,|A|) = %.3g over 3 streams x 500 appends", worst);
    return c;
  }

  CheckResult projection_identity() {
    CheckResult c;
    double worst = 0.0;
    int checked = 0;
    std::mt19937_64 rng(202);
    std::normal_distribution<double> delta(0.0, 0.5);
    for (int s = 0; s < 10; ++s) {
      const Index m = 8 + s % 5, n = 6 + s % 4;
      BasicIncrementalSvd<Core> engine(gen_low_rank(m, n, 3, 0.1, 300 + s), 3, {}, Core{});
      std::uniform_int_distribution<Index> pick_i(0, m - 1), pick_j(0, n - 1);
      for (int u = 0; u < 100; ++u) {
        const SvdFactors& f = engine.factors();
        const Matrix a_hat = reconstruct(f);
        const Index i = pick_i(rng), j = pick_j(rng);
        const double d = delta(rng);
        const Matrix expected =
            testing::projected_rank_one(a_hat, f.U, f.Vt.transpose(), i, j, d);
        engine.rank_one_update(i, j, d);
        worst = std::max(worst, (reconstruct(engine.factors()) - expected).cwiseAbs().maxCoeff());
        ++checked;
      }
    }
    c.passed = worst <= 1e-10;
    c.detail = fmt("max entrywise deviation %.3g", worst) + " over " + std::to_string(checked) +
               " updates";
    return c;
  }

  CheckResult orthonormality() {
    CheckResult c;
    StreamSpec spec;
    spec.scenario = Scenario::mixed;
    spec.events = 10000;
    spec.mix = {1, 1, 48};
    spec.seed = 303;
    spec.sim.policy.kind = RefreshKind::periodic;
    spec.sim.policy.period = 200;
    const auto res = simulate(spec, Core{});
    double worst = 0.0;
    Index logged = 0;
    for (const auto& rec : res.records) {
      if (!rec.ortho_u) continue;
      ++logged;
      worst = std::max({worst, *rec.ortho_u, rec.ortho_v.value_or(0.0)});
    }
    streams.push_back(summarize("mixed 10000", res));
    const auto& last = res.records.back();
    c.passed = worst <= 1e-8 && logged > 0;
    c.detail = fmt("max defect %.3g", worst) + " at " + std::to_string(logged) +
               " logged steps, final shape " + std::to_string(last.rows) + "x" +
               std::to_string(last.cols);
    return c;
  }

  CheckResult replication_band() {
    CheckResult c;
    ensure_periodic_run();
    const auto none = simulate(rank_one_spec(10000, std::nullopt, 7), Core{});
    streams.push_back(summarize("rank1 no-refresh", none));
    double max_periodic = 0.0;
    for (const auto& rec : periodic_run->records)
      if (rec.frob_ratio) max_periodic = std::max(max_periodic, *rec.frob_ratio);
    const auto term_p = periodic_run->records.back().frob_ratio;
    const auto term_n = none.records.back().frob_ratio;
    const bool a = max_periodic <= 1.05;
    const bool b = term_p && term_n && *term_n > *term_p && *term_n >= 1.02 && *term_n <= 1.5;
    c.passed = a && b;
    c.detail = fmt("periodic max ratio %.4f", max_periodic) +
               fmt(", terminal periodic %.4f", term_p.value_or(NAN)) +
               fmt(", terminal no-refresh %.4f", term_n.value_or(NAN));
    return c;
  }

  CheckResult sawtooth() {
    CheckResult c;
    ensure_periodic_run();
    int refreshes = 0, exempt = 0;
    double worst_angle = 0.0, worst_ratio = 0.0;
    bool ok = true;
    for (const auto& rec : periodic_run->records) {
      if (!rec.refreshed) continue;
      ++refreshes;
      if (!(rec.spectral_gap && *rec.spectral_gap > 1e-6)) {
        ++exempt;
        continue;
      }
      const double angle = rec.angle_opt.value_or(std::numeric_limits<double>::infinity());
      worst_angle = std::max(worst_angle, angle);
      if (rec.frob_ratio) worst_ratio = std::max(worst_ratio, *rec.frob_ratio);
      if (!(angle <= 1e-6) || (rec.frob_ratio && !(*rec.frob_ratio <= 1.0 + 1e-9))) ok = false;
    }
    c.passed = ok && refreshes > 0;
    c.detail = std::to_string(refreshes) + " refreshes (" + std::to_string(exempt) +
               " without gap)" + fmt(", max angle %.3g", worst_angle) +
               fmt(", max ratio %.12f", worst_ratio);
    return c;
  }

  CheckResult rank_scaling() {
    CheckResult c;
    const Index ks[] = {5, 8, 12};
    double medians[3];
    for (int q = 0; q < 3; ++q) {
      StreamSpec spec = rank_one_spec(10000, Index{1000}, 707);
      spec.sim.k = ks[q];
      spec.sim.log_every = 500;
      const auto res = simulate(spec, Core{});
      std::vector<double> times;
      for (std::size_t r = 1; r < res.records.size(); ++r)
        times.push_back(res.records[r].update_time);
      std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
      medians[q] = times[times.size() / 2];
      streams.push_back(summarize("rank sweep k=" + std::to_string(ks[q]), res));
    }
    c.passed = medians[0] < medians[1] && medians[1] < medians[2];
    c.detail = fmt("median update_time k=5 %.3g s", medians[0]) + fmt(", k=8 %.3g s", medians[1]) +
               fmt(", k=12 %.3g s", medians[2]);
    return c;
  }

  CheckResult eckart_young() {
    CheckResult c;
    ensure_streams();
    bool ok = true;
    double worst = std::numeric_limits<double>::infinity();
    Index count = 0;
    for (const auto& s : streams) {
      count += s.ratio_count;
      if (s.min_ratio) {
        worst = std::min(worst, *s.min_ratio);
        if (!(*s.min_ratio >= 1.0 - 1e-9)) ok = false;
      }
    }
    c.passed = ok;
    c.detail = fmt("min frob_ratio %.12f", worst) + " over " + std::to_string(count) +
               " defined ratios in " + std::to_string(streams.size()) + " streams";
    return c;
  }

  CheckResult norm_tracking() {
    CheckResult c;
    ensure_streams();
    double worst = 0.0;
    for (const auto& s : streams) worst = std::max(worst, s.norm_rel_error);
    c.passed = worst <= 1e-9;
    c.detail = fmt("max relative error %.3g", worst) + " over " + std::to_string(streams.size()) +
               " streams";
    return c;
  }

  CheckResult finance_pipeline() {
    using namespace finance;
    CheckResult c;
    SyntheticPanelSpec ps;
    ps.seed = 11;
    const ReturnsPanel panel = make_returns_panel(synthetic_prices(ps));
    const std::vector<PortfolioSpec> ports = {equal_weight(ps.assets)};
    auto terminal = [&](std::optional<Index> period) {
      FinanceConfig cfg;
      if (period) {
        cfg.policy.kind = RefreshKind::periodic;
        cfg.policy.period = *period;
      }
      return run_finance_stream(panel, cfg, ports, Core{}).back();
    };
    const RiskSnapshot none = terminal(std::nullopt);
    const RiskSnapshot r100 = terminal(Index{100});
    const RiskSnapshot r20 = terminal(Index{20});
    const double inf = std::numeric_limits<double>::infinity();
    const double cn = none.cov_rel_error.value_or(NAN), c100 = r100.cov_rel_error.value_or(NAN),
                 c20 = r20.cov_rel_error.value_or(inf);
    const double rn = none.risk_rel_error[0].value_or(NAN),
                 q100 = r100.risk_rel_error[0].value_or(NAN),
                 q20 = r20.risk_rel_error[0].value_or(inf);
    c.passed = cn >= c100 && c100 >= c20 && rn >= q100 && q100 >= q20 && q20 <= 1e-2;
    c.detail = fmt("cov %.3g", cn) + fmt(" >= %.3g", c100) + fmt(" >= %.3g", c20) +
               fmt("; risk %.3g", rn) + fmt(" >= %.3g", q100) + fmt(" >= %.3g", q20);
    return c;
  }

  CheckResult causality() {
    using namespace finance;
    CheckResult c;
    SyntheticPanelSpec ps;
    ps.seed = 11;
    ps.days = 600;
    const PriceTable original = synthetic_prices(ps);
    PriceTable modified = original;
    const Index first_price = modified.prices.rows() - 100;
    std::mt19937_64 rng(1010);
    std::uniform_real_distribution<double> bump(0.5, 2.0);
    for (Index t = first_price; t < modified.prices.rows(); ++t)
      for (Index i = 0; i < modified.prices.cols(); ++i) modified.prices(t, i) *= bump(rng);
    // Return row r uses prices r and r+1.
    const Index first_return = first_price - 1;

    const ReturnsPanel pa = make_returns_panel(original);
    const ReturnsPanel pb = make_returns_panel(modified);
    const std::vector<PortfolioSpec> ports = {equal_weight(ps.assets),
                                              dirichlet_weights(ps.assets, 1.0, 11, "dir0")};
    bool ok = pa.centered.topRows(first_return) == pb.centered.topRows(first_return);
    Index compared = 0;
    bool later_differs = false;
    for (const std::optional<Index> period : {std::optional<Index>{}, std::optional<Index>{20}}) {
      FinanceConfig cfg;
      cfg.t0 = 250;
      if (period) {
        cfg.policy.kind = RefreshKind::periodic;
        cfg.policy.period = *period;
      }
      const auto sa = run_finance_stream(pa, cfg, ports, Core{});
      const auto sb = run_finance_stream(pb, cfg, ports, Core{});
      if (sa.size() != sb.size()) ok = false;
      for (std::size_t q = 0; q < std::min(sa.size(), sb.size()); ++q) {
        const bool same = sa[q].step == sb[q].step && sa[q].date == sb[q].date &&
                          sa[q].cov_rel_error == sb[q].cov_rel_error &&
                          sa[q].risk_rel_error == sb[q].risk_rel_error &&
                          sa[q].angle_factor == sb[q].angle_factor &&
                          sa[q].refreshed == sb[q].refreshed && sa[q].rank == sb[q].rank;
        if (cfg.t0 + sa[q].step - 1 < first_return) {
          ++compared;
          if (!same) ok = false;
        } else if (!same) {
          later_differs = true;
        }
      }
    }
    c.passed = ok && compared > 0 && later_differs;
    c.detail = std::to_string(compared) + " pre-modification snapshots bit-identical" +
               (later_differs ? ", later snapshots differ" : ", later snapshots unexpectedly equal");
    return c;
  }

  CheckResult policy_laws() {
    CheckResult c;
    std::vector<std::string> failures;

    for (Index total : {0, 1, 999, 1000, 10000, 12345})
      for (Index period : {1, 7, 200, 1000, 5000}) {
        Index fired = 0;
        for (Index t = 1; t <= total; ++t) fired += periodic_should_refresh(t, period) ? 1 : 0;
        if (fired != total / period) failures.push_back("periodic count");
      }

    std::mt19937_64 rng(1111);
    std::uniform_real_distribution<double> ratio(0.95, 1.3);
    for (Index t_min : {0, 1, 5, 50}) {
      Index t_last = 0;
      for (Index t = 1; t <= 5000; ++t) {
        if (error_should_refresh(ratio(rng), 1.1, t, t_last, t_min)) {
          if (t - t_last < t_min) failures.push_back("error spacing");
          t_last = t;
        }
      }
    }
    {
      StreamSpec spec = rank_one_spec(3000, std::nullopt, 1112);
      spec.m = 20;
      spec.n = 15;
      spec.true_rank = 3;
      spec.sim.k = 3;
      spec.delta_sd = 0.3;
      spec.sim.log_every = 10;
      spec.sim.policy.kind = RefreshKind::error_based;
      spec.sim.policy.gamma = 1.01;
      spec.sim.policy.t_min = 300;
      const auto res = simulate(spec, Core{});
      Index last = 0;
      for (Index s : res.refresh_steps) {
        if (s - last < 300) failures.push_back("simulated error spacing");
        last = s;
      }
      streams.push_back(summarize("error policy", res));
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
      const Index len = 1 + static_cast<Index>(rng() % 20);
      Vector sv(len);
      for (Index q = 0; q < len; ++q) sv(q) = std::abs(normal(rng));
      std::sort(sv.data(), sv.data() + len, std::greater<>());
      const Index k_min = 1 + static_cast<Index>(rng() % 5);
      const Index k_max = k_min + static_cast<Index>(rng() % 20);
      Index prev = 0;
      for (int step = 1; step <= 100; ++step) {
        const Index k = evr_select_rank(sv, step / 100.0, k_min, k_max);
        if (k < prev || k < k_min || k > k_max) failures.push_back("evr monotone");
        prev = k;
      }
    }

    std::uniform_real_distribution<double> unit(0.0, 2.0);
    for (int trial = 0; trial < 10000; ++trial) {
      const Index k_max = 1 + static_cast<Index>(rng() % 10);
      const Index k = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(k_max));
      const Index next = novelty_rank_bump(unit(rng), unit(rng), 0.05 + 0.9 * unit(rng) / 2, k, k_max);
      if (next > k_max || next < k) failures.push_back("novelty bound");
    }
    {
      StreamSpec spec;
      spec.m = 30;
      spec.n = 20;
      spec.true_rank = 6;
      spec.scenario = Scenario::rows;
      spec.events = 300;
      spec.event_noise = 0.5;
      spec.seed = 1113;
      spec.sim.k = 2;
      spec.sim.log_every = 10;
      spec.sim.policy.adaptive_rank = AdaptiveRank{0.9, 1, 4, 0.3};
      const auto res = simulate(spec, Core{});
      for (const auto& rec : res.records)
        if (rec.rank > 4) failures.push_back("adaptive rank above k_max");
      streams.push_back(summarize("adaptive rank", res));
    }

    c.passed = failures.empty();
    c.detail = failures.empty() ? "periodic counts, T_min spacing, EVR monotonicity, k_max bound"
                                : "violated: " + failures.front();
    return c;
  }

  CheckResult oracle_cross_check() {
    CheckResult c;
    std::mt19937_64 rng(1212);
    std::normal_distribution<double> normal(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const Index m = 1 + static_cast<Index>(rng() % 12);
      const Index n = 1 + static_cast<Index>(rng() % 10);
      Matrix a(m, n);
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) a(i, j) = normal(rng);
      const SvdFactors f = full_svd(a);
      const std::vector<double> g = testing::gram_singular_values(a);
      for (std::size_t q = 0; q < g.size(); ++q) {
        const double s = static_cast<Index>(q) < f.S.size() ? f.S(static_cast<Index>(q)) : 0.0;
        worst = std::max(worst, std::abs(s - g[q]));
      }
    }
    c.passed = worst <= 1e-8;
    c.detail = fmt("max |sigma - sqrt(eig(Gram))| = %.3g over 200 matrices", worst);
    return c;
  }

 private:
  void ensure_periodic_run() {
    if (periodic_run) return;
    periodic_run = simulate(rank_one_spec(10000, Index{1000}, 7), Core{});
    streams.push_back(summarize("rank1 periodic", *periodic_run));
  }

  void ensure_streams() {
    if (streams.empty()) append_exactness();
  }
};

}  // namespace detail

/// Runs the selected checks; on_result is called as each finishes.
template <class Core = ExactCoreSvd>
std::vector<CheckResult> run_acceptance(const VerifyOptions& opts,
                                        const std::function<void(const CheckResult&)>& on_result = {}) {
  detail::Suite<Core> suite;
  using Method = CheckResult (detail::Suite<Core>::*)();
  const std::vector<std::pair<int, Method>> order = {
      {1, &detail::Suite<Core>::append_exactness},   {2, &detail::Suite<Core>::projection_identity},
      {3, &detail::Suite<Core>::orthonormality},     {5, &detail::Suite<Core>::replication_band},
      {6, &detail::Suite<Core>::sawtooth},           {7, &detail::Suite<Core>::rank_scaling},
      {9, &detail::Suite<Core>::finance_pipeline},   {10, &detail::Suite<Core>::causality},
      {11, &detail::Suite<Core>::policy_laws},       {12, &detail::Suite<Core>::oracle_cross_check},
      {4, &detail::Suite<Core>::eckart_young},       {8, &detail::Suite<Core>::norm_tracking},
  };
  std::vector<CheckResult> results;
  for (const auto& [id, method] : order) {
    const Criterion& crit = criteria()[static_cast<std::size_t>(id - 1)];
    CheckResult r;
    const bool selected =
        opts.only.empty() || std::find(opts.only.begin(), opts.only.end(), id) != opts.only.end();
    if (!selected || (opts.fast && crit.slow && opts.only.empty())) {
      r.skipped = true;
      r.passed = true;
      r.detail = selected ? "skipped (--fast)" : "not selected";
    } else {
      const auto start = std::chrono::steady_clock::now();
      try {
        r = (suite.*method)();
      } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (crit.budget_seconds > 0 && r.seconds > crit.budget_seconds) {
        r.passed = false;
        r.detail += detail::fmt(" (over the %.0f s budget)", crit.budget_seconds);
      }
    }
    r.id = id;
    r.name = crit.name;
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  std::sort(results.begin(), results.end(),
            [](const CheckResult& a, const CheckResult& b) { return a.id < b.id; });
  return results;
}

inline std::string format_result(const CheckResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "[%s] %2d %-38s %7.2fs  ",
                r.skipped ? "SKIP" : (r.passed ? "PASS" : "FAIL"), r.id, r.name.c_str(), r.seconds);
  return head + r.detail;
}

}  // namespace isvd::verify
