#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "isvd/stream_sim.hpp"
#include "isvd/testing/oracles.hpp"

using namespace isvd;

namespace {

template <class T>
Index count_kind(const std::vector<UpdateEvent>& ev) {
  return std::count_if(ev.begin(), ev.end(), [](const UpdateEvent& e) { return std::holds_alternative<T>(e); });
}

bool same_events(const std::vector<UpdateEvent>& a, const std::vector<UpdateEvent>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].index() != b[i].index()) return false;
    if (const auto* r = std::get_if<RowAppend>(&a[i])) {
      if (r->x != std::get<RowAppend>(b[i]).x) return false;
    } else if (const auto* c = std::get_if<ColAppend>(&a[i])) {
      if (c->y != std::get<ColAppend>(b[i]).y) return false;
    } else {
      const auto& p = std::get<RankOne>(a[i]);
      const auto& q = std::get<RankOne>(b[i]);
      if (p.i != q.i || p.j != q.j || p.delta != q.delta) return false;
    }
  }
  return true;
}

void expect_same_records(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].frob_error, b[i].frob_error);
    EXPECT_EQ(a[i].frob_ratio, b[i].frob_ratio);
    EXPECT_EQ(a[i].angle_ref, b[i].angle_ref);
    EXPECT_EQ(a[i].angle_opt, b[i].angle_opt);
    EXPECT_EQ(a[i].evr, b[i].evr);
    EXPECT_EQ(a[i].refreshed, b[i].refreshed);
    EXPECT_EQ(a[i].rank, b[i].rank);
  }
}

}  // namespace

TEST(GenLowRank, Examples) {
  const SvdFactors full = full_svd(gen_low_rank(6, 6, 6, 0.0, 1));
  EXPECT_GT(full.S(5), 1e-6);
  const auto sv = isvd::testing::gram_singular_values(gen_low_rank(10, 10, 3, 0.0, 2));
  EXPECT_LE(sv[3], 1e-7 * sv[0]);  // Gram route loses half the digits near zero
  EXPECT_LE(full_svd(gen_low_rank(10, 10, 3, 0.0, 2)).S(3), 1e-9 * sv[0]);
  EXPECT_EQ(gen_low_rank(5, 4, 2, 0.1, 3), gen_low_rank(5, 4, 2, 0.1, 3));
  EXPECT_NE(gen_low_rank(5, 4, 2, 0.1, 3), gen_low_rank(5, 4, 2, 0.1, 4));
  EXPECT_THROW(gen_low_rank(3, 4, 4, 0.0, 1), std::invalid_argument);
}

TEST(GenRankOne, Examples) {
  const auto ev = gen_rank_one_events(10000, 0.05, 50, 40, 7);
  EXPECT_EQ(count_kind<RankOne>(ev), 10000);
  EXPECT_TRUE(gen_rank_one_events(0, 0.05, 50, 40, 7).empty());
  double sum = 0, sq = 0;
  for (const auto& e : ev) {
    const auto& r = std::get<RankOne>(e);
    EXPECT_GE(r.i, 0);
    EXPECT_LT(r.i, 50);
    EXPECT_GE(r.j, 0);
    EXPECT_LT(r.j, 40);
    sum += r.delta;
    sq += r.delta * r.delta;
  }
  const double mean = sum / 10000.0;
  const double sd = std::sqrt(sq / 10000.0 - mean * mean);
  EXPECT_GE(sd, 0.045);
  EXPECT_LE(sd, 0.055);
  EXPECT_TRUE(same_events(ev, gen_rank_one_events(10000, 0.05, 50, 40, 7)));
}

TEST(GenStructural, ClosedUnderSpan) {
  const auto ev = gen_structural_events(GrowthKind::rows, 40, 6, 0.0, 5, 20, 15);
  EXPECT_EQ(count_kind<RowAppend>(ev), 40);
  IncrementalSvd e(gen_low_rank(20, 15, 6, 0.0, 5), 6);
  for (const auto& x : ev) e.apply(x);
  EXPECT_LE(frob_error(e), 1e-8 * std::sqrt(e.tracked_sq_norm()));
  EXPECT_LE(full_svd(e.tracked()).S(6), 1e-9 * full_svd(e.tracked()).S(0));
  EXPECT_TRUE(same_events(ev, gen_structural_events(GrowthKind::rows, 40, 6, 0.0, 5, 20, 15)));

  const auto cols = gen_structural_events(GrowthKind::cols, 30, 6, 0.0, 5, 20, 15);
  IncrementalSvd c(gen_low_rank(20, 15, 6, 0.0, 5), 6);
  for (const auto& y : cols) c.apply(y);
  EXPECT_EQ(c.cols(), 45);
  EXPECT_LE(frob_error(c), 1e-8 * std::sqrt(c.tracked_sq_norm()));
}

TEST(GenStructural, PaperConfiguration) {
  StreamSpec spec;
  spec.m = 60;
  spec.n = 40;
  spec.true_rank = 6;
  spec.scenario = Scenario::rows;
  spec.events = 300;
  spec.event_noise = 0.1;
  spec.seed = 6;
  spec.sim.k = 4;
  spec.sim.policy.kind = RefreshKind::periodic;
  spec.sim.policy.period = 50;
  spec.sim.log_every = 10;
  const auto res = simulate(spec);
  EXPECT_EQ(res.refresh_steps.size(), 6u);
  EXPECT_EQ(res.records.back().rows, 360);
  for (const auto& r : res.records) {
    if (r.refreshed) EXPECT_NEAR(*r.frob_ratio, 1.0, 1e-9);
  }
}

TEST(GenMixed, Examples) {
  const auto only_r1 = gen_mixed_stream(100, {0, 0, 1}, {10, 8, 2, 0.1, 0.05}, 1);
  EXPECT_EQ(count_kind<RankOne>(only_r1), 100);
  const auto ev = gen_mixed_stream(300, {1, 1, 1}, {10, 8, 2, 0.1, 0.05}, 2);
  const double sigma = std::sqrt(300.0 * (1.0 / 3) * (2.0 / 3));
  for (Index c : {count_kind<RowAppend>(ev), count_kind<ColAppend>(ev), count_kind<RankOne>(ev)}) {
    EXPECT_LE(std::abs(static_cast<double>(c) - 100.0), 4 * sigma);
  }
  EXPECT_TRUE(same_events(ev, gen_mixed_stream(300, {1, 1, 1}, {10, 8, 2, 0.1, 0.05}, 2)));
  EXPECT_THROW(gen_mixed_stream(3, {0, 0, 0}, {10, 8, 2, 0.1, 0.05}, 2), std::invalid_argument);
  EXPECT_THROW(gen_mixed_stream(3, {-1, 1, 0}, {10, 8, 2, 0.1, 0.05}, 2), std::invalid_argument);
  // Events always fit the evolving shape.
  IncrementalSvd e(gen_low_rank(10, 8, 2, 0.1, 2), 2);
  for (const auto& x : ev) EXPECT_NO_THROW(e.apply(x));
}

TEST(Simulate, EmptyStream) {
  StreamSpec spec;
  spec.seed = 1;
  const auto recs = run_simulation(spec);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_STREQ(recs[0].event, "init");
  EXPECT_TRUE(recs[0].frob_ratio.has_value());
  EXPECT_NEAR(*recs[0].frob_ratio, 1.0, 1e-12);
}

TEST(Simulate, DeterministicUpToTiming) {
  StreamSpec spec;
  spec.scenario = Scenario::mixed;
  spec.events = 400;
  spec.mix = {1, 1, 8};
  spec.seed = 99;
  spec.sim.log_every = 20;
  spec.sim.policy.kind = RefreshKind::periodic;
  spec.sim.policy.period = 100;
  expect_same_records(run_simulation(spec), run_simulation(spec));
}

TEST(Simulate, RankOneReplication) {
  auto spec_for = [](std::optional<Index> period) {
    StreamSpec spec;
    spec.events = 10000;
    spec.seed = 7;
    if (period) {
      spec.sim.policy.kind = RefreshKind::periodic;
      spec.sim.policy.period = *period;
    }
    return spec;
  };
  const auto none = simulate(spec_for(std::nullopt));
  const auto periodic = simulate(spec_for(1000));
  EXPECT_EQ(none.records.size(), 10001u);
  EXPECT_GT(*none.records.back().frob_ratio, *periodic.records.back().frob_ratio);
  EXPECT_GT(*none.records.back().angle_opt, *periodic.records.back().angle_opt);
  EXPECT_EQ(periodic.refresh_steps.size(), 10u);

  // Monotone drift: late ratios exceed early ones without refresh.
  std::vector<double> logged;
  for (const auto& r : none.records)
    if (r.frob_ratio) logged.push_back(*r.frob_ratio);
  const std::size_t tenth = logged.size() / 10;
  const double early = *std::max_element(logged.begin(), logged.begin() + tenth);
  const double late = *std::max_element(logged.end() - tenth, logged.end());
  EXPECT_GT(late, early);

  // Sawtooth.
  for (const auto& r : periodic.records) {
    if (!r.refreshed) continue;
    EXPECT_LE(*r.angle_opt, 1e-6);
    EXPECT_LE(*r.frob_ratio, 1.0 + 1e-9);
    EXPECT_LE(*r.angle_ref, 1e-12);
  }
}

TEST(Simulate, OracleCadenceAndRecords) {
  StreamSpec spec;
  spec.events = 120;
  spec.seed = 3;
  spec.sim.log_every = 50;
  const auto recs = run_simulation(spec);
  ASSERT_EQ(recs.size(), 121u);
  for (const auto& r : recs) {
    const bool oracle = r.step % 50 == 0 || r.step == 120;
    EXPECT_EQ(r.frob_opt.has_value(), oracle) << r.step;
    EXPECT_GE(r.update_time, 0.0);
    if (r.step > 0) EXPECT_STREQ(r.event, "rank1");
  }
}

TEST(Simulate, ErrorPolicySpacing) {
  StreamSpec spec;
  spec.m = 20;
  spec.n = 15;
  spec.true_rank = 3;
  spec.events = 2000;
  spec.delta_sd = 0.3;
  spec.seed = 4;
  spec.sim.k = 3;
  spec.sim.log_every = 10;
  spec.sim.policy.kind = RefreshKind::error_based;
  spec.sim.policy.gamma = 1.01;
  spec.sim.policy.t_min = 200;
  const auto res = simulate(spec);
  ASSERT_FALSE(res.refresh_steps.empty());
  Index last = 0;
  for (Index s : res.refresh_steps) {
    EXPECT_GE(s - last, 200);
    EXPECT_EQ(s % 10, 0);  // triggers only on oracle steps
    last = s;
  }
}

TEST(Simulate, AnglePolicyTriggers) {
  StreamSpec spec;
  spec.m = 20;
  spec.n = 15;
  spec.true_rank = 3;
  spec.events = 2000;
  spec.delta_sd = 0.5;
  spec.seed = 5;
  spec.sim.k = 3;
  spec.sim.log_every = 10;
  spec.sim.policy.kind = RefreshKind::angle_based;
  spec.sim.policy.theta_max = 0.05;
  const auto res = simulate(spec);
  ASSERT_FALSE(res.refresh_steps.empty());
  for (const auto& r : res.records)
    if (r.angle_opt && !r.refreshed) EXPECT_LE(*r.angle_opt, 0.05 + 1e-12);
}

TEST(Simulate, AdaptiveRankStaysInBounds) {
  StreamSpec spec;
  spec.m = 30;
  spec.n = 20;
  spec.true_rank = 6;
  spec.scenario = Scenario::rows;
  spec.events = 300;
  spec.event_noise = 0.05;
  spec.seed = 8;
  spec.sim.k = 2;
  spec.sim.log_every = 10;
  spec.sim.policy.adaptive_rank = AdaptiveRank{0.95, 2, 6, 0.3};
  const auto res = simulate(spec);
  Index max_rank = 0;
  for (const auto& r : res.records) {
    EXPECT_LE(r.rank, 6);
    max_rank = std::max(max_rank, r.rank);
  }
  EXPECT_GT(max_rank, 2);
}

TEST(Simulate, ShapeMismatchNamesStep) {
  std::vector<UpdateEvent> ev = {RankOne{0, 0, 0.1}, RowAppend{Vector::Ones(3)}};
  try {
    simulate(Matrix::Identity(4, 4), ev, SimulationConfig{});
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.step(), 2);
  }
}

TEST(Scenario, Names) {
  for (auto s : {Scenario::rank1, Scenario::rows, Scenario::cols, Scenario::mixed})
    EXPECT_EQ(parse_scenario(to_string(s)), s);
  EXPECT_THROW(parse_scenario("diagonal"), std::invalid_argument);
}

TEST(FactorModel, IndexAddressable) {
  const FactorModel m(3, 4);
  EXPECT_EQ(m.row_loading(17), m.row_loading(17));
  EXPECT_EQ(m.row_loadings(5, 3).row(1).transpose(), m.row_loading(6));
  EXPECT_NE(m.row_loading(1), m.col_loading(1));
}
