// Synthetic low-rank streams and the simulation loop that drives the engine,
// evaluates refresh/rank policies and logs metrics.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "isvd/engine.hpp"
#include "isvd/linalg.hpp"
#include "isvd/metrics.hpp"
#include "isvd/policies.hpp"
#include "isvd/random.hpp"

namespace isvd {

/// Latent factor model with index-addressable loadings: row i of the left
/// factor and row j of the right factor are pure functions of (seed, i) and
/// (seed, j), so matrices can grow in either direction consistently.
class FactorModel {
 public:
  FactorModel(std::uint64_t seed, Index rank) : seed_(seed), rank_(rank) {}

  Vector row_loading(Index i) const { return draw(random::Stream::row_factors, i); }
  Vector col_loading(Index j) const { return draw(random::Stream::col_factors, j); }

  Matrix row_loadings(Index begin, Index count) const {
    Matrix out(count, rank_);
    for (Index t = 0; t < count; ++t) out.row(t) = row_loading(begin + t).transpose();
    return out;
  }
  Matrix col_loadings(Index begin, Index count) const {
    Matrix out(count, rank_);
    for (Index t = 0; t < count; ++t) out.row(t) = col_loading(begin + t).transpose();
    return out;
  }

  Index rank() const { return rank_; }

 private:
  Vector draw(random::Stream stream, Index index) const {
    auto rng = random::substream(seed_, stream, static_cast<std::uint64_t>(index));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(rank_);
    for (Index c = 0; c < rank_; ++c) v(c) = normal(rng);
    return v;
  }

  std::uint64_t seed_;
  Index rank_;
};

/// X * Y^T + noise with standard-normal X (m x r), Y (n x r) and Gaussian
/// noise of standard deviation noise_scale.
inline Matrix gen_low_rank(Index m, Index n, Index r, double noise_scale, std::uint64_t seed) {
  if (m < 1 || n < 1) throw std::invalid_argument("gen_low_rank: empty shape");
  if (r < 0 || r > std::min(m, n)) {
    throw std::invalid_argument("gen_low_rank: rank " + std::to_string(r) +
                                " exceeds min(m, n)");
  }
  const FactorModel model(seed, r);
  Matrix a = model.row_loadings(0, m) * model.col_loadings(0, n).transpose();
  if (noise_scale > 0.0) {
    auto rng = random::substream(seed, random::Stream::init_noise);
    std::normal_distribution<double> normal(0.0, noise_scale);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < n; ++j) a(i, j) += normal(rng);
  }
  return a;
}

inline std::vector<UpdateEvent> gen_rank_one_events(Index count, double delta_sd, Index rows,
                                                    Index cols, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("gen_rank_one_events: negative count");
  std::vector<UpdateEvent> events;
  events.reserve(static_cast<std::size_t>(count));
  auto rng = random::substream(seed, random::Stream::events);
  std::uniform_int_distribution<Index> row_pick(0, rows - 1);
  std::uniform_int_distribution<Index> col_pick(0, cols - 1);
  std::normal_distribution<double> delta(0.0, delta_sd);
  for (Index t = 0; t < count; ++t) {
    const Index i = row_pick(rng);
    const Index j = col_pick(rng);
    events.emplace_back(RankOne{i, j, delta(rng)});
  }
  return events;
}

enum class GrowthKind { rows, cols };

/// New rows (or columns) drawn from a rank-factor_rank model whose directions
/// are fixed by the seed, plus Gaussian noise. rows/cols give the shape the
/// stream starts from.
inline std::vector<UpdateEvent> gen_structural_events(GrowthKind kind, Index count,
                                                      Index factor_rank, double noise_scale,
                                                      std::uint64_t seed, Index rows,
                                                      Index cols) {
  if (count < 0) throw std::invalid_argument("gen_structural_events: negative count");
  const FactorModel model(seed, factor_rank);
  auto rng = random::substream(seed, random::Stream::event_noise);
  std::normal_distribution<double> noise(0.0, noise_scale > 0.0 ? noise_scale : 1.0);
  auto add_noise = [&](Vector& v) {
    if (noise_scale > 0.0)
      for (Index c = 0; c < v.size(); ++c) v(c) += noise(rng);
  };

  std::vector<UpdateEvent> events;
  events.reserve(static_cast<std::size_t>(count));
  if (kind == GrowthKind::rows) {
    const Matrix directions = model.col_loadings(0, cols);
    for (Index t = 0; t < count; ++t) {
      Vector x = directions * model.row_loading(rows + t);
      add_noise(x);
      events.emplace_back(RowAppend{std::move(x)});
    }
  } else {
    const Matrix directions = model.row_loadings(0, rows);
    for (Index t = 0; t < count; ++t) {
      Vector y = directions * model.col_loading(cols + t);
      add_noise(y);
      events.emplace_back(ColAppend{std::move(y)});
    }
  }
  return events;
}

struct MixWeights {
  double row = 1.0;
  double col = 1.0;
  double rank1 = 1.0;
};

struct MixedStreamParams {
  Index rows = 0;
  Index cols = 0;
  Index factor_rank = 1;
  double noise_scale = 0.0;
  double delta_sd = 0.05;
};

/// Interleaved row/column appends and rank-1 perturbations chosen by weight.
inline std::vector<UpdateEvent> gen_mixed_stream(Index count, const MixWeights& weights,
                                                 const MixedStreamParams& params,
                                                 std::uint64_t seed) {
  if (weights.row < 0 || weights.col < 0 || weights.rank1 < 0 ||
      weights.row + weights.col + weights.rank1 <= 0) {
    throw std::invalid_argument("gen_mixed_stream: weights must be nonnegative, not all zero");
  }
  const FactorModel model(seed, params.factor_rank);
  auto choice_rng = random::substream(seed, random::Stream::events);
  auto noise_rng = random::substream(seed, random::Stream::event_noise);
  std::discrete_distribution<int> pick({weights.row, weights.col, weights.rank1});
  std::normal_distribution<double> noise(0.0, params.noise_scale > 0.0 ? params.noise_scale : 1.0);
  std::normal_distribution<double> delta(0.0, params.delta_sd);

  Matrix left = model.row_loadings(0, params.rows);
  Matrix right = model.col_loadings(0, params.cols);
  auto add_noise = [&](Vector& v) {
    if (params.noise_scale > 0.0)
      for (Index c = 0; c < v.size(); ++c) v(c) += noise(noise_rng);
  };

  std::vector<UpdateEvent> events;
  events.reserve(static_cast<std::size_t>(count));
  for (Index t = 0; t < count; ++t) {
    switch (pick(choice_rng)) {
      case 0: {
        const Vector loading = model.row_loading(left.rows());
        Vector x = right * loading;
        add_noise(x);
        left.conservativeResize(left.rows() + 1, Eigen::NoChange);
        left.row(left.rows() - 1) = loading.transpose();
        events.emplace_back(RowAppend{std::move(x)});
        break;
      }
      case 1: {
        const Vector loading = model.col_loading(right.rows());
        Vector y = left * loading;
        add_noise(y);
        right.conservativeResize(right.rows() + 1, Eigen::NoChange);
        right.row(right.rows() - 1) = loading.transpose();
        events.emplace_back(ColAppend{std::move(y)});
        break;
      }
      default: {
        std::uniform_int_distribution<Index> row_pick(0, left.rows() - 1);
        std::uniform_int_distribution<Index> col_pick(0, right.rows() - 1);
        const Index i = row_pick(choice_rng);
        const Index j = col_pick(choice_rng);
        events.emplace_back(RankOne{i, j, delta(noise_rng)});
      }
    }
  }
  return events;
}

enum class Scenario { rank1, rows, cols, mixed };

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::rank1: return "rank1";
    case Scenario::rows: return "rows";
    case Scenario::cols: return "cols";
    case Scenario::mixed: return "mixed";
  }
  return "rank1";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "rank1") return Scenario::rank1;
  if (s == "rows") return Scenario::rows;
  if (s == "cols") return Scenario::cols;
  if (s == "mixed") return Scenario::mixed;
  throw std::invalid_argument("unknown scenario: " + std::string(s));
}

struct SimulationConfig {
  Index k = 5;
  PolicyConfig policy;
  Index log_every = 50;
  EngineConfig engine;
};

/// Full description of one synthetic run.
struct StreamSpec {
  Index m = 50;
  Index n = 40;
  Index true_rank = 5;
  double noise_scale = 0.1;
  Scenario scenario = Scenario::rank1;
  Index events = 0;
  double delta_sd = 0.05;
  Index factor_rank = 0;  // 0: same as true_rank
  double event_noise = 0.1;
  MixWeights mix;
  std::uint64_t seed = 0;
  SimulationConfig sim;

  Index effective_factor_rank() const { return factor_rank > 0 ? factor_rank : true_rank; }
};

inline Matrix initial_matrix(const StreamSpec& spec) {
  return gen_low_rank(spec.m, spec.n, spec.true_rank, spec.noise_scale, spec.seed);
}

inline std::vector<UpdateEvent> generate_events(const StreamSpec& spec) {
  switch (spec.scenario) {
    case Scenario::rank1:
      return gen_rank_one_events(spec.events, spec.delta_sd, spec.m, spec.n, spec.seed);
    case Scenario::rows:
      return gen_structural_events(GrowthKind::rows, spec.events, spec.effective_factor_rank(),
                                   spec.event_noise, spec.seed, spec.m, spec.n);
    case Scenario::cols:
      return gen_structural_events(GrowthKind::cols, spec.events, spec.effective_factor_rank(),
                                   spec.event_noise, spec.seed, spec.m, spec.n);
    case Scenario::mixed:
      return gen_mixed_stream(spec.events, spec.mix,
                              MixedStreamParams{spec.m, spec.n, spec.effective_factor_rank(),
                                                spec.event_noise, spec.delta_sd},
                              spec.seed);
  }
  return {};
}

/// Raised when an event does not fit the evolving matrix.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(Index step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

struct SimulationResult {
  std::vector<MetricsRecord> records;
  std::vector<Index> refresh_steps;
  double final_sq_norm = 0.0;
  double final_direct_sq_norm = 0.0;
};

/// Runs the engine over an event list.
///
/// Oracles are computed at step 0, every log_every steps, on the final step
/// and on every refresh step. Error- and angle-based triggers are evaluated
/// only when an oracle is available. Metrics in a record describe the state
/// after any refresh taken at that step.
template <class CoreSvd = ExactCoreSvd>
SimulationResult simulate(Matrix a0, const std::vector<UpdateEvent>& events,
                          const SimulationConfig& config, CoreSvd core = {}) {
  config.policy.validate();
  if (config.log_every < 1) throw std::invalid_argument("simulate: log_every must be >= 1");
  const PolicyConfig& policy = config.policy;

  BasicIncrementalSvd<CoreSvd> engine(std::move(a0), config.k, config.engine, std::move(core));
  engine.mark_reference();

  SimulationResult result;
  result.records.reserve(events.size() + 1);
  {
    const OracleBaseline oracle = oracle_baseline(engine.tracked(), engine.work_rank());
    result.records.push_back(collect_metrics(engine, 0.0, false, &oracle));
  }

  const Index total = static_cast<Index>(events.size());
  Index t_last = 0;
  std::optional<Index> pending_rank;  // EVR proposal awaiting confirmation
  std::optional<Index> confirmed_decrease;

  for (Index t = 1; t <= total; ++t) {
    const UpdateEvent& ev = events[static_cast<std::size_t>(t - 1)];

    std::optional<double> novelty;
    try {
      novelty = engine.novelty(ev);
      if (policy.adaptive_rank && novelty) {
        const auto& ar = *policy.adaptive_rank;
        const Index bumped =
            novelty_rank_bump(*novelty, 1.0, ar.eta, engine.work_rank(), ar.k_max);
        if (bumped != engine.work_rank()) engine.set_rank(bumped);
      }
    } catch (const std::exception& e) {
      throw SimulationError(t, e.what());
    }

    double update_time = 0.0;
    try {
      update_time = timed([&] { engine.apply(ev); });
    } catch (const std::invalid_argument& e) {
      throw SimulationError(t, e.what());
    }

    bool refresh_now =
        policy.kind == RefreshKind::periodic && periodic_should_refresh(t, policy.period);
    const bool oracle_step = refresh_now || t % config.log_every == 0 || t == total;

    std::optional<OracleBaseline> oracle;
    if (oracle_step) {
      oracle = oracle_baseline(engine.tracked(), engine.work_rank());
      if (policy.kind == RefreshKind::error_based) {
        const auto ratio = error_ratio(frob_error(engine), oracle->frob_opt);
        refresh_now = error_should_refresh(ratio, policy.gamma, t, t_last, policy.t_min);
      } else if (policy.kind == RefreshKind::angle_based &&
                 oracle->opt_basis.cols() >= engine.rank()) {
        const double angle = angle_to_opt(engine, oracle->opt_basis.leftCols(engine.rank()));
        refresh_now = angle_should_refresh(angle, policy.theta_max);
      }
      if (policy.adaptive_rank) {
        const auto& ar = *policy.adaptive_rank;
        const Index selected =
            evr_select_rank(oracle->singular_values, ar.tau_evr, ar.k_min, ar.k_max);
        if (selected == engine.work_rank()) {
          pending_rank.reset();
        } else if (pending_rank && *pending_rank == selected) {
          pending_rank.reset();
          if (selected > engine.work_rank()) {
            engine.set_rank(selected);
            confirmed_decrease.reset();
          } else {
            confirmed_decrease = selected;
          }
        } else {
          pending_rank = selected;
        }
      }
    }

    if (refresh_now) {
      if (confirmed_decrease) {
        engine.set_rank(*confirmed_decrease);
        confirmed_decrease.reset();
      }
      engine.refresh(true);
      t_last = t;
      result.refresh_steps.push_back(t);
      if (oracle && oracle->opt_basis.cols() != std::min(engine.work_rank(),
                                                         oracle->singular_values.size())) {
        oracle = oracle_baseline(engine.tracked(), engine.work_rank());
      }
    }

    MetricsRecord rec = collect_metrics(engine, update_time, refresh_now,
                                        oracle ? &*oracle : nullptr);
    rec.event = event_name(ev);
    rec.novelty = novelty;
    result.records.push_back(std::move(rec));
  }

  result.final_sq_norm = engine.tracked_sq_norm();
  result.final_direct_sq_norm = engine.tracked().squaredNorm();
  return result;
}

template <class CoreSvd = ExactCoreSvd>
SimulationResult simulate(const StreamSpec& spec, CoreSvd core = {}) {
  return simulate(initial_matrix(spec), generate_events(spec), spec.sim, std::move(core));
}

inline std::vector<MetricsRecord> run_simulation(const StreamSpec& spec) {
  return simulate(spec).records;
}

}  // namespace isvd
