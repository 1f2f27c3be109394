// Command-line front end: synthetic, finance, verify and replay subcommands.
//
// Every run writes its outputs only after all computation has succeeded, each
// file via write-then-rename, each accompanied by a JSON manifest that holds
// the command line needed to reproduce it.

#pragma once

#include <charconv>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "isvd/finance.hpp"
#include "isvd/io.hpp"
#include "isvd/stream_sim.hpp"
#include "isvd/verify.hpp"

namespace isvd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<Index> log_every;
  std::string out = ".";
  std::string name;
  bool reortho_guard = false;
  double tol = 1e-10;

  EngineConfig engine() const {
    EngineConfig cfg;
    cfg.tol = tol;
    cfg.reortho_guard = reortho_guard;
    return cfg;
  }
};

inline void add_common(CLI::App* app, Common& c, bool seed_required) {
  auto* seed = app->add_option("--seed", c.seed, "64-bit seed governing all randomness");
  if (seed_required) seed->required();
  app->add_option("--log-every", c.log_every, "oracle/metrics cadence in steps")
      ->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--name", c.name, "output file stem");
  app->add_flag("--reortho-guard", c.reortho_guard, "re-orthonormalize factors when drift exceeds 1e-6");
  app->add_option("--tol", c.tol, "residual tolerance for new directions")->check(CLI::PositiveNumber);
}

struct PolicyFlags {
  std::optional<Index> refresh_every;
  std::optional<std::string> policy;
  double gamma = 1.1;
  Index t_min = 0;
  double theta_max = 0.2;
};

inline void add_policy(CLI::App* app, PolicyFlags& p) {
  app->add_option("--refresh-every", p.refresh_every, "periodic refresh cadence")
      ->check(CLI::PositiveNumber);
  app->add_option("--policy", p.policy, "none | periodic | error | angle");
  app->add_option("--gamma", p.gamma, "error-ratio threshold for --policy error");
  app->add_option("--t-min", p.t_min, "minimum spacing between error-based refreshes");
  app->add_option("--theta-max", p.theta_max, "angle threshold (radians) for --policy angle");
}

inline PolicyConfig resolve_policy(const PolicyFlags& p) {
  PolicyConfig cfg;
  cfg.kind = p.policy ? parse_refresh_kind(*p.policy)
                      : (p.refresh_every ? RefreshKind::periodic : RefreshKind::none);
  if (cfg.kind == RefreshKind::periodic) {
    if (!p.refresh_every) throw std::invalid_argument("--policy periodic needs --refresh-every");
    cfg.period = *p.refresh_every;
  }
  cfg.gamma = p.gamma;
  cfg.t_min = p.t_min;
  cfg.theta_max = p.theta_max;
  return cfg;
}

inline json policy_json(const PolicyConfig& p) {
  json j = {{"kind", std::string(to_string(p.kind))},
            {"period", p.period},
            {"gamma", p.gamma},
            {"t_min", p.t_min},
            {"theta_max", p.theta_max}};
  if (p.adaptive_rank) {
    j["adaptive_rank"] = {{"tau_evr", p.adaptive_rank->tau_evr},
                          {"k_min", p.adaptive_rank->k_min},
                          {"k_max", p.adaptive_rank->k_max},
                          {"eta", p.adaptive_rank->eta}};
  }
  return j;
}

inline json engine_json(const EngineConfig& e) {
  return {{"tol", e.tol}, {"reortho_guard", e.reortho_guard}, {"reortho_threshold", e.reortho_threshold}};
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw std::invalid_argument(std::string("bad ") + what + " entry '" + tok + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
  return out;
}

/// Writes each (file, content) pair and its manifest; on failure removes
/// whatever was already written by this call.
class OutputSet {
 public:
  OutputSet(fs::path dir, io::RunManifest manifest)
      : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

  void add(std::string file, std::string content) {
    files_.emplace_back(std::move(file), std::move(content));
  }

  std::vector<fs::path> commit(std::ostream& log) {
    fs::create_directories(dir_);
    std::vector<fs::path> written;
    try {
      for (const auto& [file, content] : files_) {
        io::RunManifest m = manifest_;
        m.outputs = {file, manifest_name(file)};
        m.finished = std::chrono::system_clock::now();
        io::atomic_write(dir_ / file, content);
        written.push_back(dir_ / file);
        io::atomic_write(dir_ / manifest_name(file), m.to_json().dump(2) + "\n");
        written.push_back(dir_ / manifest_name(file));
      }
    } catch (...) {
      for (const auto& p : written) fs::remove(p);
      throw;
    }
    for (const auto& p : written) log << "wrote " << p.string() << "\n";
    return written;
  }

  static std::string manifest_name(const std::string& file) {
    return fs::path(file).stem().string() + ".manifest.json";
  }

 private:
  fs::path dir_;
  io::RunManifest manifest_;
  std::vector<std::pair<std::string, std::string>> files_;
};

struct SyntheticFlags {
  std::string scenario = "rank1";
  Index m = 50, n = 40, true_rank = 5, k = 5, events = 0, factor_rank = 0;
  double noise = 0.1, delta_sd = 0.05, event_noise = 0.1;
  std::string mix = "1,1,1";
  bool adaptive = false;
  double tau_evr = 0.9, eta = 0.5;
  Index k_min = 1;
  std::optional<Index> k_max;
};

inline json stream_json(const StreamSpec& s) {
  return {{"m", s.m},
          {"n", s.n},
          {"true_rank", s.true_rank},
          {"noise_scale", s.noise_scale},
          {"scenario", std::string(to_string(s.scenario))},
          {"events", s.events},
          {"delta_sd", s.delta_sd},
          {"factor_rank", s.effective_factor_rank()},
          {"event_noise", s.event_noise},
          {"mix", {s.mix.row, s.mix.col, s.mix.rank1}},
          {"seed", s.seed},
          {"k", s.sim.k},
          {"log_every", s.sim.log_every},
          {"policy", policy_json(s.sim.policy)},
          {"engine", engine_json(s.sim.engine)}};
}

inline int cmd_synthetic(const SyntheticFlags& f, const PolicyFlags& pf, const Common& c,
                         io::RunManifest manifest, std::ostream& log) {
  StreamSpec spec;
  spec.scenario = parse_scenario(f.scenario);
  spec.m = f.m;
  spec.n = f.n;
  spec.true_rank = f.true_rank;
  spec.noise_scale = f.noise;
  spec.events = f.events;
  spec.delta_sd = f.delta_sd;
  spec.factor_rank = f.factor_rank;
  spec.event_noise = f.event_noise;
  const auto w = parse_list<double>(f.mix, "--mix");
  if (w.size() != 3) throw std::invalid_argument("--mix needs three weights row,col,rank1");
  spec.mix = {w[0], w[1], w[2]};
  spec.seed = *c.seed;
  spec.sim.k = f.k;
  spec.sim.log_every = c.log_every.value_or(50);
  spec.sim.engine = c.engine();
  spec.sim.policy = resolve_policy(pf);
  if (f.adaptive) spec.sim.policy.adaptive_rank = AdaptiveRank{f.tau_evr, f.k_min, f.k_max.value_or(f.k), f.eta};
  spec.sim.policy.validate();

  const SimulationResult result = simulate(spec);

  const std::string stem =
      c.name.empty() ? "synthetic_" + f.scenario + "_seed" + std::to_string(spec.seed) : c.name;
  manifest.config = stream_json(spec);
  OutputSet outputs(c.out, std::move(manifest));
  outputs.add(stem + ".csv", io::metrics_csv(result.records, OutputSet::manifest_name(stem + ".csv")));
  outputs.commit(log);
  log << result.records.size() << " records, " << result.refresh_steps.size() << " refreshes\n";
  return 0;
}

struct FinanceFlags {
  std::optional<std::string> prices;
  bool synthetic = false;
  Index assets = 60, days = 1640, factors = 3;
  std::optional<Index> shift_day;
  double shift_multiplier = 3.0;
  Index t0 = 250, k = 5;
  std::string portfolios = "equal";
  double concentration = 1.0;
  std::string centering = "expanding";
  double alpha = 0.05;
  std::optional<std::string> grid_k;
  std::optional<std::string> grid_refresh;
};

inline std::vector<finance::PortfolioSpec> parse_portfolios(const std::string& text, Index n,
                                                            double concentration,
                                                            std::uint64_t seed) {
  std::vector<finance::PortfolioSpec> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "equal") {
      out.push_back(finance::equal_weight(n));
    } else if (tok.rfind("dirichlet:", 0) == 0) {
      const auto count = parse_list<int>(tok.substr(10), "dirichlet count");
      for (int q = 0; q < count[0]; ++q) {
        out.push_back(finance::dirichlet_weights(n, concentration, seed + static_cast<std::uint64_t>(q),
                                                 "dirichlet" + std::to_string(q)));
      }
    } else {
      throw std::invalid_argument("unknown portfolio '" + tok + "' (use equal or dirichlet:N)");
    }
  }
  if (out.empty()) throw std::invalid_argument("--portfolios is empty");
  return out;
}

inline std::string cadence_tag(std::optional<Index> c) {
  return c ? "r" + std::to_string(*c) : std::string("rnone");
}

inline int cmd_finance(const FinanceFlags& f, const PolicyFlags& pf, const Common& c,
                       io::RunManifest manifest, std::ostream& log) {
  if (f.prices.has_value() == f.synthetic) {
    throw std::invalid_argument("give exactly one of --prices or --synthetic-panel");
  }
  finance::PriceTable table;
  finance::SyntheticPanelSpec ps;
  if (f.prices) {
    try {
      table = finance::load_prices(*f.prices);
    } catch (const finance::PriceFileError& e) {
      throw std::runtime_error(*f.prices + ": " + e.what());
    }
  } else {
    ps.assets = f.assets;
    ps.days = f.days;
    ps.factors = f.factors;
    ps.seed = *c.seed;
    ps.shift_day = f.shift_day;
    ps.shift_multiplier = f.shift_multiplier;
    table = finance::synthetic_prices(ps);
  }

  finance::Centering centering;
  if (f.centering == "ew") {
    centering.mode = finance::Centering::Mode::exponential;
    centering.alpha = f.alpha;
  } else if (f.centering != "expanding") {
    throw std::invalid_argument("--centering must be expanding or ew");
  }
  const finance::ReturnsPanel panel = finance::make_returns_panel(table, centering);
  const auto ports = parse_portfolios(f.portfolios, static_cast<Index>(panel.tickers.size()),
                                      f.concentration, *c.seed);
  std::vector<std::string> labels;
  for (const auto& p : ports) labels.push_back(p.label);

  finance::FinanceConfig cfg;
  cfg.t0 = f.t0;
  cfg.k = f.k;
  cfg.log_every = c.log_every.value_or(5);
  cfg.engine = c.engine();
  cfg.policy = resolve_policy(pf);

  json config = {{"source", f.prices ? json{{"prices", *f.prices}}
                                     : json{{"synthetic_panel",
                                             {{"assets", ps.assets},
                                              {"days", ps.days},
                                              {"factors", ps.factors},
                                              {"seed", ps.seed},
                                              {"factor_vol", ps.factor_vol},
                                              {"idio_vol", ps.idio_vol},
                                              {"loading_drift", ps.loading_drift},
                                              {"shift_day", ps.shift_day ? json(*ps.shift_day) : json()},
                                              {"shift_multiplier", ps.shift_multiplier}}}}},
                 {"dates", panel.dates.size()},
                 {"assets", panel.tickers.size()},
                 {"dropped_dates", table.dropped_dates},
                 {"centering", f.centering},
                 {"alpha", f.alpha},
                 {"t0", cfg.t0},
                 {"log_every", cfg.log_every},
                 {"portfolios", labels},
                 {"dirichlet_concentration", f.concentration},
                 {"engine", engine_json(cfg.engine)}};

  const std::string stem = c.name.empty()
                               ? (f.prices ? "finance_" + fs::path(*f.prices).stem().string()
                                           : "finance_synthetic_seed" + std::to_string(*c.seed))
                               : c.name;

  std::vector<finance::GridCell> cells;
  if (f.grid_k || f.grid_refresh) {
    if (cfg.policy.kind != RefreshKind::none && cfg.policy.kind != RefreshKind::periodic) {
      throw std::invalid_argument("grid runs use periodic cadences; drop --policy");
    }
    const std::vector<Index> ks = f.grid_k ? parse_list<Index>(*f.grid_k, "--grid-k")
                                           : std::vector<Index>{cfg.k};
    std::vector<std::optional<Index>> cadences;
    if (f.grid_refresh) {
      std::stringstream ss(*f.grid_refresh);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (tok == "none") cadences.emplace_back();
        else cadences.emplace_back(parse_list<Index>(tok, "--grid-refresh")[0]);
      }
    } else {
      cadences.push_back(cfg.policy.kind == RefreshKind::periodic ? std::optional(cfg.policy.period)
                                                                  : std::nullopt);
    }
    for (Index k : ks)
      if (k < 1) throw std::invalid_argument("--grid-k entries must be >= 1");
    for (const auto& cad : cadences)
      if (cad && *cad < 1) throw std::invalid_argument("--grid-refresh entries must be >= 1");
    cells = finance::run_finance_grid(panel, cfg, ks, cadences, ports);
  } else {
    cells.push_back({cfg.k, std::nullopt, finance::run_finance_stream(panel, cfg, ports)});
  }

  const bool grid = f.grid_k || f.grid_refresh;
  std::vector<std::pair<std::string, json>> per_cell;
  for (const auto& cell : cells) {
    json cell_cfg = config;
    cell_cfg["k"] = cell.k;
    PolicyConfig pol = cfg.policy;
    if (grid) {
      pol.kind = cell.refresh_every ? RefreshKind::periodic : RefreshKind::none;
      if (cell.refresh_every) pol.period = *cell.refresh_every;
    }
    cell_cfg["policy"] = policy_json(pol);
    const std::string file =
        grid ? stem + "_k" + std::to_string(cell.k) + "_" + cadence_tag(cell.refresh_every) + ".csv"
             : stem + ".csv";
    per_cell.emplace_back(file, cell_cfg);
  }

  // One manifest per cell; they share the command line that produced the grid.
  fs::create_directories(c.out);
  std::vector<fs::path> written;
  try {
    for (std::size_t q = 0; q < cells.size(); ++q) {
      io::RunManifest m = manifest;
      m.config = per_cell[q].second;
      OutputSet set(c.out, m);
      set.add(per_cell[q].first,
              io::snapshots_csv(cells[q].snapshots, labels, OutputSet::manifest_name(per_cell[q].first)));
      std::ostringstream quiet;
      for (auto& p : set.commit(quiet)) written.push_back(p);
    }
  } catch (...) {
    for (const auto& p : written) fs::remove(p);
    throw;
  }
  for (const auto& p : written) log << "wrote " << p.string() << "\n";
  if (table.dropped_dates > 0) log << "dropped " << table.dropped_dates << " dates with missing prices\n";
  return 0;
}

inline int cmd_verify(bool fast, const std::string& only, const std::string& fault, std::ostream& log) {
  verify::VerifyOptions opts;
  opts.fast = fast;
  if (!only.empty()) opts.only = parse_list<int>(only, "--only");
  auto print = [&](const verify::CheckResult& r) { log << verify::format_result(r) << std::endl; };
  std::vector<verify::CheckResult> results;
  if (fault.empty()) {
    results = verify::run_acceptance(opts, print);
  } else if (fault == "sign-flip") {
    results = verify::run_acceptance<verify::SignFlippedCoreSvd>(opts, print);
  } else {
    throw std::invalid_argument("unknown fault '" + fault + "'");
  }
  int failed = 0;
  for (const auto& r : results) {
    if (!r.passed) {
      ++failed;
      log << "FAILED: " << r.id << " " << r.name << "\n";
    }
  }
  log << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << "\n";
  return failed == 0 ? 0 : 1;
}

int run(int argc, const char* const* argv, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

/// Re-executes the command line stored in a manifest, writing to out_dir.
inline int cmd_replay(const std::string& manifest_path, const std::string& out_dir,
                      std::ostream& out, std::ostream& err) {
  const io::RunManifest m = io::read_manifest(manifest_path);
  std::vector<std::string> args = m.command_line;
  if (args.size() < 2) throw std::runtime_error("manifest has no command line");
  bool replaced = false;
  for (std::size_t q = 0; q + 1 < args.size(); ++q) {
    if (args[q] == "--out") {
      args[q + 1] = out_dir;
      replaced = true;
    } else if (args[q].rfind("--out=", 0) == 0) {
      args[q] = "--out=" + out_dir;
      replaced = true;
    }
  }
  if (!replaced) {
    args.push_back("--out");
    args.push_back(out_dir);
  }
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incremental truncated SVD experiments"};
  app.name("isvd");
  app.require_subcommand(1);

  Common common;
  PolicyFlags policy;

  SyntheticFlags sf;
  auto* syn = app.add_subcommand("synthetic", "run one synthetic update stream");
  add_common(syn, common, true);
  add_policy(syn, policy);
  syn->add_option("--scenario", sf.scenario, "rank1 | rows | cols | mixed");
  syn->add_option("--m", sf.m, "initial rows")->check(CLI::PositiveNumber);
  syn->add_option("--n", sf.n, "initial columns")->check(CLI::PositiveNumber);
  syn->add_option("--true-rank", sf.true_rank, "rank of the initial signal");
  syn->add_option("--noise", sf.noise, "initial noise standard deviation");
  syn->add_option("--k", sf.k, "target rank")->check(CLI::PositiveNumber);
  syn->add_option("--events", sf.events, "number of events")->check(CLI::NonNegativeNumber);
  syn->add_option("--delta-sd", sf.delta_sd, "rank-1 delta standard deviation");
  syn->add_option("--factor-rank", sf.factor_rank, "latent rank of appended rows/columns");
  syn->add_option("--event-noise", sf.event_noise, "noise on appended rows/columns");
  syn->add_option("--mix", sf.mix, "mixed-stream weights row,col,rank1");
  syn->add_flag("--adaptive-rank", sf.adaptive, "enable EVR and novelty rank rules");
  syn->add_option("--tau-evr", sf.tau_evr, "EVR target");
  syn->add_option("--k-min", sf.k_min, "adaptive rank lower bound");
  syn->add_option("--k-max", sf.k_max, "adaptive rank upper bound (default --k)");
  syn->add_option("--eta", sf.eta, "novelty threshold");

  FinanceFlags ff;
  auto* fin = app.add_subcommand("finance", "stream a returns panel through the engine");
  add_common(fin, common, true);
  add_policy(fin, policy);
  auto* prices = fin->add_option("--prices", ff.prices, "wide CSV of adjusted closes");
  fin->add_flag("--synthetic-panel", ff.synthetic, "use the built-in factor market")->excludes(prices);
  fin->add_option("--assets", ff.assets, "synthetic assets")->check(CLI::PositiveNumber);
  fin->add_option("--days", ff.days, "synthetic price dates")->check(CLI::PositiveNumber);
  fin->add_option("--factors", ff.factors, "synthetic factors")->check(CLI::NonNegativeNumber);
  fin->add_option("--regime-shift-day", ff.shift_day, "return row where volatility jumps");
  fin->add_option("--regime-multiplier", ff.shift_multiplier, "volatility multiplier after the shift");
  fin->add_option("--t0", ff.t0, "initial window length");
  fin->add_option("--k", ff.k, "target rank")->check(CLI::PositiveNumber);
  fin->add_option("--portfolios", ff.portfolios, "equal and/or dirichlet:N, comma separated");
  fin->add_option("--dirichlet-concentration", ff.concentration, "Dirichlet concentration")
      ->check(CLI::PositiveNumber);
  fin->add_option("--centering", ff.centering, "expanding | ew");
  fin->add_option("--alpha", ff.alpha, "EW centering weight");
  fin->add_option("--grid-k", ff.grid_k, "comma-separated ranks for a grid run");
  fin->add_option("--grid-refresh", ff.grid_refresh, "comma-separated cadences (or none)");

  bool fast = false;
  std::string only, fault;
  auto* ver = app.add_subcommand("verify", "run the acceptance suite");
  ver->add_flag("--fast", fast, "skip the long experiment replications");
  ver->add_option("--only", only, "comma-separated check ids");
  ver->add_option("--inject-fault", fault, "test fixture: sign-flip")->group("");

  std::string manifest_path, replay_out;
  auto* rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  rep->add_option("manifest", manifest_path, "manifest JSON")->required();
  rep->add_option("--out", replay_out, "output directory for the re-run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  io::RunManifest manifest;
  manifest.started = std::chrono::system_clock::now();
  manifest.command_line.assign(argv, argv + argc);
  if (common.seed) manifest.seed = *common.seed;

  try {
    if (*syn) {
      manifest.subcommand = "synthetic";
      return cmd_synthetic(sf, policy, common, manifest, out);
    }
    if (*fin) {
      manifest.subcommand = "finance";
      return cmd_finance(ff, policy, common, manifest, out);
    }
    if (*ver) return cmd_verify(fast, only, fault, out);
    if (*rep) return cmd_replay(manifest_path, replay_out, out, err);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace isvd::cli
