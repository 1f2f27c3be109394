// CSV metric logs, run manifests and atomic file output.

#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "isvd/finance.hpp"
#include "isvd/metrics.hpp"
#include "isvd/random.hpp"
#include "isvd/version.hpp"

namespace isvd::io {

/// Shortest round-trip decimal; NaN for absent or non-finite values.
inline std::string format_real(std::optional<double> v) {
  if (!v || std::isnan(*v)) return "NaN";
  if (std::isinf(*v)) return *v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

inline const char* kTimingNote = "timing columns update_time,opt_time are excluded from reproducibility";

inline std::string metrics_csv(const std::vector<MetricsRecord>& records,
                               const std::string& manifest_name) {
  std::ostringstream out;
  out << "# manifest=" << manifest_name << "; " << kTimingNote << "\n";
  out << "step,event,rows,cols,rank,frob_error,frob_opt,frob_gap,frob_ratio,evr,angle_ref,"
         "angle_opt,novelty,ortho_u,ortho_v,spectral_gap,sq_norm,refreshed,update_time,opt_time\n";
  for (const auto& r : records) {
    out << r.step << ',' << r.event << ',' << r.rows << ',' << r.cols << ',' << r.rank << ','
        << format_real(r.frob_error) << ',' << format_real(r.frob_opt) << ','
        << format_real(r.frob_gap) << ',' << format_real(r.frob_ratio) << ','
        << format_real(r.evr) << ',' << format_real(r.angle_ref) << ','
        << format_real(r.angle_opt) << ',' << format_real(r.novelty) << ','
        << format_real(r.ortho_u) << ',' << format_real(r.ortho_v) << ','
        << format_real(r.spectral_gap) << ',' << format_real(r.sq_norm) << ','
        << (r.refreshed ? 1 : 0) << ',' << format_real(r.update_time) << ','
        << format_real(r.opt_time) << '\n';
  }
  return out.str();
}

inline std::string snapshots_csv(const std::vector<finance::RiskSnapshot>& snaps,
                                 const std::vector<std::string>& labels,
                                 const std::string& manifest_name) {
  std::ostringstream out;
  out << "# manifest=" << manifest_name << "; " << kTimingNote << "\n";
  out << "step,date,cov_rel_error";
  for (const auto& l : labels) out << ",risk_rel_error_" << l;
  out << ",angle_factor,refreshed,rank,update_time,opt_time\n";
  for (const auto& s : snaps) {
    out << s.step << ',' << s.date << ',' << format_real(s.cov_rel_error);
    for (const auto& r : s.risk_rel_error) out << ',' << format_real(r);
    out << ',' << format_real(s.angle_factor) << ',' << (s.refreshed ? 1 : 0) << ',' << s.rank
        << ',' << format_real(s.update_time) << ',' << format_real(s.opt_time) << '\n';
  }
  return out.str();
}

/// Writes to a sibling temporary and renames over the target, so readers
/// never observe a half-written file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  const auto secs = floor<seconds>(t);
  const auto day = floor<days>(secs);
  const year_month_day ymd{day};
  const hh_mm_ss hms{secs - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

struct RunManifest {
  std::vector<std::string> command_line;
  std::string subcommand;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const {
    return {
        {"command_line", command_line},
        {"subcommand", subcommand},
        {"config", config},
        {"seeds", {{"seed", seed}, {"rng", random::kDescription}}},
        {"versions",
         {{"isvd", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)}}},
        {"started", utc_timestamp(started)},
        {"finished", utc_timestamp(finished)},
        {"outputs", outputs},
        {"non_reproducible_fields", {"update_time", "opt_time", "started", "finished"}},
    };
  }
};

inline RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    f >> j;
    RunManifest m;
    m.command_line = j.at("command_line").get<std::vector<std::string>>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seeds").at("seed").get<std::uint64_t>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace isvd::io
