#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "isvd/io.hpp"

using namespace isvd;
namespace fs = std::filesystem;

TEST(FormatReal, RoundTripAndNaN) {
  EXPECT_EQ(io::format_real(std::nullopt), "NaN");
  EXPECT_EQ(io::format_real(std::nan("")), "NaN");
  EXPECT_EQ(io::format_real(1.5), "1.5");
  EXPECT_EQ(io::format_real(0.0), "0");
  for (double v : {0.1, 1.0 / 3.0, 1.2345678901234567e-300, -2.5e17}) {
    EXPECT_EQ(std::stod(io::format_real(v)), v);
  }
}

TEST(MetricsCsv, HeaderAndNaN) {
  MetricsRecord r;
  r.step = 3;
  r.event = "rank1";
  r.frob_error = 0.25;
  r.rank = 2;
  r.rows = 4;
  r.cols = 5;
  r.sq_norm = 9.0;
  const std::string csv = io::metrics_csv({r}, "run.manifest.json");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# manifest=run.manifest.json;", 0), 0u);
  EXPECT_NE(line.find("update_time,opt_time"), std::string::npos);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("step,event,rows,cols,rank,frob_error,frob_opt,frob_gap,frob_ratio,evr,", 0), 0u);
  std::getline(in, line);
  EXPECT_EQ(line, "3,rank1,4,5,2,0.25,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,9,0,0,NaN");
}

TEST(SnapshotsCsv, Columns) {
  finance::RiskSnapshot s;
  s.step = 5;
  s.date = "2020-01-09";
  s.cov_rel_error = 0.5;
  s.risk_rel_error = {0.25, std::nullopt};
  s.angle_factor = 0.125;
  s.refreshed = true;
  s.rank = 3;
  const std::string csv = io::snapshots_csv({s}, {"equal", "dirichlet0"}, "m.json");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line[0], '#');
  std::getline(in, line);
  EXPECT_EQ(line,
            "step,date,cov_rel_error,risk_rel_error_equal,risk_rel_error_dirichlet0,angle_factor,"
            "refreshed,rank,update_time,opt_time");
  std::getline(in, line);
  EXPECT_EQ(line, "5,2020-01-09,0.5,0.25,NaN,0.125,1,3,0,0");
}

TEST(AtomicWrite, ReplacesWithoutLeftovers) {
  const fs::path dir = fs::temp_directory_path() / "isvd_io_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  io::atomic_write(dir / "a.csv", "one\n");
  io::atomic_write(dir / "a.csv", "two\n");
  std::ifstream f(dir / "a.csv");
  std::string s;
  std::getline(f, s);
  EXPECT_EQ(s, "two");
  EXPECT_FALSE(fs::exists(dir / "a.csv.tmp"));
  EXPECT_THROW(io::atomic_write(dir / "missing" / "b.csv", "x"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Manifest, JsonRoundTrip) {
  io::RunManifest m;
  m.command_line = {"isvd", "synthetic", "--seed", "7"};
  m.subcommand = "synthetic";
  m.config = {{"k", 5}};
  m.seed = 7;
  m.started = m.finished = std::chrono::system_clock::now();
  m.outputs = {"x.csv"};
  const nlohmann::json j = m.to_json();
  EXPECT_EQ(j["versions"]["isvd"], kVersion);
  EXPECT_EQ(j["seeds"]["seed"], 7u);
  EXPECT_EQ(j["started"].get<std::string>().size(), 20u);

  const fs::path p = fs::temp_directory_path() / "isvd_manifest_test.json";
  io::atomic_write(p, j.dump());
  const io::RunManifest back = io::read_manifest(p);
  EXPECT_EQ(back.command_line, m.command_line);
  EXPECT_EQ(back.config, m.config);
  fs::remove(p);
  EXPECT_THROW(io::read_manifest(p), std::runtime_error);
}

TEST(UtcTimestamp, Format) {
  using namespace std::chrono;
  const sys_days d = year{2024} / March / 5;
  EXPECT_EQ(io::utc_timestamp(d + hours{13} + minutes{4} + seconds{9}), "2024-03-05T13:04:09Z");
}
