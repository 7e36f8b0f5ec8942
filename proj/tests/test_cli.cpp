#include "ecodrive/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace ecodrive::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Drops the trailing column (wall-clock solve time).
std::string drop_last_field(const std::string& line) { return line.substr(0, line.rfind(',')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("ecodrive_cli_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    // Short corridor keeps the closed-loop cases quick.
    short_cfg = (dir / "short.ini").string();
    std::ofstream(short_cfg) << "[corridor]\nduration = 40\nn_intersections = 1\nfirst_signal_min = 150\n"
                                "first_signal_max = 200\n";
  }
  void TearDown() override { fs::remove_all(dir); }

  int call(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run_command(args, out, err);
  }

  fs::path dir;
  std::string short_cfg;
  std::ostringstream out, err;
};

TEST_F(Cli, GenScenarioTwiceGivesIdenticalFiles) {
  ASSERT_EQ(call({"gen-scenario", "--seed", "7", "--out", (dir / "a").string()}), 0) << err.str();
  ASSERT_EQ(call({"gen-scenario", "--seed", "7", "--out", (dir / "b").string()}), 0) << err.str();
  for (const char* f : {"scenario.csv", "signals.csv", "grade.csv"}) {
    const std::string a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
  }
  ASSERT_EQ(call({"gen-scenario", "--seed", "8", "--out", (dir / "c").string()}), 0);
  EXPECT_NE(slurp(dir / "a" / "scenario.csv"), slurp(dir / "c" / "scenario.csv"));
  EXPECT_FALSE(fs::exists(dir / "a" / ".staging"));
}

TEST_F(Cli, FitMapsReportsGate) {
  ASSERT_EQ(call({"fit-maps", "--out", dir.string()}), 0) << err.str();
  const auto rows = lines(slurp(dir / "fit_report.csv"));
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].back(), '1') << rows[i];
  EXPECT_TRUE(fs::exists(dir / "map_front.csv"));
  EXPECT_TRUE(fs::exists(dir / "coeffs_rear.csv"));
}

TEST_F(Cli, BaselineThenOptimalGivesPairedRsoc) {
  const std::string sc = (dir / "sc").string();
  ASSERT_EQ(call({"gen-scenario", "--config", short_cfg, "--seed", "3", "--out", sc}), 0) << err.str();
  const std::string rb = (dir / "base").string(), ro = (dir / "opt").string();
  ASSERT_EQ(call({"run", "--scenario", sc, "--mode", "baseline", "--out", rb}), 0) << err.str();
  ASSERT_EQ(call({"run", "--scenario", sc, "--mode", "optimal", "--out", ro}), 0) << err.str();
  const std::string rep = (dir / "rep").string();
  ASSERT_EQ(call({"report", rb, ro, "--out", rep}), 0) << err.str();

  const auto base = detail::read_record(fs::path(rb) / "summary.ini", "summary");
  const auto opt = detail::read_record(fs::path(ro) / "summary.ini", "summary");
  EXPECT_EQ(base.at("steps"), opt.at("steps"));
  const double expect = compute_r_soc(std::stod(opt.at("final_soc")), std::stod(base.at("final_soc")),
                                      std::stod(opt.at("soc0")));

  const auto rows = lines(slurp(fs::path(rep) / "table.csv"));
  ASSERT_EQ(rows.size(), 2u);  // header + the optimal run
  // table.csv carries string columns, so split the row by hand.
  std::vector<std::string> cells;
  std::istringstream in(rows[1]);
  for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
  ASSERT_GE(cells.size(), 7u);
  EXPECT_EQ(cells[5], "pair");
  EXPECT_EQ(cells[6], "base");
  EXPECT_NEAR(std::stod(cells[4]), expect, 1e-6 * std::max(1.0, std::abs(expect)));
  EXPECT_EQ(lines(slurp(fs::path(rep) / "series_soc.csv")).front(), "run,t,soc,I_bat");
}

TEST_F(Cli, SnapshotReproducesRun) {
  const std::string sc = (dir / "sc").string();
  ASSERT_EQ(call({"gen-scenario", "--config", short_cfg, "--seed", "4", "--out", sc}), 0);
  const std::string r1 = (dir / "r1").string(), r2 = (dir / "r2").string();
  ASSERT_EQ(call({"run", "--scenario", sc, "--sigma", "0.5", "--seed", "9", "--out", r1}), 0) << err.str();
  ASSERT_EQ(call({"run", "--config", (fs::path(r1) / "config.ini").string(), "--out", r2}), 0) << err.str();
  EXPECT_EQ(slurp(fs::path(r1) / "trajectory.csv"), slurp(fs::path(r2) / "trajectory.csv"));
  EXPECT_EQ(slurp(fs::path(r1) / "soc.csv"), slurp(fs::path(r2) / "soc.csv"));
}

TEST_F(Cli, SweepRowCountAndDeterminism) {
  const auto sweep = [&](const fs::path& out) {
    return call({"sweep-noise", "--config", short_cfg, "--sigma", "0,0.5", "--shift", "0,3", "--seeds", "2",
                 "--seed", "5", "--out", out.string()});
  };
  ASSERT_EQ(sweep(dir / "s1"), 0) << err.str();
  ASSERT_EQ(sweep(dir / "s2"), 0) << err.str();
  const auto a = lines(slurp(dir / "s1" / "sweep.csv"));
  const auto b = lines(slurp(dir / "s2" / "sweep.csv"));
  ASSERT_EQ(a.size(), 1u + 4u * 2u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_EQ(drop_last_field(a[i]), drop_last_field(b[i]));
  EXPECT_EQ(lines(slurp(dir / "s1" / "table.csv")).size(), 5u);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "s1" / "runs"), fs::directory_iterator{}), 8);
}

TEST_F(Cli, ErrorsAreOneLineWithNonzeroExit) {
  EXPECT_EQ(call({}), kUsage);
  EXPECT_EQ(call({"run", "--scenario", (dir / "missing").string(), "--out", dir.string()}), kConfig);
  std::ofstream(dir / "bad.ini") << "[vehicle]\nwheels = 3\n";
  EXPECT_EQ(call({"run", "--config", (dir / "bad.ini").string()}), kConfig);
  EXPECT_EQ(call({"run", "--mode", "turbo", "--scenario", dir.string()}), kConfig);
  const auto msg = lines(err.str());
  ASSERT_EQ(msg.size(), 1u);
  EXPECT_EQ(msg[0].rfind("error kind=config code=3 message=\"", 0), 0u) << msg[0];

  std::ofstream(dir / "scenario.csv") << "t,d_p,v_p,a_p\n0,0,1,0\n0.1,5,1,0\n";
  EXPECT_EQ(call({"run", "--scenario", dir.string(), "--out", (dir / "o").string()}), kScenario);
  EXPECT_EQ(lines(err.str()).size(), 1u);
  EXPECT_EQ(err.str().rfind("error kind=scenario", 0), 0u) << err.str();
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(call({"--help"}), 0); }

}  // namespace
}  // namespace ecodrive::cli
