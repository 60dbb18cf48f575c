#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "dsmpc/cli.hpp"

using namespace dsmpc;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scenario(const char* name) { return std::string(DSMPC_SCENARIO_DIR) + "/" + name; }

std::filesystem::path scratch_dir(const char* name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  const Result unknown = run({"plan", "--scenario", scenario("toy.json"), "--frobnicate"});
  EXPECT_EQ(unknown.code, kExitUsage);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"plan", "--scenario", scenario("toy.json"), "--formulation", "cube"}).code,
            kExitUsage);
  EXPECT_EQ(run({"plan", "--scenario", scenario("nothing.json")}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, SchemaErrorExitsOne) {
  const auto dir = scratch_dir("dsmpc_cli_schema");
  std::filesystem::create_directories(dir);
  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{}";
  const Result r = run({"crosscheck", "--scenario", bad.string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("schema error"), std::string::npos) << r.err;
}

TEST(Cli, AuditApproxRespectsDirection) {
  const Result r = run({"audit-approx", "--formulation", "root", "--points", "2000"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 2001u);
  EXPECT_EQ(lines.front(), "gamma,psi,exact,signed_violation");
  double worst = -1.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    worst = std::max(worst, std::stod(lines[i].substr(lines[i].rfind(',') + 1)));
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(Cli, AuditApproxToFile) {
  const auto dir = scratch_dir("dsmpc_cli_audit");
  const auto file = dir / "inv.csv";
  const Result r = run({"audit-approx", "--formulation", "inv", "--params", "table", "--points", "50",
                        "--out", file.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(file));
  EXPECT_NE(r.out.find("max signed violation"), std::string::npos);
}

TEST(Cli, CrosscheckToyAgrees) {
  const Result r = run({"crosscheck", "--scenario", scenario("toy.json")});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("objective delta: (\\S+)")));
  EXPECT_LE(std::stod(m[1]), 1e-6);
  EXPECT_TRUE(std::regex_search(r.out, std::regex("bnb: Optimal .* nodes [0-9]+")));
  EXPECT_TRUE(std::regex_search(r.out, std::regex("exhaustive: Optimal .* nodes [0-9]+")));
}

TEST(Cli, PlanWritesOutputs) {
  const auto dir = scratch_dir("dsmpc_cli_plan");
  const Result r = run({"plan", "--scenario", scenario("toy.json"), "--formulation", "log", "--solver",
                        "bnb", "--steps", "2", "--seed", "3", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  std::ifstream csv(dir / "trajectory.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,x0,x1,x2,x3,u0,u1,deltaIndex,gammaSum,objective");
  std::ifstream js(dir / "summary.json");
  const auto summary = nlohmann::json::parse(js);
  EXPECT_EQ(summary["seed"], 3);
  EXPECT_EQ(summary["solver"], "bnb");

  // Same seed, same trajectory.
  const auto again = scratch_dir("dsmpc_cli_plan_again");
  ASSERT_EQ(run({"plan", "--scenario", scenario("toy.json"), "--formulation", "log", "--steps", "2",
                 "--seed", "3", "--out", again.string()})
                .code,
            kExitOk);
  std::ifstream a(dir / "trajectory.csv"), b(again / "trajectory.csv");
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Cli, MonteCarloWritesReport) {
  const auto dir = scratch_dir("dsmpc_cli_mc");
  const Result r = run({"mc", "--scenario", scenario("toy.json"), "--runs", "2", "--steps", "1",
                        "--keep", "1", "--out", dir.string()});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  std::ifstream js(dir / "montecarlo.json");
  const auto rep = nlohmann::json::parse(js);
  EXPECT_EQ(rep["runs"], 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "run_0.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "run_1.csv"));
}
