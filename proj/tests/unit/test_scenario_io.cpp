#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsmpc/errors.hpp"
#include "dsmpc/scenario_io.hpp"

using namespace dsmpc;
using nlohmann::json;

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(DSMPC_SCENARIO_DIR) + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json case1() { return json::parse(read_file(scenario_path("case1.json"))); }

// Message of the exception thrown by parse_scenario, or "" if none.
template <class E>
std::string error_of(const json& doc) {
  try {
    io::parse_scenario(doc.dump());
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadScenario, CaseOneParameters) {
  const Scenario sc = io::load_scenario(scenario_path("case1.json"));
  EXPECT_EQ(sc.horizon, 10);
  EXPECT_DOUBLE_EQ(sc.xi, 0.15);
  EXPECT_EQ(sc.gainGrid.NL, 5);
  EXPECT_EQ(sc.seed, 3u);
  EXPECT_EQ(sc.model.A.rows(), 4);
  EXPECT_FALSE(sc.stayOut.has_value());
  EXPECT_TRUE(io::load_scenario(scenario_path("case2.json")).stayOut.has_value());
}

TEST(LoadScenario, ShippedFilesRoundTripByteIdentical) {
  for (const char* name : {"case1.json", "case2.json", "toy.json"}) {
    const std::string text = read_file(scenario_path(name));
    EXPECT_EQ(io::scenario_to_json(io::parse_scenario(text)), text) << name;
  }
}

TEST(LoadScenario, CanonicalFormIsFixedPoint) {
  json doc = case1();
  doc["xi"] = 0.1;
  doc["weights"]["S"] = {0.3};
  const std::string once = io::scenario_to_json(io::parse_scenario(doc.dump()));
  EXPECT_EQ(io::scenario_to_json(io::parse_scenario(once)), once);
  EXPECT_NE(once.find("\"xi\": 0.1\n"), std::string::npos);
}

TEST(LoadScenario, SaveThenLoad) {
  const Scenario sc = io::load_scenario(scenario_path("toy.json"));
  const auto path = std::filesystem::temp_directory_path() / "dsmpc_io_roundtrip.json";
  io::save_scenario(sc, path.string());
  EXPECT_EQ(read_file(path.string()), read_file(scenario_path("toy.json")));
  std::filesystem::remove(path);
}

TEST(LoadScenario, EmptyDocumentNamesRoot) {
  try {
    io::parse_scenario("");
    FAIL() << "no exception";
  } catch (const SchemaError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("root", 0), 0u) << e.what();
  }
  EXPECT_THROW(io::parse_scenario("[]"), SchemaError);
  EXPECT_THROW(io::load_scenario(scenario_path("missing.json")), std::exception);
}

TEST(LoadScenario, MatrixShapeNamesField) {
  json doc = case1();
  doc["model"]["A"] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}};
  const std::string msg = error_of<DimensionError>(doc);
  EXPECT_NE(msg.find("model.A"), std::string::npos) << msg;
}

TEST(LoadScenario, UnknownFieldRejected) {
  json doc = case1();
  doc["gainGrid"]["extra"] = 1;
  const std::string msg = error_of<SchemaError>(doc);
  EXPECT_NE(msg.find("gainGrid.extra"), std::string::npos) << msg;
}

TEST(LoadScenario, FieldErrorsCarryPaths) {
  json doc = case1();
  doc["xi"] = 1.5;
  EXPECT_NE(error_of<SchemaError>(doc).find("xi"), std::string::npos);
  doc = case1();
  doc["x0"] = {0, 0, 0};
  EXPECT_NE(error_of<DimensionError>(doc).find("x0"), std::string::npos);
  doc = case1();
  doc["formulation"] = "cube";
  EXPECT_NE(error_of<SchemaError>(doc).find("formulation"), std::string::npos);
  doc = case1();
  doc["version"] = 2;
  EXPECT_NE(error_of<SchemaError>(doc).find("version"), std::string::npos);
  doc = case1();
  doc["stayIn"]["p"][0] = "wide";
  EXPECT_NE(error_of<SchemaError>(doc).find("stayIn.p"), std::string::npos);
}

TEST(Writers, TrajectoryGolden) {
  RunRecord run;
  StepRecord s;
  s.x = Eigen::Vector2d(0.5, -1.25);
  s.u = Eigen::VectorXd::Constant(1, 0.1);
  s.deltaIndex = 2;
  s.gammaSum = 0.01;
  s.objective = 1.5;
  run.steps.push_back(s);
  run.finalState = Eigen::Vector2d(1.0 / 3.0, 2.0);
  EXPECT_EQ(io::trajectory_csv(run), read_file(std::string(DSMPC_GOLDEN_DIR) + "/trajectory_2x1.csv"));
}

TEST(Writers, AuditGoldenHeaderAndRows) {
  const std::string csv = io::approximation_audit_csv(certified_params(ApproxKind::Root), 1e-4, 50);
  const std::string header = read_file(std::string(DSMPC_GOLDEN_DIR) + "/audit_header.csv");
  EXPECT_EQ(csv.substr(0, header.size()), header);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 51);
}

TEST(Writers, ReportsAreJson) {
  MonteCarloReport rep;
  rep.runs = 2;
  rep.steps = 1;
  rep.stayInViolations = {1};
  rep.empiricalJointViolation = 0.5;
  const json mc = json::parse(io::monte_carlo_json(rep));
  EXPECT_EQ(mc["runs"], 2);
  EXPECT_DOUBLE_EQ(mc["empiricalJointViolation"].get<double>(), 0.5);

  const Scenario sc = io::load_scenario(scenario_path("toy.json"));
  RunRecord run;
  run.finalState = sc.x0;
  const json summary = json::parse(io::run_summary_json(sc, run, SolverMode::BnB, 3));
  EXPECT_EQ(summary["seed"], 3);
  EXPECT_EQ(summary["solver"], "bnb");
  EXPECT_TRUE(json::parse(io::approx_params_json(certified_params(ApproxKind::Log))).is_object());
}
