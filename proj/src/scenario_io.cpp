#include "dsmpc/scenario_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dsmpc/errors.hpp"

namespace dsmpc::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw SchemaError(path + ": " + what);
}

std::string child(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

void expect_keys(const json& obj, const std::string& path, const std::set<std::string>& required,
                 const std::set<std::string>& optional) {
  const std::string where = path.empty() ? "root" : path;
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!required.count(key) && !optional.count(key)) fail(child(path, key), "unknown field");
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) fail(child(path, key), "missing required field");
  }
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "non-finite number");
  return v;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

Eigen::VectorXd vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], index(path, i));
  return v;
}

Eigen::MatrixXd matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) fail(path, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) fail(index(path, 0), "expected a non-empty array of numbers");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string rp = index(path, r);
    if (!j[r].is_array()) fail(rp, "expected an array of numbers");
    if (j[r].size() != cols) {
      throw DimensionError(rp + ": row has " + std::to_string(j[r].size()) + " entries, expected " +
                           std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], index(rp, c));
    }
  }
  return m;
}

Polytope polytope(const json& j, const std::string& path) {
  expect_keys(j, path, {"P", "p"}, {});
  Polytope poly;
  poly.P = matrix(j["P"], child(path, "P"));
  poly.p = vector(j["p"], child(path, "p"));
  return poly;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Polytope& poly) { return json{{"P", to_json(poly.P)}, {"p", to_json(poly.p)}}; }

json params_to_json(const ApproxParams& a) {
  return json{{"kind", to_string(a.kind)}, {"alpha", a.alpha}, {"beta", a.beta},
              {"lambda", a.lambda},        {"phi", a.phi},     {"rho", a.rho},
              {"intervalMax", a.intervalMax}};
}

ApproxKind kind_field(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected one of inv, root, log");
  try {
    return parse_approx_kind(j.get<std::string>());
  } catch (const std::exception&) {
    fail(path, "expected one of inv, root, log");
  }
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

Scenario parse_scenario(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) fail("root", "empty document");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n');
    fail("root", "malformed JSON at line " + std::to_string(line) + ": " + e.what());
  }
  expect_keys(doc, "",
              {"version", "model", "horizon", "x0", "stayIn", "target", "inputSet", "xi",
               "gammaInput", "gammaTerminal", "weights", "gainGrid", "formulation", "seed"},
              {"name", "stayOut", "approx", "positionIndices"});
  if (integer(doc["version"], "version") != kScenarioVersion) {
    fail("version", "unsupported version (expected " + std::to_string(kScenarioVersion) + ")");
  }
  Scenario s;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) fail("name", "expected a string");
    s.name = doc["name"].get<std::string>();
  }
  const json& model = doc["model"];
  expect_keys(model, "model", {"A", "B", "G"}, {});
  s.model.A = matrix(model["A"], "model.A");
  s.model.B = matrix(model["B"], "model.B");
  s.model.G = matrix(model["G"], "model.G");
  s.horizon = integer(doc["horizon"], "horizon");
  s.x0 = vector(doc["x0"], "x0");
  s.stayIn = polytope(doc["stayIn"], "stayIn");
  if (doc.contains("stayOut") && !doc["stayOut"].is_null()) {
    s.stayOut = polytope(doc["stayOut"], "stayOut");
  }
  s.target = polytope(doc["target"], "target");
  s.inputSet = polytope(doc["inputSet"], "inputSet");
  s.xi = number(doc["xi"], "xi");
  s.gammaInput = number(doc["gammaInput"], "gammaInput");
  s.gammaTerminal = number(doc["gammaTerminal"], "gammaTerminal");

  const json& w = doc["weights"];
  expect_keys(w, "weights", {"R", "S"}, {"Q"});
  s.R = matrix(w["R"], "weights.R");
  if (w.contains("Q") && !w["Q"].is_null()) s.Q = matrix(w["Q"], "weights.Q");
  const Eigen::VectorXd S = vector(w["S"], "weights.S");
  s.riskWeights.assign(S.data(), S.data() + S.size());

  const json& g = doc["gainGrid"];
  expect_keys(g, "gainGrid", {"NL", "rMin", "rMax", "stateWeights", "stateSlot"}, {});
  s.gainGrid.NL = integer(g["NL"], "gainGrid.NL");
  s.gainGrid.rMin = number(g["rMin"], "gainGrid.rMin");
  s.gainGrid.rMax = number(g["rMax"], "gainGrid.rMax");
  const Eigen::VectorXd sw = vector(g["stateWeights"], "gainGrid.stateWeights");
  s.gainGrid.stateWeights.assign(sw.data(), sw.data() + sw.size());
  s.gainGrid.stateSlot = integer(g["stateSlot"], "gainGrid.stateSlot");

  s.formulation = kind_field(doc["formulation"], "formulation");
  if (doc.contains("approx") && !doc["approx"].is_null()) {
    const json& a = doc["approx"];
    expect_keys(a, "approx", {"kind", "alpha", "beta", "lambda", "phi", "intervalMax"}, {"rho"});
    ApproxParams p;
    p.kind = kind_field(a["kind"], "approx.kind");
    p.alpha = number(a["alpha"], "approx.alpha");
    p.beta = number(a["beta"], "approx.beta");
    p.lambda = number(a["lambda"], "approx.lambda");
    p.phi = number(a["phi"], "approx.phi");
    if (a.contains("rho")) p.rho = number(a["rho"], "approx.rho");
    p.intervalMax = number(a["intervalMax"], "approx.intervalMax");
    if (!(p.intervalMax > kRiskFloor && p.intervalMax <= curvature_cap(p.kind))) {
      fail("approx.intervalMax", "must lie in (1e-6, curvature cap of the kind]");
    }
    s.approx = p;
  }
  if (doc.contains("positionIndices")) {
    const json& pi = doc["positionIndices"];
    if (!pi.is_array()) fail("positionIndices", "expected an array of integers");
    for (std::size_t i = 0; i < pi.size(); ++i) {
      s.positionIndices.push_back(integer(pi[i], index("positionIndices", i)));
    }
  }
  if (!doc["seed"].is_number_unsigned()) fail("seed", "expected a non-negative integer");
  s.seed = doc["seed"].get<std::uint64_t>();

  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("root: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_json(const Scenario& s) {
  json doc;
  doc["version"] = kScenarioVersion;
  doc["name"] = s.name;
  doc["model"] = json{{"A", to_json(s.model.A)}, {"B", to_json(s.model.B)}, {"G", to_json(s.model.G)}};
  doc["horizon"] = s.horizon;
  doc["x0"] = to_json(s.x0);
  doc["stayIn"] = to_json(s.stayIn);
  if (s.stayOut) doc["stayOut"] = to_json(*s.stayOut);
  doc["target"] = to_json(s.target);
  doc["inputSet"] = to_json(s.inputSet);
  doc["xi"] = s.xi;
  doc["gammaInput"] = s.gammaInput;
  doc["gammaTerminal"] = s.gammaTerminal;
  json w{{"R", to_json(s.R)}, {"S", s.riskWeights}};
  if (s.Q.size() != 0) w["Q"] = to_json(s.Q);
  doc["weights"] = w;
  doc["gainGrid"] = json{{"NL", s.gainGrid.NL},
                         {"rMin", s.gainGrid.rMin},
                         {"rMax", s.gainGrid.rMax},
                         {"stateWeights", s.gainGrid.stateWeights},
                         {"stateSlot", s.gainGrid.stateSlot}};
  doc["formulation"] = to_string(s.formulation);
  if (s.approx) doc["approx"] = params_to_json(*s.approx);
  doc["positionIndices"] = s.positionIndices;
  doc["seed"] = s.seed;
  return doc.dump(2) + "\n";
}

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  write_text(path, scenario_to_json(scenario));
}

std::string trajectory_csv(const RunRecord& run) {
  const Eigen::Index nx = run.finalState.size();
  const Eigen::Index nu = run.steps.empty() ? 0 : run.steps.front().u.size();
  std::ostringstream os;
  os << "step";
  for (Eigen::Index i = 0; i < nx; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < nu; ++i) os << ",u" << i;
  os << ",deltaIndex,gammaSum,objective\n";
  for (const auto& s : run.steps) {
    os << s.step;
    for (Eigen::Index i = 0; i < nx; ++i) os << ',' << csv_number(s.x(i));
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << csv_number(s.u(i));
    os << ',' << s.deltaIndex << ',' << csv_number(s.gammaSum) << ',' << csv_number(s.objective)
       << '\n';
  }
  os << run.steps.size();
  for (Eigen::Index i = 0; i < nx; ++i) os << ',' << csv_number(run.finalState(i));
  for (Eigen::Index i = 0; i < nu; ++i) os << ',';
  os << ",,,\n";
  return os.str();
}

std::string run_summary_json(const Scenario& scenario, const RunRecord& run, SolverMode mode,
                             std::uint64_t seed) {
  json j;
  j["scenario"] = scenario.name;
  j["formulation"] = to_string(scenario.formulation);
  j["solver"] = to_string(mode);
  j["seed"] = seed;
  j["stepsSolved"] = run.steps.size();
  j["infeasible"] = run.infeasible;
  j["infeasibleStep"] = run.infeasibleStep;
  j["message"] = run.message;
  j["pathLength"] = path_length(scenario, run);
  json deltas = json::array();
  json gammas = json::array();
  json times = json::array();
  json solves = json::array();
  for (const auto& s : run.steps) {
    deltas.push_back(s.deltaIndex);
    gammas.push_back(s.gammaSum);
    times.push_back(s.seconds);
    solves.push_back(s.relaxationSolves);
  }
  j["deltaIndex"] = deltas;
  j["gammaSum"] = gammas;
  j["stepSeconds"] = times;
  j["relaxationSolves"] = solves;
  j["finalState"] = to_json(run.finalState);
  return j.dump(2) + "\n";
}

std::string monte_carlo_json(const MonteCarloReport& r) {
  json j;
  j["runs"] = r.runs;
  j["steps"] = r.steps;
  j["perStepViolationCounts"] = json{{"stayIn", r.stayInViolations},
                                     {"stayOut", r.stayOutViolations},
                                     {"input", r.inputViolations}};
  j["runsWithStayInViolation"] = r.runsWithStayInViolation;
  j["runsWithStayOutViolation"] = r.runsWithStayOutViolation;
  j["empiricalJointViolation"] = r.empiricalJointViolation;
  j["infeasibleRuns"] = r.infeasibleRuns;
  j["costMean"] = r.costMean;
  j["costStdError"] = r.costStdError;
  j["pathLengthMean"] = r.pathLengthMean;
  j["pathLengthStdError"] = r.pathLengthStdError;
  return j.dump(2) + "\n";
}

std::string approximation_audit_csv(const ApproxParams& params, double lo, int n) {
  std::ostringstream os;
  os << "gamma,psi,exact,signed_violation\n";
  for (double g : log_grid(lo, params.intervalMax, n)) {
    os << csv_number(g) << ',' << csv_number(psi_eval(params, g)) << ','
       << csv_number(exact_composition(params.kind, g)) << ','
       << csv_number(signed_violation(params, g)) << '\n';
  }
  return os.str();
}

std::string approx_params_json(const ApproxParams& params) {
  return params_to_json(params).dump(2) + "\n";
}

}  // namespace dsmpc::io
