#pragma once

/**
 * @file
 * @brief Scenario description, OCP assembly with feedback selection and risk
 * allocation, receding-horizon simulation and closed-loop Monte Carlo.
 *
 * Polytopes are {z : P z <= p}. The stay-out region is avoided by requiring,
 * at every predicted step, that one face (chosen by a one-hot sigma group)
 * holds in the reverse direction P_l x >= p_l.
 */

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsmpc/chance.hpp"
#include "dsmpc/conic_ir.hpp"
#include "dsmpc/micp.hpp"
#include "dsmpc/prediction.hpp"
#include "dsmpc/probit_cones.hpp"

namespace dsmpc {

struct Polytope {
  Eigen::MatrixXd P;
  Eigen::VectorXd p;

  int faces() const { return static_cast<int>(P.rows()); }
  bool contains(const Eigen::VectorXd& z, double tol = 0.0) const;
  /// Every face strictly satisfied.
  bool strictly_contains(const Eigen::VectorXd& z) const;
};

struct Scenario {
  std::string name;
  SystemModel model;
  int horizon = 10;
  Eigen::VectorXd x0;
  Polytope stayIn;
  std::optional<Polytope> stayOut;
  Polytope target;
  Polytope inputSet;
  double xi = 0.15;
  double gammaInput = 1e-2;
  double gammaTerminal = 1e-2;
  Eigen::MatrixXd R;  ///< per-step input weight
  Eigen::MatrixXd Q;  ///< per-step state weight on x_1..x_N; may be empty
  std::vector<double> riskWeights;  ///< S per variable-risk family: stay-in, then stay-out
  GainGridSpec gainGrid;
  ApproxKind formulation = ApproxKind::Log;
  std::optional<ApproxParams> approx;  ///< overrides the certified parameters
  std::vector<int> positionIndices;    ///< state entries forming the position
  std::uint64_t seed = 3;

  /// Throws SchemaError or DimensionError naming the field.
  void validate() const;
};

/// Scenario plus the data that does not depend on the current state.
struct PreparedScenario {
  Scenario scenario;
  StackedSystem stacked;
  GainLibrary library;
  ApproxParams approx;
  std::vector<double> stayOutBigM;  ///< per stay-out face
};

PreparedScenario prepare_scenario(const Scenario& scenario);

struct ExpectedCostTerms {
  Eigen::MatrixXd quadV;          ///< calR + calB' calQ calB
  Eigen::VectorXd linearV;        ///< 2 calB' calQ calA x0
  Eigen::VectorXd linearDelta;    ///< tr((calG + calB M_k)' calQ (calG + calB M_k)) + tr(M_k' calR M_k)
  Eigen::VectorXd linearGamma;    ///< 1_N kron S, families stacked
  double constant = 0.0;          ///< (calA x0)' calQ (calA x0)
};

/// calQ weights x_1..x_N with Q (x_0 gets zero weight); Q may be empty.
ExpectedCostTerms expected_cost_terms(const StackedSystem& stacked, const GainLibrary& library,
                                      const Eigen::MatrixXd& R, const Eigen::MatrixXd& Q,
                                      const std::vector<double>& S, const Eigen::VectorXd& x0);

/// V' quadV V + linearV' V + linearDelta(k) + linearGamma' Gamma + constant.
double expected_cost_value(const ExpectedCostTerms& terms, const Eigen::VectorXd& V, int k,
                           const Eigen::VectorXd& Gamma);

/// Block diagonal weight over X with zero on x_0; zero matrix when Q is empty.
Eigen::MatrixXd stacked_state_weight(const StackedSystem& stacked, const Eigen::MatrixXd& Q);

enum class ChanceFamily { StayIn, StayOut, Input, Terminal };
const char* to_string(ChanceFamily family);

struct ChanceRow {
  ChanceFamily family = ChanceFamily::StayIn;
  int step = 0;  ///< predicted state index, or input index for Input rows
  int face = 0;
  ChanceConstraintSpec spec;
  DisjunctiveNormData data;
  conic::VarId gamma = -1;  ///< -1 for fixed-risk rows
};

struct ConstraintCounts {
  int variableRisk = 0;
  int fixedRisk = 0;
  int budgetRows = 0;
  int oneHotGroups = 0;
};

struct OCPInstance {
  conic::ConicProgram program;
  std::vector<conic::VarId> V;
  std::vector<conic::VarId> delta;
  std::vector<conic::VarId> Gamma;  ///< stay-in risks per step, then stay-out risks
  std::vector<RiskVariable> stayInRisk;
  std::vector<RiskVariable> stayOutRisk;
  std::vector<std::vector<conic::VarId>> sigma;  ///< per predicted step
  conic::VarId inputEpigraph = -1;
  std::vector<ChanceRow> rows;
  ConstraintCounts counts;
  ExpectedCostTerms cost;
  Eigen::VectorXd x;  ///< state the instance was assembled at
};

OCPInstance assemble_ocp(const PreparedScenario& prepared, const Eigen::VectorXd& x);

/// Selected gain: index of the largest delta.
int selected_gain(const OCPInstance& instance, const Eigen::VectorXd& primal);

/// Smallest exact-probit margin over the variable-risk rows at a solution
/// with one-hot delta; switched-off Big-M rows are skipped.
double conservatism_margin(const PreparedScenario& prepared, const OCPInstance& instance,
                           const Eigen::VectorXd& primal);

enum class SolverMode { BnB, Exhaustive };
const char* to_string(SolverMode mode);
SolverMode parse_solver_mode(const std::string& name);

struct OcpSolveResult {
  conic::Solution solution;
  int relaxationSolves = 0;
  int nodes = 0;
  bool gapClosed = true;
};

/// Exhaustive mode enumerates delta and solves each fixed-gain problem; any
/// remaining sigma binaries are handled by branch-and-bound.
OcpSolveResult solve_ocp(const OCPInstance& instance, SolverMode mode,
                         const micp::BnBConfig& config = {},
                         const micp::Assignment& warmStart = {});

struct StepRecord {
  int step = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  int deltaIndex = -1;
  double gammaSum = 0.0;
  double objective = 0.0;
  Eigen::VectorXd Gamma;
  double seconds = 0.0;
  int relaxationSolves = 0;
};

struct RunRecord {
  std::vector<StepRecord> steps;
  Eigen::VectorXd finalState;
  bool infeasible = false;
  int infeasibleStep = -1;
  std::string message;
};

using DisturbanceGenerator = std::function<Eigen::VectorXd()>;

struct RunOptions {
  micp::BnBConfig bnb;
  bool warmStart = true;
  /// Solution of the OCP at scenario.x0; step 0 reuses it instead of solving.
  std::shared_ptr<const OcpSolveResult> firstStep;
};

RunRecord receding_horizon_run(const PreparedScenario& prepared, int steps, SolverMode mode,
                               const DisturbanceGenerator& generator,
                               const RunOptions& options = {});

/// Standard Gaussian draws of dimension n from an mt19937_64 seeded with seed.
DisturbanceGenerator gaussian_generator(int n, std::uint64_t seed, double scale = 1.0);

/// Sum of displacements of the position entries along the realized states.
double path_length(const Scenario& scenario, const RunRecord& run);

struct MonteCarloOptions {
  int runs = 100;
  int steps = 10;
  SolverMode mode = SolverMode::BnB;
  std::uint64_t seed = 3;  ///< run r uses seed + r
  double disturbanceScale = 1.0;
  int keepTrajectories = 0;
  int threads = 1;
  RunOptions run;
};

struct MonteCarloReport {
  int runs = 0;
  int steps = 0;
  std::vector<int> stayInViolations;   ///< per closed-loop step
  std::vector<int> stayOutViolations;
  std::vector<int> inputViolations;
  int runsWithStayInViolation = 0;
  int runsWithStayOutViolation = 0;
  int runsWithViolation = 0;  ///< stay-in or stay-out
  double empiricalJointViolation = 0.0;
  int infeasibleRuns = 0;
  double costMean = 0.0;
  double costStdError = 0.0;
  double pathLengthMean = 0.0;
  double pathLengthStdError = 0.0;
  std::vector<double> pathLengths;  ///< per run
  std::vector<int> infeasibleStep;  ///< per run, -1 when every step solved
  std::vector<RunRecord> trajectories;
};

MonteCarloReport monte_carlo(const PreparedScenario& prepared, const MonteCarloOptions& options);

}  // namespace dsmpc
