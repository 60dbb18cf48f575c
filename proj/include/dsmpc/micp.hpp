#pragma once

/**
 * @file
 * @brief Branch-and-bound over the binary marks of a ConicProgram, and the
 * exhaustive enumeration baseline.
 */

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsmpc/conic_ir.hpp"
#include "dsmpc/conic_solver.hpp"

namespace dsmpc::micp {

enum class NodeSelection { BestFirst, DepthFirst };
enum class BranchRule { GroupAware, MostFractional };

/// Variable fixings (id, value) accumulated along a branch.
using Assignment = std::vector<std::pair<conic::VarId, double>>;

struct BnBConfig {
  double integralityTol = 1e-6;
  double relativeGapTol = 1e-6;
  NodeSelection nodeSelection = NodeSelection::BestFirst;
  BranchRule branchRule = BranchRule::GroupAware;
  int nodeCap = 100000;
  /// Round the root relaxation per group and solve once for an early incumbent.
  bool rootRoundingProbe = true;
  /// At every fractional node, round each group to a member whose memberships
  /// already hold at the relaxed point; a fully feasible rounding becomes an
  /// incumbent, and branching prefers the groups where rounding failed.
  bool feasibilityRounding = true;
  double roundingTolerance = 1e-9;
  /// Full binary assignment tried before the root; becomes the first
  /// incumbent when feasible.
  Assignment warmStart;
  conic::SolverOptions solver;
};

struct Node {
  Assignment fixings;
  double parentBound = -conic::kInf;
  int depth = 0;
  long sequence = 0;
};

struct Incumbent {
  std::vector<double> assignment;  ///< values of program.binaries(), in that order
  double objective = conic::kInf;
  Eigen::VectorXd primal;
};

struct BnBStats {
  int nodes = 0;  ///< nodes whose relaxation was solved
  int incumbentUpdates = 0;
  int relaxationSolves = 0;
  double gap = 0.0;
  double wallTime = 0.0;
  bool gapClosed = true;
  std::vector<double> incumbentHistory;
  std::vector<double> prunedBounds;  ///< relaxation bounds of nodes pruned by bound
};

struct BnBResult {
  conic::Solution solution;
  BnBStats stats;
  std::optional<Incumbent> incumbent;
};

/// Binary to branch on, or -1 when every binary is integral within tol.
/// GroupAware scans groups first and picks the member closest to 0.5 in the
/// group holding the most fractional value; free binaries act as singleton
/// groups. MostFractional picks the binary closest to 0.5 overall.
conic::VarId select_branch_variable(const conic::ConicProgram& program,
                                    const Eigen::VectorXd& primal, BranchRule rule, double tol);

/// Children {var = 1} and {var = 0}, in that order. Under GroupAware the
/// first child also fixes the other group members to 0, and the second fixes
/// the last remaining free member to 1.
std::pair<Node, Node> branch(const Node& node, const conic::ConicProgram& program,
                             conic::VarId var, BranchRule rule);

/// Copy of program with the fixings applied as bounds.
conic::ConicProgram apply_fixings(const conic::ConicProgram& program, const Assignment& fixings);

BnBResult solve_bnb(const conic::ConicProgram& program, const BnBConfig& config = {});

/// {"nodes", "incumbentUpdates", "gap", "wallTime", "relaxationSolves", "gapClosed"}
std::string stats_json(const BnBStats& stats);

/// Cartesian product of one-hot choices per group times 0/1 for every free
/// binary. Throws DomainError beyond maxCount assignments.
std::vector<Assignment> enumerate_assignments(const conic::ConicProgram& program,
                                              std::size_t maxCount = 1000000);

struct ExhaustiveResult {
  conic::Solution solution;
  Assignment best;
  long assignmentsTried = 0;
  long feasible = 0;
};

/// Best objective over fixed-assignment solves; infeasible ones are skipped.
ExhaustiveResult exhaustive_search(
    const std::function<conic::Solution(const Assignment&)>& solveFixed,
    const std::vector<Assignment>& assignments);

ExhaustiveResult exhaustive_search(const conic::ConicProgram& program,
                                   const conic::SolverOptions& options = {});

}  // namespace dsmpc::micp
