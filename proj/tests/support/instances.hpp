#pragma once

// Randomized instance generators shared by the unit tests and the acceptance
// binary.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dsmpc/conic_ir.hpp"
#include "dsmpc/micp.hpp"
#include "dsmpc/prediction.hpp"
#include "dsmpc/smpc.hpp"

namespace dsmpc::testing {

/// Small mixed-integer conic program: one one-hot group, a few free binaries
/// and three continuous variables pulled toward a binary-dependent anchor
/// through a second-order cone.
inline conic::ConicProgram random_micp(std::mt19937_64& rng, int groupMin = 2, int groupMax = 4,
                                       int freeMin = 1, int freeMax = 3) {
  using conic::AffineExpr;
  std::uniform_int_distribution<int> groupSize(groupMin, groupMax), freeCount(freeMin, freeMax);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  conic::ConicProgram p;
  const int nx = 3;
  std::vector<conic::VarId> x;
  for (int i = 0; i < nx; ++i) x.push_back(p.add_variable("x" + std::to_string(i), -5.0, 5.0));
  const conic::VarId t = p.add_variable("t", 0.0, 50.0);

  std::vector<conic::VarId> group, loose;
  const int g = groupSize(rng), f = freeCount(rng);
  for (int k = 0; k < g; ++k) group.push_back(p.add_binary("d" + std::to_string(k)));
  for (int k = 0; k < f; ++k) loose.push_back(p.add_binary("b" + std::to_string(k)));
  p.add_one_hot_group(group);

  std::vector<conic::VarId> bins = group;
  bins.insert(bins.end(), loose.begin(), loose.end());
  std::vector<AffineExpr> soc{AffineExpr::var(t)};
  for (int i = 0; i < nx; ++i) {
    AffineExpr row = AffineExpr::var(x[i]);
    row.add_constant(-n01(rng));
    for (conic::VarId b : bins) row.add(b, -1.5 * n01(rng));
    soc.push_back(row);
  }
  p.add_second_order(soc);

  // A coupling row that can make some assignments infeasible.
  AffineExpr cut(1.0 + u01(rng));
  for (int i = 0; i < nx; ++i) cut.add(x[i], 0.5 * n01(rng));
  for (conic::VarId b : bins) cut.add(b, n01(rng));
  p.add_nonnegative(cut);

  AffineExpr obj = AffineExpr::var(t);
  for (int i = 0; i < nx; ++i) obj.add(x[i], 0.3 * n01(rng));
  for (conic::VarId b : bins) obj.add(b, 0.5 * n01(rng));
  p.set_objective(obj);
  return p;
}

/// Objective of every assignment, in enumerate_assignments order (+inf when
/// infeasible), together with the exhaustive result.
struct ExhaustiveTable {
  micp::ExhaustiveResult result;
  std::vector<double> objectives;

  /// Gap between the best and second-best feasible assignment.
  double uniqueness_margin() const {
    double best = conic::kInf, second = conic::kInf;
    for (double v : objectives) {
      if (v < best) {
        second = best;
        best = v;
      } else if (v < second) {
        second = v;
      }
    }
    return second - best;
  }
};

inline ExhaustiveTable exhaustive_table(const conic::ConicProgram& program) {
  ExhaustiveTable table;
  table.result = micp::exhaustive_search(
      [&](const micp::Assignment& a) {
        conic::Solution s = conic::solve_relaxation(micp::apply_fixings(program, a));
        table.objectives.push_back(s.optimal() ? s.objectiveValue : conic::kInf);
        return s;
      },
      micp::enumerate_assignments(program));
  return table;
}

/// True when the solution's binaries reproduce the assignment.
inline bool matches_assignment(const Eigen::VectorXd& primal, const micp::Assignment& a,
                               double tol = 1e-6) {
  for (const auto& [v, value] : a) {
    if (std::abs(primal(v) - value) > tol) return false;
  }
  return true;
}

/// Double integrator on a line with one wall and a target, small enough that
/// every formulation solves in milliseconds. The gain grid is randomized by
/// the seed.
inline Scenario toy_scenario(std::uint64_t seed, ApproxKind kind) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Scenario sc;
  sc.name = "toy-" + std::to_string(seed);
  sc.model.A.resize(2, 2);
  sc.model.A << 1, 0, 0.1, 1;
  sc.model.B.resize(2, 1);
  sc.model.B << 0.1, 0.005;
  sc.model.G = sc.model.B * (0.75 + 0.25 * u(rng));
  sc.horizon = 4;
  // Moving toward the lower wall; braking costs input energy, so the
  // optimizer trades distance to the wall against risk.
  sc.x0 = Eigen::Vector2d(-0.5 + 0.1 * u(rng), 0.0);
  sc.stayIn.P.resize(2, 2);
  sc.stayIn.P << 0, 1, 0, -1;
  sc.stayIn.p = Eigen::Vector2d(0.8, 0.12 + 0.04 * u(rng));
  sc.target.P = Eigen::RowVector2d(0, 1);
  sc.target.p = Eigen::VectorXd::Constant(1, 0.5);
  sc.inputSet.P.resize(2, 1);
  sc.inputSet.P << 1, -1;
  sc.inputSet.p = Eigen::Vector2d(8.0, 8.0);
  sc.xi = 0.15;
  sc.gammaInput = 0.05;
  sc.gammaTerminal = 0.05;
  sc.R = Eigen::MatrixXd::Constant(1, 1, 0.05);
  sc.riskWeights = {std::pow(10.0, -1.0 + u(rng))};
  sc.gainGrid.NL = 2;
  sc.gainGrid.rMin = 0.01;
  sc.gainGrid.rMax = 1.0;
  sc.gainGrid.stateWeights = {0.0, 1.0};
  sc.gainGrid.stateSlot = 0;
  sc.formulation = kind;
  sc.positionIndices = {1};
  sc.seed = seed;
  return sc;
}

}  // namespace dsmpc::testing
