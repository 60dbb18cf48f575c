#include <gtest/gtest.h>

#include <json.hpp>

#include <random>

#include "dsmpc/errors.hpp"
#include "dsmpc/micp.hpp"
#include "instances.hpp"

using namespace dsmpc;
using namespace dsmpc::micp;
using conic::AffineExpr;
using conic::ConicProgram;
using conic::VarId;

namespace {

ConicProgram one_hot_toy(double c1, double c2) {
  ConicProgram p;
  const VarId d1 = p.add_binary("d1"), d2 = p.add_binary("d2");
  p.add_one_hot_group({d1, d2});
  p.set_objective(AffineExpr::var(d1, c1) + AffineExpr::var(d2, c2));
  return p;
}

Eigen::VectorXd point(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double e : v) x(i++) = e;
  return x;
}

double fixed_value(const Assignment& a, VarId v) {
  for (const auto& [id, value] : a) {
    if (id == v) return value;
  }
  return -1.0;
}

}  // namespace

TEST(Branching, TieBreaksToFirstMember) {
  ConicProgram p;
  const VarId d1 = p.add_binary("d1"), d2 = p.add_binary("d2");
  p.add_one_hot_group({d1, d2});
  EXPECT_EQ(select_branch_variable(p, point({0.5, 0.5}), BranchRule::GroupAware, 1e-6), d1);
  const auto [on, off] = branch(Node{}, p, d1, BranchRule::GroupAware);
  EXPECT_EQ(fixed_value(on.fixings, d1), 1.0);
  EXPECT_EQ(fixed_value(on.fixings, d2), 0.0);
  EXPECT_EQ(fixed_value(off.fixings, d1), 0.0);
  EXPECT_EQ(fixed_value(off.fixings, d2), 1.0);
  EXPECT_EQ(on.depth, 1);
}

TEST(Branching, IntegralGroupLeavesFreeBinary) {
  ConicProgram p;
  const VarId d1 = p.add_binary("d1"), d2 = p.add_binary("d2"), s = p.add_binary("sigma");
  p.add_one_hot_group({d1, d2});
  EXPECT_EQ(select_branch_variable(p, point({1, 0, 0.3}), BranchRule::GroupAware, 1e-6), s);
  EXPECT_EQ(select_branch_variable(p, point({1, 0, 1}), BranchRule::GroupAware, 1e-6), -1);
}

TEST(Branching, GroupMemberClosestToHalf) {
  ConicProgram p;
  const VarId a = p.add_binary("a"), b = p.add_binary("b"), c = p.add_binary("c");
  p.add_one_hot_group({a, b, c});
  const Eigen::VectorXd x = point({0.4, 0.35, 0.25});
  EXPECT_EQ(select_branch_variable(p, x, BranchRule::GroupAware, 1e-6), a);
  EXPECT_EQ(select_branch_variable(p, x, BranchRule::MostFractional, 1e-6), a);
  const auto [on, off] = branch(Node{}, p, a, BranchRule::GroupAware);
  EXPECT_EQ(on.fixings.size(), 3u);
  EXPECT_EQ(off.fixings.size(), 1u);
  const auto [on2, off2] = branch(off, p, b, BranchRule::GroupAware);
  EXPECT_EQ(fixed_value(off2.fixings, c), 1.0);
}

TEST(Bnb, OneHotToy) {
  const ConicProgram p = one_hot_toy(1.0, 2.0);
  const BnBResult r = solve_bnb(p);
  ASSERT_TRUE(r.solution.optimal());
  EXPECT_NEAR(r.solution.objectiveValue, 1.0, 1e-7);
  EXPECT_NEAR(r.solution.primal(0), 1.0, 1e-9);
  EXPECT_NEAR(r.solution.primal(1), 0.0, 1e-9);
  EXPECT_EQ(r.stats.nodes, 1);
  const ExhaustiveResult e = exhaustive_search(p);
  EXPECT_EQ(e.assignmentsTried, 2);
  EXPECT_NEAR(e.solution.objectiveValue, 1.0, 1e-7);
}

TEST(Bnb, ReturnsExactBinaries) {
  std::mt19937_64 rng(1);
  const ConicProgram p = dsmpc::testing::random_micp(rng);
  const BnBResult r = solve_bnb(p);
  ASSERT_TRUE(r.solution.optimal());
  for (VarId b : p.binaries()) {
    EXPECT_TRUE(r.solution.primal(b) == 0.0 || r.solution.primal(b) == 1.0);
  }
}

TEST(Bnb, InfeasibleProgram) {
  ConicProgram p = one_hot_toy(1.0, 2.0);
  p.add_nonnegative(-AffineExpr::var(0) - AffineExpr::var(1) + 0.5);
  EXPECT_EQ(solve_bnb(p).solution.status, conic::SolveStatus::Infeasible);
  EXPECT_EQ(exhaustive_search(p).solution.status, conic::SolveStatus::Infeasible);
}

TEST(Bnb, AgreesWithExhaustiveOnRandomInstances) {
  std::mt19937_64 rng(2024);
  int uniqueChecked = 0;
  for (int i = 0; i < 25; ++i) {
    const ConicProgram p = dsmpc::testing::random_micp(rng);
    ASSERT_LE(p.binaries().size(), 8u);
    const dsmpc::testing::ExhaustiveTable table = dsmpc::testing::exhaustive_table(p);
    const BnBResult r = solve_bnb(p);
    ASSERT_EQ(r.solution.optimal(), table.result.solution.optimal()) << "instance " << i;
    if (!r.solution.optimal()) continue;
    EXPECT_NEAR(r.solution.objectiveValue, table.result.solution.objectiveValue, 1e-6)
        << "instance " << i;
    if (table.uniqueness_margin() > 1e-4) {
      ++uniqueChecked;
      EXPECT_TRUE(dsmpc::testing::matches_assignment(r.solution.primal, table.result.best)) << i;
    }
    // Bound validity and incumbent monotonicity.
    for (double b : r.stats.prunedBounds) EXPECT_GE(b, r.solution.objectiveValue - 1e-7);
    for (std::size_t k = 1; k < r.stats.incumbentHistory.size(); ++k) {
      EXPECT_LE(r.stats.incumbentHistory[k], r.stats.incumbentHistory[k - 1]);
    }
    EXPECT_TRUE(r.stats.gapClosed);
  }
  EXPECT_GT(uniqueChecked, 10);
}

TEST(Bnb, AlternativeRulesAgree) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 8; ++i) {
    const ConicProgram p = dsmpc::testing::random_micp(rng);
    const BnBResult ref = solve_bnb(p);
    BnBConfig cfg;
    cfg.nodeSelection = NodeSelection::DepthFirst;
    cfg.branchRule = BranchRule::MostFractional;
    cfg.rootRoundingProbe = false;
    cfg.feasibilityRounding = false;
    const BnBResult alt = solve_bnb(p, cfg);
    ASSERT_EQ(ref.solution.status, alt.solution.status);
    if (ref.solution.optimal()) {
      EXPECT_NEAR(ref.solution.objectiveValue, alt.solution.objectiveValue, 1e-6);
    }
  }
}

TEST(Bnb, Deterministic) {
  std::mt19937_64 rng(5);
  const ConicProgram p = dsmpc::testing::random_micp(rng);
  const BnBResult a = solve_bnb(p);
  const BnBResult b = solve_bnb(p);
  EXPECT_EQ(a.stats.nodes, b.stats.nodes);
  EXPECT_EQ(a.stats.relaxationSolves, b.stats.relaxationSolves);
  EXPECT_EQ(a.stats.incumbentHistory, b.stats.incumbentHistory);
  EXPECT_EQ(a.solution.objectiveValue, b.solution.objectiveValue);
}

TEST(Bnb, NodeCapLeavesGapOpen) {
  // A continuous coupling that keeps the root fractional.
  ConicProgram p;
  std::vector<VarId> g;
  for (int k = 0; k < 4; ++k) g.push_back(p.add_binary("d" + std::to_string(k)));
  p.add_one_hot_group(g);
  const VarId x = p.add_variable("x", -10, 10);
  const VarId t = p.add_variable("t", 0, 100);
  AffineExpr anchor = AffineExpr::var(x);
  for (int k = 0; k < 4; ++k) anchor.add(g[k], -static_cast<double>(k));
  p.add_second_order({AffineExpr::var(t), anchor});
  p.set_objective(AffineExpr::var(t) + AffineExpr::var(g[0], 1.0) + AffineExpr::var(g[3], 1.0));
  p.add_zero(AffineExpr::var(x) - 1.5);
  BnBConfig cfg;
  cfg.nodeCap = 1;
  cfg.rootRoundingProbe = false;
  cfg.feasibilityRounding = false;
  const BnBResult r = solve_bnb(p, cfg);
  EXPECT_FALSE(r.stats.gapClosed);
  EXPECT_EQ(r.stats.nodes, 1);
  const BnBResult full = solve_bnb(p);
  ASSERT_TRUE(full.solution.optimal());
  EXPECT_NEAR(full.solution.objectiveValue, 0.5, 1e-6);
}

TEST(Bnb, WarmStartBecomesIncumbent) {
  std::mt19937_64 rng(11);
  const ConicProgram p = dsmpc::testing::random_micp(rng);
  const BnBResult cold = solve_bnb(p);
  ASSERT_TRUE(cold.solution.optimal());
  Assignment warm;
  for (VarId b : p.binaries()) warm.emplace_back(b, cold.solution.primal(b));
  BnBConfig cfg;
  cfg.warmStart = warm;
  const BnBResult hot = solve_bnb(p, cfg);
  ASSERT_TRUE(hot.solution.optimal());
  EXPECT_NEAR(hot.solution.objectiveValue, cold.solution.objectiveValue, 1e-7);
  ASSERT_FALSE(hot.stats.incumbentHistory.empty());
  EXPECT_NEAR(hot.stats.incumbentHistory.front(), cold.solution.objectiveValue, 1e-7);
}

TEST(Enumeration, CountsAndCap) {
  ConicProgram p;
  std::vector<VarId> g;
  for (int k = 0; k < 3; ++k) g.push_back(p.add_binary("d" + std::to_string(k)));
  p.add_one_hot_group(g);
  p.add_binary("s1");
  p.add_binary("s2");
  const auto all = enumerate_assignments(p);
  EXPECT_EQ(all.size(), 12u);
  for (const auto& a : all) EXPECT_EQ(a.size(), 5u);
  EXPECT_THROW(enumerate_assignments(p, 10), DomainError);
}

TEST(Exhaustive, SingleAssignmentEqualsFixedSolve) {
  std::mt19937_64 rng(6);
  const ConicProgram p = dsmpc::testing::random_micp(rng);
  const Assignment a = enumerate_assignments(p).front();
  const ExhaustiveResult e = exhaustive_search(
      [&](const Assignment& x) { return conic::solve_relaxation(apply_fixings(p, x)); }, {a});
  const conic::Solution direct = conic::solve_relaxation(apply_fixings(p, a));
  ASSERT_EQ(e.solution.status, direct.status);
  if (direct.optimal()) {
    EXPECT_EQ(e.solution.objectiveValue, direct.objectiveValue);
  }
}

TEST(Stats, JsonKeys) {
  const BnBResult r = solve_bnb(one_hot_toy(1.0, 2.0));
  const auto j = nlohmann::json::parse(stats_json(r.stats));
  for (const char* key : {"nodes", "incumbentUpdates", "gap", "wallTime"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["nodes"].get<int>(), r.stats.nodes);
}
