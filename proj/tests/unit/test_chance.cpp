#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dsmpc/chance.hpp"
#include "dsmpc/conic_solver.hpp"
#include "dsmpc/errors.hpp"

using namespace dsmpc;
using conic::AffineExpr;
using conic::ConicProgram;
using conic::VarId;

namespace {

constexpr double kProbit99 = 2.3263478740408408;

DisjunctiveNormData norms(std::vector<double> r) {
  DisjunctiveNormData d;
  d.rk = std::move(r);
  d.g0 = Eigen::VectorXd::Zero(1);
  for (double v : d.rk) d.gk.push_back(Eigen::VectorXd::Constant(1, v));
  return d;
}

struct Toy {
  ConicProgram program;
  VarId f = -1;
  std::vector<VarId> delta;
  RiskVariable risk;
};

// One chance row with f a free variable, delta fixed to `selected` and gamma
// fixed to `gamma` (when positive).
Toy toy(ApproxKind kind, const std::vector<double>& r, int selected, double gamma,
        TailDirection dir = TailDirection::UpperTail) {
  Toy t;
  t.f = t.program.add_variable("f", -100.0, 100.0);
  for (std::size_t k = 0; k < r.size(); ++k) {
    const VarId d = t.program.add_binary("d" + std::to_string(k));
    const double v = static_cast<int>(k) == selected ? 1.0 : 0.0;
    t.program.set_bounds(d, v, v);
    t.delta.push_back(d);
  }
  t.program.add_one_hot_group(t.delta);
  t.risk = make_risk_variable(t.program, kind, 0.5, "gamma");
  if (gamma > 0.0) t.program.set_bounds(t.risk.gamma, gamma, gamma);
  ChanceConstraintSpec spec;
  spec.direction = dir;
  encode_variable_risk(t.program, spec, norms(r), AffineExpr::var(t.f), t.delta, t.risk);
  return t;
}

// Largest admissible -f for an UpperTail row (smallest f for LowerTail).
double threshold(ApproxKind kind, const std::vector<double>& r, int selected, double gamma,
                 TailDirection dir = TailDirection::UpperTail) {
  Toy t = toy(kind, r, selected, gamma, dir);
  t.program.set_objective(AffineExpr::var(t.f, dir == TailDirection::UpperTail ? -1.0 : 1.0));
  const conic::Solution s = conic::solve_relaxation(t.program);
  EXPECT_TRUE(s.optimal()) << s.diagnostic;
  return dir == TailDirection::UpperTail ? -s.primal(t.f) : s.primal(t.f);
}

bool feasible_at(ApproxKind kind, const std::vector<double>& r, double gamma, double f) {
  Toy t = toy(kind, r, 0, gamma);
  t.program.set_bounds(t.f, f, f);
  return conic::solve_relaxation(t.program).optimal();
}

double expected_threshold(ApproxKind kind, double gamma) {
  const double psi = psi_eval(certified_params(kind), gamma);
  switch (kind) {
    case ApproxKind::Inv: return 1.0 / psi;
    case ApproxKind::Root: return psi * psi;
    case ApproxKind::Log: return std::exp(psi);
  }
  return 0.0;
}

}  // namespace

TEST(DeterministicExact, Margins) {
  const ExactCheck a = deterministic_exact(TailDirection::UpperTail, -3.0, 1.0, 0.01);
  EXPECT_TRUE(a.satisfied);
  EXPECT_NEAR(a.margin, 0.673652, 1e-6);
  const ExactCheck b = deterministic_exact(TailDirection::UpperTail, -2.0, 1.0, 0.01);
  EXPECT_FALSE(b.satisfied);
  EXPECT_NEAR(b.margin, -0.326348, 1e-6);
  const ExactCheck c = deterministic_exact(TailDirection::UpperTail, -1.0, 0.0, 0.2);
  EXPECT_TRUE(c.satisfied);
  EXPECT_DOUBLE_EQ(c.margin, 1.0);
  const ExactCheck d = deterministic_exact(TailDirection::LowerTail, 3.0, 1.0, 0.01);
  EXPECT_NEAR(d.margin, 3.0 - kProbit99, 1e-9);
}

TEST(ComputeRk, ScalarChainAndDegenerateRows) {
  SystemModel m;
  m.A = m.B = m.G = Eigen::MatrixXd::Ones(1, 1);
  const StackedSystem s = build_stacked(m, 2);
  const GainLibrary lib =
      build_gain_library(s, {Eigen::MatrixXd::Constant(1, 1, -0.5), Eigen::MatrixXd::Zero(1, 1)},
                         Eigen::MatrixXd::Ones(1, 1));
  ChanceConstraintSpec spec;
  spec.Hrow = Eigen::RowVector3d(0, 0, 1);
  const DisjunctiveNormData d = compute_rk(spec, s, lib);
  EXPECT_TRUE(d.g0.isApprox(Eigen::Vector2d(1, 1)));
  EXPECT_TRUE(d.gk[0].isApprox(Eigen::Vector2d(-0.5, 0)));
  EXPECT_NEAR(d.rk[0], std::sqrt(1.25), 1e-12);
  EXPECT_NEAR(d.rk[0], 1.118034, 1e-6);
  EXPECT_NEAR(d.rk[1], d.g0.norm(), 1e-12);

  spec.Hrow = Eigen::RowVector3d(1, 0, 0);
  EXPECT_TRUE(compute_rk(spec, s, lib).all_zero());

  spec.Hrow = Eigen::RowVector2d(1, 0);
  EXPECT_THROW(compute_rk(spec, s, lib), DimensionError);
}

class Formulation : public ::testing::TestWithParam<ApproxKind> {};

TEST_P(Formulation, ThresholdIsConservativeAndMatchesPsi) {
  const double thr = threshold(GetParam(), {1.0}, 0, 0.01);
  EXPECT_NEAR(thr, expected_threshold(GetParam(), 0.01), 1e-6);
  EXPECT_GE(thr, kProbit99 - 1e-9);
}

TEST_P(Formulation, NormHomogeneity) {
  const double one = threshold(GetParam(), {1.0, 4.0}, 0, 0.01);
  const double four = threshold(GetParam(), {1.0, 4.0}, 1, 0.01);
  EXPECT_NEAR(four, 4.0 * one, 1e-5);
}

TEST_P(Formulation, OneHotDecomposition) {
  // With one-hot delta the encoding of the whole library behaves like the
  // encoding of the selected norm alone.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  const std::vector<double> r{u(rng), u(rng), u(rng)};
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(threshold(GetParam(), r, k, 0.02), threshold(GetParam(), {r[k]}, 0, 0.02), 1e-5);
  }
}

TEST_P(Formulation, LowerTailMirrorsUpperTail) {
  const double up = threshold(GetParam(), {1.5}, 0, 0.03, TailDirection::UpperTail);
  const double low = threshold(GetParam(), {1.5}, 0, 0.03, TailDirection::LowerTail);
  EXPECT_NEAR(up, low, 1e-6);
}

TEST_P(Formulation, ZeroNormReducesToDeterministicRow) {
  EXPECT_NEAR(threshold(GetParam(), {0.0}, 0, 0.01), 0.0, 1e-7);
}

TEST_P(Formulation, ConservativeOnGrid) {
  // Every feasible (f, gamma) of the encoding satisfies the exact constraint.
  const double cap = certified_params(GetParam()).intervalMax;
  for (double g : log_grid(1e-4, cap, 25)) {
    const double thr = threshold(GetParam(), {0.7}, 0, g);
    EXPECT_GE(deterministic_exact(TailDirection::UpperTail, -thr, 0.7, g).margin, -1e-7) << g;
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, Formulation,
                         ::testing::Values(ApproxKind::Inv, ApproxKind::Root, ApproxKind::Log),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(InvFormulation, FeasibilityAroundThreshold) {
  EXPECT_NEAR(expected_threshold(ApproxKind::Inv, 0.01), 2.3322, 1e-4);
  EXPECT_TRUE(feasible_at(ApproxKind::Inv, {1.0}, 0.01, -2.34));
  EXPECT_FALSE(feasible_at(ApproxKind::Inv, {1.0}, 0.01, -2.33));
}

TEST(RootFormulation, FeasibilityAroundThreshold) {
  EXPECT_NEAR(expected_threshold(ApproxKind::Root, 0.01), 2.33002, 1e-4);
  EXPECT_TRUE(feasible_at(ApproxKind::Root, {1.0}, 0.01, -2.34));
  EXPECT_FALSE(feasible_at(ApproxKind::Root, {1.0}, 0.01, -2.30));
  EXPECT_TRUE(feasible_at(ApproxKind::Root, {1.0}, 0.239, -10.0));
}

TEST(RootFormulation, EqualNormsMakeSelectionIrrelevant) {
  EXPECT_NEAR(threshold(ApproxKind::Root, {2.0, 2.0}, 0, 0.01),
              threshold(ApproxKind::Root, {2.0, 2.0}, 1, 0.01), 1e-7);
}

TEST(RootFormulation, MixedZeroNormsRouteToInv) {
  const double mixed = threshold(ApproxKind::Root, {0.0, 2.0}, 1, 0.01);
  EXPECT_NEAR(mixed, 2.0 * expected_threshold(ApproxKind::Inv, 0.01), 1e-5);
  EXPECT_NEAR(threshold(ApproxKind::Root, {0.0, 2.0}, 0, 0.01), 0.0, 1e-7);
}

TEST(LogFormulation, FeasibilityAroundThreshold) {
  EXPECT_NEAR(expected_threshold(ApproxKind::Log, 0.01), 2.32718, 1e-4);
  EXPECT_TRUE(feasible_at(ApproxKind::Log, {1.0}, 0.01, -2.33));
  EXPECT_FALSE(feasible_at(ApproxKind::Log, {1.0}, 0.01, -2.32));
  EXPECT_TRUE(feasible_at(ApproxKind::Log, {1.0}, 1e-4, -10.0));
  EXPECT_GE(expected_threshold(ApproxKind::Log, 1e-4), probit_complement(1e-4));
}

TEST(LogFormulation, ScaleByE) {
  EXPECT_NEAR(threshold(ApproxKind::Log, {std::numbers::e}, 0, 0.01),
              std::numbers::e * threshold(ApproxKind::Log, {1.0}, 0, 0.01), 1e-5);
}

TEST(LogFormulation, MixedZeroNormsThrow) {
  EXPECT_THROW(toy(ApproxKind::Log, {0.0, 1.0}, 1, 0.01), DomainError);
}

TEST(FixedRisk, CoefficientsAndExactness) {
  ConicProgram p;
  const VarId f = p.add_variable("f");
  const VarId d0 = p.add_binary("d0"), d1 = p.add_binary("d1");
  p.add_one_hot_group({d0, d1});
  ChanceConstraintSpec spec;
  spec.fixedGamma = 0.01;
  encode_fixed_risk(p, spec, norms({1.0, 2.0}), AffineExpr::var(f), {d0, d1});
  AffineExpr row = p.memberships().back().rows.front();
  row.compress();
  ASSERT_EQ(row.terms().size(), 3u);
  EXPECT_NEAR(-row.terms()[1].coef, 2.326348, 1e-6);
  EXPECT_NEAR(-row.terms()[2].coef, 4.652696, 1e-6);

  // The row value at a one-hot point equals the exact margin.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-8.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double fv = u(rng);
    const int k = i % 2;
    const std::vector<double> x{fv, k == 0 ? 1.0 : 0.0, k == 1 ? 1.0 : 0.0};
    const double margin = deterministic_exact(TailDirection::UpperTail, fv, k + 1.0, 0.01).margin;
    EXPECT_NEAR(row.evaluate(x), margin, 1e-10);
  }
}

TEST(FixedRisk, HalfRiskAndLowerTail) {
  ConicProgram p;
  const VarId f = p.add_variable("f");
  const VarId d = p.add_binary("d");
  ChanceConstraintSpec spec;
  spec.fixedGamma = 0.5;
  encode_fixed_risk(p, spec, norms({3.0}), AffineExpr::var(f), {d});
  const std::vector<double> at{-0.5, 1.0};
  EXPECT_NEAR(p.memberships().back().rows.front().evaluate(at), 0.5, 1e-12);

  spec.fixedGamma = 0.01;
  spec.direction = TailDirection::LowerTail;
  encode_fixed_risk(p, spec, norms({1.0}), AffineExpr::var(f), {d});
  const std::vector<double> three{3.0, 1.0};
  EXPECT_NEAR(p.memberships().back().rows.front().evaluate(three), 3.0 - kProbit99, 1e-9);

  spec.fixedGamma.reset();
  EXPECT_THROW(encode_fixed_risk(p, spec, norms({1.0}), AffineExpr::var(f), {d}), DomainError);
}

TEST(TailDuality, NegatedRowGivesSameEffectiveExpression) {
  SystemModel m;
  m.A = Eigen::Matrix2d::Identity();
  m.B = m.G = Eigen::Matrix2d::Identity();
  const StackedSystem s = build_stacked(m, 2);
  ChanceConstraintSpec up;
  up.Hrow = Eigen::RowVectorXd::LinSpaced(6, -1.0, 1.5);
  up.hConst = 0.7;
  ChanceConstraintSpec low = up;
  low.Hrow = -up.Hrow;
  low.hConst = -up.hConst;
  low.direction = TailDirection::LowerTail;
  const std::vector<VarId> V{0, 1, 2, 3};
  const Eigen::Vector2d x0(0.3, -0.2);
  AffineExpr a = effective_expression(up, nominal_expression(up, s, x0, V));
  AffineExpr b = effective_expression(low, nominal_expression(low, s, x0, V));
  a.compress();
  b.compress();
  ASSERT_EQ(a.terms().size(), b.terms().size());
  EXPECT_NEAR(a.constant(), b.constant(), 1e-14);
  for (std::size_t i = 0; i < a.terms().size(); ++i) {
    EXPECT_EQ(a.terms()[i].var, b.terms()[i].var);
    EXPECT_NEAR(a.terms()[i].coef, b.terms()[i].coef, 1e-14);
  }
}

TEST(TailDuality, MonteCarloViolationOfTightRow) {
  // f + ||g|| probit(0.95) = 0: P(f + g'W > 0) = 0.05.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const Eigen::VectorXd g = (Eigen::VectorXd(5) << 0.3, -1.2, 0.5, 0.0, 2.0).finished();
  const double f = -g.norm() * probit_complement(0.05);
  EXPECT_NEAR(deterministic_exact(TailDirection::UpperTail, f, g.norm(), 0.05).margin, 0.0, 1e-12);
  const int draws = 1000000;
  int violated = 0;
  Eigen::VectorXd w(5);
  for (int i = 0; i < draws; ++i) {
    for (int j = 0; j < 5; ++j) w(j) = n01(rng);
    if (f + g.dot(w) > 0.0) ++violated;
  }
  EXPECT_NEAR(static_cast<double>(violated) / draws, 0.05, 1e-3);
}

TEST(BigM, SwitchSemantics) {
  ChanceConstraintSpec spec;
  spec.fixedGamma = 0.01;
  EXPECT_THROW(wrap_big_m(spec, 0.0, 1), DomainError);
  EXPECT_THROW(wrap_big_m(spec, -5.0, 1), DomainError);

  auto solve_max_f = [&](double M, double sigma) {
    ConicProgram p;
    const VarId f = p.add_variable("f", -1e7, 1e7);
    const VarId s = p.add_variable("sigma", sigma, sigma);
    const VarId d = p.add_binary("d");
    p.set_bounds(d, 1.0, 1.0);
    encode_fixed_risk(p, wrap_big_m(spec, M, s), norms({1.0}), AffineExpr::var(f), {d});
    p.set_objective(AffineExpr::var(f, -1.0));
    const conic::Solution sol = conic::solve_relaxation(p);
    EXPECT_TRUE(sol.optimal());
    return sol.primal(f);
  };
  EXPECT_NEAR(solve_max_f(1e6, 1.0), -kProbit99, 1e-6);
  EXPECT_NEAR(solve_max_f(100.0, 0.5), 50.0 - kProbit99, 1e-6);
  EXPECT_GT(solve_max_f(1e6, 0.0), 1e5);
}

TEST(BigM, Sizing) {
  EXPECT_DOUBLE_EQ(size_big_m(2.0, 1.0, 3.0), 6.0);
  EXPECT_DOUBLE_EQ(size_big_m(0.1, 0.0, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(size_big_m(-4.0, 0.5, 2.0), 1.2);
  EXPECT_NEAR(max_backoff_factor(certified_params(ApproxKind::Inv)),
              1.0 / psi_eval(certified_params(ApproxKind::Inv), kRiskFloor), 1e-9);
}

TEST(RiskBudget, BudgetBindsBeforeCaps) {
  ConicProgram p;
  RiskBudget budget;
  budget.xi = 0.15;
  AffineExpr total;
  for (int i = 0; i < 20; ++i) {
    const VarId g = p.add_variable("g" + std::to_string(i), kRiskFloor, 0.078);
    budget.riskVars.push_back(g);
    total.add(g, 1.0);
  }
  risk_budget_constraint(p, budget);
  p.set_objective(-total);
  const conic::Solution s = conic::solve_relaxation(p);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(-s.objectiveValue, 0.15, 1e-7);
  for (VarId g : budget.riskVars) EXPECT_LE(s.primal(g), 0.078 + 1e-9);
}

TEST(RiskBudget, SingleVariableAndFloors) {
  ConicProgram p;
  RiskVariable r = make_risk_variable(p, ApproxKind::Inv, 0.5, "g");
  RiskBudget budget;
  budget.riskVars = {r.gamma};
  risk_budget_constraint(p, budget);
  EXPECT_DOUBLE_EQ(p.variable(r.gamma).upper, 0.078);
  EXPECT_DOUBLE_EQ(p.variable(r.gamma).lower, kRiskFloor);

  ConicProgram q;
  RiskBudget tight;
  tight.xi = 1e-6;
  tight.riskVars = {q.add_variable("a"), q.add_variable("b")};
  EXPECT_THROW(risk_budget_constraint(q, tight), DomainError);
}
