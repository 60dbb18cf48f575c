#include "dsmpc/chance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsmpc/errors.hpp"

namespace dsmpc {

using conic::AffineExpr;
using conic::ConicProgram;
using conic::VarId;

namespace {

constexpr double kZeroNorm = 1e-12;

void check_selection(const DisjunctiveNormData& data, const std::vector<VarId>& delta) {
  if (data.rk.size() != delta.size()) {
    throw DimensionError("delta has " + std::to_string(delta.size()) + " entries, expected " +
                         std::to_string(data.rk.size()));
  }
}

AffineExpr weighted_selection(const std::vector<VarId>& delta, const std::vector<double>& w) {
  AffineExpr e;
  for (std::size_t k = 0; k < delta.size(); ++k) e.add(delta[k], w[k]);
  return e;
}

}  // namespace

bool DisjunctiveNormData::all_zero() const {
  return std::all_of(rk.begin(), rk.end(), [](double r) { return r <= kZeroNorm; });
}

bool DisjunctiveNormData::any_zero() const {
  return std::any_of(rk.begin(), rk.end(), [](double r) { return r <= kZeroNorm; });
}

double DisjunctiveNormData::max_r() const {
  double m = 0.0;
  for (double r : rk) m = std::max(m, r);
  return m;
}

ExactCheck deterministic_exact(TailDirection direction, double f, double cNorm, double gamma) {
  if (!(gamma > 0.0 && gamma <= 0.5)) throw DomainError("gamma must lie in (0, 0.5]");
  const double backoff = cNorm == 0.0 ? 0.0 : cNorm * probit_complement(gamma);
  ExactCheck out;
  out.margin = direction == TailDirection::UpperTail ? -(f + backoff) : f - backoff;
  out.satisfied = out.margin >= 0.0;
  return out;
}

DisjunctiveNormData compute_rk(const ChanceConstraintSpec& spec, const StackedSystem& stacked,
                               const GainLibrary& library) {
  const int N = stacked.N;
  DisjunctiveNormData data;
  if (spec.space == ChanceSpace::State) {
    if (spec.Hrow.size() != stacked.calA.rows()) {
      throw DimensionError("state row has length " + std::to_string(spec.Hrow.size()) +
                           ", expected " + std::to_string(stacked.calA.rows()));
    }
    data.g0 = (spec.Hrow * stacked.calG).transpose();
    const Eigen::RowVectorXd HB = spec.Hrow * stacked.calB;
    for (const auto& M : library.calM) data.gk.push_back((HB * M).transpose());
  } else {
    if (spec.Hrow.size() != N * stacked.nu) {
      throw DimensionError("input row has length " + std::to_string(spec.Hrow.size()) +
                           ", expected " + std::to_string(N * stacked.nu));
    }
    data.g0 = Eigen::VectorXd::Zero(N * stacked.nw);
    for (const auto& M : library.calM) data.gk.push_back((spec.Hrow * M).transpose());
  }
  for (const auto& g : data.gk) data.rk.push_back((data.g0 + g).norm());
  return data;
}

AffineExpr nominal_expression(const ChanceConstraintSpec& spec, const StackedSystem& stacked,
                              const Eigen::VectorXd& x0, const std::vector<VarId>& V) {
  const auto nV = static_cast<Eigen::Index>(V.size());
  if (nV != stacked.N * stacked.nu) throw DimensionError("V has the wrong length");
  AffineExpr f;
  if (spec.space == ChanceSpace::State) {
    const Eigen::RowVectorXd coef = spec.Hrow * stacked.calB;
    for (Eigen::Index j = 0; j < nV; ++j) f.add(V[static_cast<std::size_t>(j)], coef(j));
    f.add_constant(spec.Hrow.dot(stacked.calA * x0) - spec.hConst);
  } else {
    if (spec.Hrow.size() != nV) throw DimensionError("input row has the wrong length");
    for (Eigen::Index j = 0; j < nV; ++j) f.add(V[static_cast<std::size_t>(j)], spec.Hrow(j));
    f.add_constant(-spec.hConst);
  }
  return f;
}

double nominal_value(const ChanceConstraintSpec& spec, const StackedSystem& stacked,
                     const Eigen::VectorXd& x0, const Eigen::VectorXd& V) {
  if (spec.space == ChanceSpace::State) {
    return spec.Hrow.dot(stacked.calA * x0 + stacked.calB * V) - spec.hConst;
  }
  return spec.Hrow.dot(V) - spec.hConst;
}

AffineExpr effective_expression(const ChanceConstraintSpec& spec, const AffineExpr& f) {
  AffineExpr e = spec.direction == TailDirection::UpperTail ? f : -f;
  if (spec.bigM) {
    e.add_constant(-spec.bigM->M);
    e.add(spec.bigM->sigma, spec.bigM->M);
  }
  return e;
}

ChanceConstraintSpec wrap_big_m(ChanceConstraintSpec spec, double M, VarId sigma) {
  if (!(M > 0.0) || !std::isfinite(M)) throw DomainError("Big-M value must be positive");
  spec.bigM = BigMSwitch{M, sigma};
  return spec;
}

RiskVariable make_risk_variable(ConicProgram& program, const ApproxParams& params, double upper,
                                const std::string& name) {
  RiskVariable risk;
  risk.kind = params.kind;
  const double hi = std::min(params.intervalMax, upper);
  if (!(hi >= kRiskFloor)) throw DomainError("risk upper bound below the floor");
  risk.gamma = program.add_variable(name, kRiskFloor, hi);
  risk.psi = encode_psi_bound(program, params, AffineExpr::var(risk.gamma));
  if (params.kind == ApproxKind::Inv) {
    program.set_bounds(risk.psi, 0.0, conic::kInf);
  } else {
    // Psi decreases on the interval, so the epigraph never needs more than
    // its value at the floor; the cap keeps the feasible set bounded.
    program.set_bounds(risk.psi, -conic::kInf, psi_eval(params, kRiskFloor) + 1.0);
  }
  return risk;
}

RiskVariable make_risk_variable(ConicProgram& program, ApproxKind kind, double upper,
                                const std::string& name) {
  return make_risk_variable(program, certified_params(kind), upper, name);
}

void encode_inv_formulation(ConicProgram& program, const ChanceConstraintSpec& spec,
                            const DisjunctiveNormData& data, const AffineExpr& f,
                            const std::vector<VarId>& delta, RiskVariable& risk) {
  check_selection(data, delta);
  const AffineExpr e = effective_expression(spec, f);
  if (data.all_zero()) {
    program.add_nonnegative(-e);
    return;
  }
  VarId t = risk.psi;
  if (risk.kind != ApproxKind::Inv) {
    if (risk.psiInv < 0) {
      risk.psiInv =
          encode_psi_bound(program, certified_params(ApproxKind::Inv), AffineExpr::var(risk.gamma));
      program.set_bounds(risk.psiInv, 0.0, conic::kInf);
      const auto& g = program.variable(risk.gamma);
      program.set_bounds(risk.gamma, g.lower,
                         std::min(g.upper, curvature_cap(ApproxKind::Inv)));
    }
    t = risk.psiInv;
  }
  std::vector<double> w(data.rk.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::sqrt(2.0 * data.rk[k]);
  program.add_rotated_second_order({-e, AffineExpr::var(t), weighted_selection(delta, w)});
}

void encode_root_formulation(ConicProgram& program, const ChanceConstraintSpec& spec,
                             const DisjunctiveNormData& data, const AffineExpr& f,
                             const std::vector<VarId>& delta, RiskVariable& risk) {
  check_selection(data, delta);
  if (data.all_zero()) {
    program.add_nonnegative(-effective_expression(spec, f));
    return;
  }
  if (data.any_zero()) {
    encode_inv_formulation(program, spec, data, f, delta, risk);
    return;
  }
  std::vector<double> inv(data.rk.size());
  for (std::size_t k = 0; k < inv.size(); ++k) inv[k] = 1.0 / data.rk[k];
  program.add_rotated_second_order({-effective_expression(spec, f),
                                    weighted_selection(delta, inv),
                                    AffineExpr::var(risk.psi, std::sqrt(2.0))});
}

void encode_log_formulation(ConicProgram& program, const ChanceConstraintSpec& spec,
                            const DisjunctiveNormData& data, const AffineExpr& f,
                            const std::vector<VarId>& delta, RiskVariable& risk) {
  check_selection(data, delta);
  const AffineExpr e = effective_expression(spec, f);
  if (data.all_zero()) {
    program.add_nonnegative(-e);
    return;
  }
  if (data.any_zero()) throw DomainError("log formulation inapplicable; choose inv or root");
  std::vector<double> logs(data.rk.size());
  for (std::size_t k = 0; k < logs.size(); ++k) logs[k] = std::log(data.rk[k]);
  const VarId y = program.add_variable("log_slack");
  program.add_exponential(-e, 1.0, AffineExpr::var(y));
  program.add_nonnegative(AffineExpr::var(y) - weighted_selection(delta, logs) -
                          AffineExpr::var(risk.psi));
}

void encode_variable_risk(ConicProgram& program, const ChanceConstraintSpec& spec,
                          const DisjunctiveNormData& data, const AffineExpr& f,
                          const std::vector<VarId>& delta, RiskVariable& risk) {
  switch (risk.kind) {
    case ApproxKind::Inv: return encode_inv_formulation(program, spec, data, f, delta, risk);
    case ApproxKind::Root: return encode_root_formulation(program, spec, data, f, delta, risk);
    case ApproxKind::Log: return encode_log_formulation(program, spec, data, f, delta, risk);
  }
}

void encode_fixed_risk(ConicProgram& program, const ChanceConstraintSpec& spec,
                       const DisjunctiveNormData& data, const AffineExpr& f,
                       const std::vector<VarId>& delta) {
  check_selection(data, delta);
  if (!spec.fixedGamma) throw DomainError("encode_fixed_risk needs a fixed gamma");
  const double gamma = *spec.fixedGamma;
  if (!(gamma > 0.0 && gamma <= 0.5)) throw DomainError("fixed gamma must lie in (0, 0.5]");
  const double p = probit_complement(gamma);
  std::vector<double> w(data.rk.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = data.rk[k] * p;
  program.add_nonnegative(-(effective_expression(spec, f) + weighted_selection(delta, w)));
}

double max_backoff_factor(const ApproxParams& params) {
  double worst = 0.0;
  for (double g : log_grid(kRiskFloor, params.intervalMax, 200)) {
    const double psi = psi_eval(params, g);
    double factor = 0.0;
    switch (params.kind) {
      case ApproxKind::Inv: factor = 1.0 / psi; break;
      case ApproxKind::Root: factor = psi * psi; break;
      case ApproxKind::Log: factor = std::exp(psi); break;
    }
    worst = std::max(worst, factor);
  }
  return worst;
}

double size_big_m(double eMax, double rMax, double backoff) {
  const double M = 1.2 * (std::max(eMax, 0.0) + rMax * backoff);
  return std::max(M, 1.0);
}

void risk_budget_constraint(ConicProgram& program, const RiskBudget& budget) {
  if (!(budget.xi > 0.0 && budget.xi <= 0.5)) throw DomainError("xi must lie in (0, 0.5]");
  if (!budget.caps.empty() && budget.caps.size() != budget.riskVars.size()) {
    throw DimensionError("risk budget caps and variables differ in length");
  }
  if (static_cast<double>(budget.riskVars.size()) * kRiskFloor > budget.xi) {
    throw DomainError("risk floors alone exceed the budget xi");
  }
  AffineExpr sum;
  for (std::size_t i = 0; i < budget.riskVars.size(); ++i) {
    const VarId g = budget.riskVars[i];
    double hi = std::min(program.variable(g).upper, budget.xi);
    if (!budget.caps.empty()) hi = std::min(hi, budget.caps[i]);
    program.set_bounds(g, std::max(program.variable(g).lower, kRiskFloor), hi);
    sum.add(g, 1.0);
  }
  program.add_nonnegative(budget.xi - sum);
  program.add_nonnegative(sum);
}

}  // namespace dsmpc
