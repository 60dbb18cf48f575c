#pragma once

/**
 * @file
 * @brief Individual Gaussian chance constraints and their conic encodings.
 *
 * A constraint row reads P(H z <= h) >= 1 - gamma (UpperTail) or
 * P(H z >= h) >= 1 - gamma (LowerTail), where z is the stacked state X or the
 * stacked input U. With one-hot feedback selection delta the random part of
 * H z has standard deviation r_k = ||g0 + g_k|| under gain k.
 *
 * Encoders work on the effective expression e, which is f for UpperTail and
 * -f for LowerTail, shifted by -M (1 - sigma) when a Big-M switch is present.
 * The exact constraint is then e + r Phi^-1(1 - gamma) <= 0.
 */

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "dsmpc/conic_ir.hpp"
#include "dsmpc/prediction.hpp"
#include "dsmpc/probit_cones.hpp"

namespace dsmpc {

enum class TailDirection { UpperTail, LowerTail };
enum class ChanceSpace { State, Input };

struct BigMSwitch {
  double M = 0.0;
  conic::VarId sigma = -1;
};

struct ChanceConstraintSpec {
  Eigen::RowVectorXd Hrow;  ///< over X ((N+1) nx) or U (N nu)
  double hConst = 0.0;
  ChanceSpace space = ChanceSpace::State;
  TailDirection direction = TailDirection::UpperTail;
  std::optional<double> fixedGamma;  ///< empty means the risk is a decision variable
  std::optional<BigMSwitch> bigM;
};

struct DisjunctiveNormData {
  Eigen::VectorXd g0;               ///< H calG for state rows, zero for input rows
  std::vector<Eigen::VectorXd> gk;  ///< H calB calM_k, or H calM_k for input rows
  std::vector<double> rk;

  bool all_zero() const;
  bool any_zero() const;
  double max_r() const;
};

struct ExactCheck {
  bool satisfied = false;
  double margin = 0.0;
};

/// Margin of the exact probit constraint; satisfied iff margin >= 0.
/// UpperTail: -(f + cNorm probit(1-gamma)); LowerTail: f - cNorm probit(1-gamma).
ExactCheck deterministic_exact(TailDirection direction, double f, double cNorm, double gamma);

DisjunctiveNormData compute_rk(const ChanceConstraintSpec& spec, const StackedSystem& stacked,
                               const GainLibrary& library);

/// f(V) = H (calA x0 + calB V) - h for state rows, H V - h for input rows.
conic::AffineExpr nominal_expression(const ChanceConstraintSpec& spec,
                                     const StackedSystem& stacked, const Eigen::VectorXd& x0,
                                     const std::vector<conic::VarId>& V);

/// Numeric counterpart of nominal_expression.
double nominal_value(const ChanceConstraintSpec& spec, const StackedSystem& stacked,
                     const Eigen::VectorXd& x0, const Eigen::VectorXd& V);

/// Direction flip and Big-M shift applied to f.
conic::AffineExpr effective_expression(const ChanceConstraintSpec& spec,
                                       const conic::AffineExpr& f);

/// Returns spec with the switch attached. Throws DomainError for M <= 0.
ChanceConstraintSpec wrap_big_m(ChanceConstraintSpec spec, double M, conic::VarId sigma);

/// A decision risk gamma together with the approximation variable psi bound
/// to it (t <= Psi_inv(gamma), or t >= Psi(gamma) for root and log). One
/// handle may be shared by every face of a step.
struct RiskVariable {
  ApproxKind kind = ApproxKind::Log;
  conic::VarId gamma = -1;
  conic::VarId psi = -1;
  conic::VarId psiInv = -1;  ///< fallback inv hypograph, created on demand
};

/// gamma in [kRiskFloor, min(params.intervalMax, upper)] and its psi variable.
RiskVariable make_risk_variable(conic::ConicProgram& program, const ApproxParams& params,
                                double upper, const std::string& name);

/// Same with certified_params(kind).
RiskVariable make_risk_variable(conic::ConicProgram& program, ApproxKind kind, double upper,
                                const std::string& name);

/// Number of one-hot selections must match data.rk. Each encoder reduces to
/// e <= 0 when every r_k is zero.
void encode_inv_formulation(conic::ConicProgram& program, const ChanceConstraintSpec& spec,
                            const DisjunctiveNormData& data, const conic::AffineExpr& f,
                            const std::vector<conic::VarId>& delta, RiskVariable& risk);

/// Mixed zero and nonzero r_k is routed to the inv encoding on the same gamma.
void encode_root_formulation(conic::ConicProgram& program, const ChanceConstraintSpec& spec,
                             const DisjunctiveNormData& data, const conic::AffineExpr& f,
                             const std::vector<conic::VarId>& delta, RiskVariable& risk);

/// Throws DomainError when some but not all r_k are zero.
void encode_log_formulation(conic::ConicProgram& program, const ChanceConstraintSpec& spec,
                            const DisjunctiveNormData& data, const conic::AffineExpr& f,
                            const std::vector<conic::VarId>& delta, RiskVariable& risk);

/// Dispatches on risk.kind.
void encode_variable_risk(conic::ConicProgram& program, const ChanceConstraintSpec& spec,
                          const DisjunctiveNormData& data, const conic::AffineExpr& f,
                          const std::vector<conic::VarId>& delta, RiskVariable& risk);

/// e + sum_k delta_k r_k probit(1 - gamma) <= 0 with gamma = spec.fixedGamma.
void encode_fixed_risk(conic::ConicProgram& program, const ChanceConstraintSpec& spec,
                       const DisjunctiveNormData& data, const conic::AffineExpr& f,
                       const std::vector<conic::VarId>& delta);

/// Largest of 1/Psi_inv, Psi_root^2, exp(Psi_log) over [kRiskFloor, intervalMax]:
/// the back-off an encoding can demand per unit of r.
double max_backoff_factor(const ApproxParams& params);

/// M = 1.2 (eMax + rMax backoff) clamped to at least 1, where eMax bounds the
/// effective expression over the region where the switch may be off.
double size_big_m(double eMax, double rMax, double backoff);

struct RiskBudget {
  double xi = 0.15;
  std::vector<conic::VarId> riskVars;
  std::vector<double> caps;  ///< per variable; empty means no extra cap
};

/// Adds 0 <= sum gamma <= xi and tightens each gamma to [kRiskFloor, min(cap, xi)].
/// Throws DomainError when the floors alone exceed xi.
void risk_budget_constraint(conic::ConicProgram& program, const RiskBudget& budget);

}  // namespace dsmpc
