#pragma once

/**
 * @file
 * @brief Gaussian quantile, Lambert W0 and the conic-representable
 * approximations of 1/probit(1-g), sqrt(probit(1-g)) and log(probit(1-g)).
 *
 *   inv :  Psi(g) = beta g^alpha + lambda g + phi                 (concave, lower bound)
 *   root:  Psi(g) = beta W0(alpha g) + lambda g + phi + rho log g (convex, upper bound)
 *   log :  same form as root                                      (convex, upper bound)
 */

#include <string>
#include <vector>

#include "dsmpc/conic_ir.hpp"

namespace dsmpc {

/// Smallest admissible value of a decision risk variable.
inline constexpr double kRiskFloor = 1e-6;

double normal_cdf(double x);

/// Inverse of the standard normal CDF. Throws DomainError outside (0,1).
double probit(double p);

/// probit(1 - g) evaluated without forming 1 - g.
double probit_complement(double g);

/// Principal branch of Lambert W for z >= 0.
double lambert_w0(double z);

enum class ApproxKind { Inv, Root, Log };

const char* to_string(ApproxKind kind);
ApproxKind parse_approx_kind(const std::string& name);

/// Upper end of the interval on which the target composition has the
/// curvature the approximation relies on.
double curvature_cap(ApproxKind kind);

struct ApproxParams {
  ApproxKind kind = ApproxKind::Log;
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  double phi = 0.0;
  double rho = 0.0;  ///< unused for Inv
  double intervalMax = 0.0;
};

/// Table values as printed; the inv row reads coefficient 0.6406 and
/// exponent 0.1012.
ApproxParams table_params(ApproxKind kind);

/// table_params shifted so the bound direction holds on [kRiskFloor, cap].
/// Computed once per kind and cached.
const ApproxParams& certified_params(ApproxKind kind);

/// Throws DomainError for g <= 0 or g above params.intervalMax.
double psi_eval(const ApproxParams& params, double g);

/// The exact target: 1/probit(1-g), sqrt(probit(1-g)) or log(probit(1-g)).
double exact_composition(ApproxKind kind, double g);

/// Positive where the approximation is on the wrong side of the target:
/// psi - exact for Inv, exact - psi for Root and Log.
double signed_violation(const ApproxParams& params, double g);

/// n points log-spaced on [lo, hi], endpoints included.
std::vector<double> log_grid(double lo, double hi, int n);

/// Largest signed_violation over a dense log grid on [lo, hi], refined
/// locally around the worst grid points.
double max_bound_violation(const ApproxParams& params, double lo, double hi);

/// Shifts phi so that max_bound_violation on [lo, hi] is <= 0.
ApproxParams enforce_bound(ApproxParams params, double lo, double hi);

struct FitReport {
  ApproxParams params;
  double maxAbsResidual = 0.0;  ///< on the fitting grid, after enforcement
  double enforcementShift = 0.0;
};

/// Near-minimax least-squares fit on a log-spaced grid over [lo, hi]
/// followed by the one-sided shift. Throws DomainError when the interval
/// leaves the curvature region or the residual exceeds 0.05.
FitReport fit_psi(ApproxKind kind, double lo, double hi, int gridSize);

/// s <= g^exponent via (g, 1, s) in the power cone.
std::size_t encode_power_hypograph(conic::ConicProgram& program, const conic::AffineExpr& g,
                                   conic::VarId s, double exponent);

/// 0 <= y <= W0(z) via (z, y, u) in K_exp and (1/2, u, y) in Q_r. Returns
/// the auxiliary u.
conic::VarId encode_w0_hypograph(conic::ConicProgram& program, const conic::AffineExpr& z,
                                 conic::VarId y);

/// t <= log z via (z, 1, t) in K_exp.
std::size_t encode_log_hypograph(conic::ConicProgram& program, const conic::AffineExpr& z,
                                 const conic::AffineExpr& t);

/// New variable t with t <= Psi(g) for Inv and t >= Psi(g) for Root/Log.
/// Throws DomainError when the parameter signs break conic representability.
conic::VarId encode_psi_bound(conic::ConicProgram& program, const ApproxParams& params,
                              const conic::AffineExpr& g);

}  // namespace dsmpc
