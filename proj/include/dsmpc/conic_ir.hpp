#pragma once

/**
 * @file
 * @brief Mixed-integer conic program representation.
 *
 * A program is a set of scalar variables with bounds (optionally marked
 * binary), a linear objective, and a list of memberships "affine rows in
 * cone". Cone orderings:
 *
 *   Zero                 every row == 0
 *   Nonnegative          every row >= 0
 *   SecondOrder          (t, x...)      t >= ||x||
 *   RotatedSecondOrder   (z, y, x...)   2 z y >= ||x||^2, z, y >= 0
 *   Exponential          (z, y, t)      z >= y exp(t / y), y > 0 (closure)
 *   Power(eta)           (z, y, t)      z^eta y^(1-eta) >= |t|, z, y >= 0
 */

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dsmpc::conic {

using VarId = int;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct LinearTerm {
  VarId var;
  double coef;
};

class AffineExpr {
 public:
  AffineExpr() = default;
  AffineExpr(double constant) : constant_(constant) {}  // NOLINT: implicit by design of the DSL

  static AffineExpr var(VarId v, double coef = 1.0) {
    AffineExpr e;
    e.terms_.push_back({v, coef});
    return e;
  }

  AffineExpr& add(VarId v, double coef) {
    if (coef != 0.0) terms_.push_back({v, coef});
    return *this;
  }
  AffineExpr& add_constant(double c) {
    constant_ += c;
    return *this;
  }

  AffineExpr& operator+=(const AffineExpr& o);
  AffineExpr& operator-=(const AffineExpr& o);
  AffineExpr& operator*=(double s);

  friend AffineExpr operator+(AffineExpr a, const AffineExpr& b) { return a += b; }
  friend AffineExpr operator-(AffineExpr a, const AffineExpr& b) { return a -= b; }
  friend AffineExpr operator*(AffineExpr a, double s) { return a *= s; }
  friend AffineExpr operator*(double s, AffineExpr a) { return a *= s; }
  friend AffineExpr operator-(AffineExpr a) { return a *= -1.0; }

  double constant() const { return constant_; }
  const std::vector<LinearTerm>& terms() const { return terms_; }

  /// Merges duplicate variables and drops zero coefficients; sorts by id.
  void compress();

  double evaluate(std::span<const double> x) const;
  double evaluate(const Eigen::VectorXd& x) const {
    return evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }

 private:
  std::vector<LinearTerm> terms_;
  double constant_ = 0.0;
};

enum class ConeKind { Zero, Nonnegative, SecondOrder, RotatedSecondOrder, Exponential, Power };

const char* to_string(ConeKind kind);

struct ConeMembership {
  ConeKind kind = ConeKind::Nonnegative;
  std::vector<AffineExpr> rows;
  double exponent = 0.5;  ///< Power cone only
};

struct Variable {
  double lower = -kInf;
  double upper = kInf;
  bool binary = false;
  std::string name;
};

class ConicProgram {
 public:
  VarId add_variable(std::string name, double lower = -kInf, double upper = kInf);
  VarId add_binary(std::string name);
  void set_bounds(VarId v, double lower, double upper);
  void mark_binary(VarId v);

  std::size_t add_membership(ConeMembership m);
  std::size_t add_zero(AffineExpr e);                  ///< e == 0
  std::size_t add_nonnegative(AffineExpr e);           ///< e >= 0
  std::size_t add_second_order(std::vector<AffineExpr> rows);
  std::size_t add_rotated_second_order(std::vector<AffineExpr> rows);
  std::size_t add_exponential(AffineExpr z, AffineExpr y, AffineExpr t);
  std::size_t add_power(AffineExpr z, AffineExpr y, AffineExpr t, double exponent);

  /// Records an exactly-one group and adds its sum-to-one row.
  void add_one_hot_group(std::vector<VarId> members);
  /// Records a group without adding the convexity row (used for diagnostics tests).
  void declare_one_hot_group(std::vector<VarId> members) { groups_.push_back(std::move(members)); }

  void add_objective(const AffineExpr& e) { objective_ += e; }
  void set_objective(AffineExpr e) { objective_ = std::move(e); }

  int num_vars() const { return static_cast<int>(vars_.size()); }
  const std::vector<Variable>& variables() const { return vars_; }
  const Variable& variable(VarId v) const { return vars_.at(static_cast<std::size_t>(v)); }
  const std::vector<ConeMembership>& memberships() const { return memberships_; }
  const std::vector<std::vector<VarId>>& one_hot_groups() const { return groups_; }
  const AffineExpr& objective() const { return objective_; }

  std::vector<VarId> binaries() const;

 private:
  std::vector<Variable> vars_;
  std::vector<ConeMembership> memberships_;
  std::vector<std::vector<VarId>> groups_;
  AffineExpr objective_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

const char* to_string(SolveStatus status);

struct SolveStats {
  int iterations = 0;
  double seconds = 0.0;
};

struct Solution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd primal;
  double objectiveValue = 0.0;
  /// Lower bound on the optimal value implied by the barrier duality gap.
  double lowerBound = -kInf;
  SolveStats solveStats;
  std::string diagnostic;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

/// Structural diagnostics: dangling ids, cone arity, binary bounds, groups
/// without a sum-to-one row. Empty means well formed.
std::vector<std::string> validate_program(const ConicProgram& program);

/// Interior direction used to measure membership violation, per cone row.
Eigen::VectorXd cone_direction(const ConeMembership& m);

/// Closed membership test of a point in a cone.
bool in_cone(ConeKind kind, const Eigen::VectorXd& u, double exponent);

/// Smallest s >= 0 with u + s e in the cone (e from cone_direction); for the
/// Zero cone, the largest absolute row value.
double membership_residual(const ConeMembership& m, std::span<const double> x);

struct Certificate {
  bool ok = false;
  double maxResidual = 0.0;
  double boundViolation = 0.0;
  double objectiveMismatch = 0.0;
  std::string worst;
};

/// Re-evaluates every membership, the variable bounds and the objective from
/// the primal vector.
Certificate certify(const ConicProgram& program, const Solution& solution,
                    double tolerance = 1e-7);

/// Line-oriented text form; numbers use shortest round-trip formatting.
std::string serialize(const ConicProgram& program);
ConicProgram parse_program(const std::string& text);

/// Adds s with ||F v||^2 <= 2 s (F'F = Q) and puts 2 s into the objective,
/// so the objective contribution equals v'Qv. Returns s, or -1 when Q == 0.
VarId add_quadratic_objective_epigraph(ConicProgram& program, const Eigen::MatrixXd& Q,
                                       std::span<const VarId> vars);

/// Same epigraph with an affine argument: ||F a||^2 <= 2 s for a = exprs.
VarId add_quadratic_objective_epigraph(ConicProgram& program, const Eigen::MatrixXd& Q,
                                       const std::vector<AffineExpr>& exprs);

}  // namespace dsmpc::conic
