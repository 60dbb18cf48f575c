#include "dsmpc/conic_ir.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "dsmpc/errors.hpp"

namespace dsmpc::conic {

AffineExpr& AffineExpr::operator+=(const AffineExpr& o) {
  terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
  constant_ += o.constant_;
  return *this;
}

AffineExpr& AffineExpr::operator-=(const AffineExpr& o) {
  for (const auto& t : o.terms_) terms_.push_back({t.var, -t.coef});
  constant_ -= o.constant_;
  return *this;
}

AffineExpr& AffineExpr::operator*=(double s) {
  for (auto& t : terms_) t.coef *= s;
  constant_ *= s;
  return *this;
}

void AffineExpr::compress() {
  std::sort(terms_.begin(), terms_.end(),
            [](const LinearTerm& a, const LinearTerm& b) { return a.var < b.var; });
  std::vector<LinearTerm> merged;
  merged.reserve(terms_.size());
  for (const auto& t : terms_) {
    if (!merged.empty() && merged.back().var == t.var) {
      merged.back().coef += t.coef;
    } else {
      merged.push_back(t);
    }
  }
  std::erase_if(merged, [](const LinearTerm& t) { return t.coef == 0.0; });
  terms_ = std::move(merged);
}

double AffineExpr::evaluate(std::span<const double> x) const {
  double v = constant_;
  for (const auto& t : terms_) v += t.coef * x[static_cast<std::size_t>(t.var)];
  return v;
}

const char* to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::Zero: return "ZERO";
    case ConeKind::Nonnegative: return "NONNEG";
    case ConeKind::SecondOrder: return "SOC";
    case ConeKind::RotatedSecondOrder: return "RSOC";
    case ConeKind::Exponential: return "EXP";
    case ConeKind::Power: return "POW";
  }
  return "?";
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

VarId ConicProgram::add_variable(std::string name, double lower, double upper) {
  vars_.push_back({lower, upper, false, std::move(name)});
  return static_cast<VarId>(vars_.size() - 1);
}

VarId ConicProgram::add_binary(std::string name) {
  vars_.push_back({0.0, 1.0, true, std::move(name)});
  return static_cast<VarId>(vars_.size() - 1);
}

void ConicProgram::set_bounds(VarId v, double lower, double upper) {
  auto& var = vars_.at(static_cast<std::size_t>(v));
  var.lower = lower;
  var.upper = upper;
}

void ConicProgram::mark_binary(VarId v) { vars_.at(static_cast<std::size_t>(v)).binary = true; }

std::size_t ConicProgram::add_membership(ConeMembership m) {
  for (auto& r : m.rows) r.compress();
  memberships_.push_back(std::move(m));
  return memberships_.size() - 1;
}

std::size_t ConicProgram::add_zero(AffineExpr e) {
  return add_membership({ConeKind::Zero, {std::move(e)}, 0.5});
}

std::size_t ConicProgram::add_nonnegative(AffineExpr e) {
  return add_membership({ConeKind::Nonnegative, {std::move(e)}, 0.5});
}

std::size_t ConicProgram::add_second_order(std::vector<AffineExpr> rows) {
  return add_membership({ConeKind::SecondOrder, std::move(rows), 0.5});
}

std::size_t ConicProgram::add_rotated_second_order(std::vector<AffineExpr> rows) {
  return add_membership({ConeKind::RotatedSecondOrder, std::move(rows), 0.5});
}

std::size_t ConicProgram::add_exponential(AffineExpr z, AffineExpr y, AffineExpr t) {
  return add_membership({ConeKind::Exponential, {std::move(z), std::move(y), std::move(t)}, 0.5});
}

std::size_t ConicProgram::add_power(AffineExpr z, AffineExpr y, AffineExpr t, double exponent) {
  return add_membership({ConeKind::Power, {std::move(z), std::move(y), std::move(t)}, exponent});
}

void ConicProgram::add_one_hot_group(std::vector<VarId> members) {
  AffineExpr sum(-1.0);
  for (VarId v : members) sum.add(v, 1.0);
  add_zero(std::move(sum));
  groups_.push_back(std::move(members));
}

std::vector<VarId> ConicProgram::binaries() const {
  std::vector<VarId> out;
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i].binary) out.push_back(static_cast<VarId>(i));
  }
  return out;
}

namespace {

bool is_group_row(const AffineExpr& row, const std::vector<VarId>& group) {
  if (row.terms().size() != group.size() || row.terms().empty()) return false;
  const double c = row.terms().front().coef;
  if (c == 0.0 || std::abs(row.constant() + c) > 1e-12 * std::abs(c)) return false;
  std::set<VarId> members(group.begin(), group.end());
  for (const auto& t : row.terms()) {
    if (std::abs(t.coef - c) > 1e-12 * std::abs(c) || !members.count(t.var)) return false;
  }
  return true;
}

}  // namespace

std::vector<std::string> validate_program(const ConicProgram& program) {
  std::vector<std::string> out;
  const int n = program.num_vars();
  auto check_expr = [&](const AffineExpr& e, const std::string& where) {
    for (const auto& t : e.terms()) {
      if (t.var < 0 || t.var >= n) {
        out.push_back(where + ": dangling variable id " + std::to_string(t.var));
      }
    }
    if (!std::isfinite(e.constant())) out.push_back(where + ": non-finite constant");
  };

  const auto& ms = program.memberships();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto& m = ms[i];
    const std::string where = std::string("membership ") + std::to_string(i) + " (" +
                              to_string(m.kind) + ")";
    const std::size_t k = m.rows.size();
    switch (m.kind) {
      case ConeKind::Zero:
      case ConeKind::Nonnegative:
      case ConeKind::SecondOrder:
        if (k < 1) out.push_back(where + ": arity " + std::to_string(k) + ", expected >= 1");
        break;
      case ConeKind::RotatedSecondOrder:
        if (k < 2) out.push_back(where + ": arity " + std::to_string(k) + ", expected >= 2");
        break;
      case ConeKind::Exponential:
      case ConeKind::Power:
        if (k != 3) out.push_back(where + ": arity " + std::to_string(k) + ", expected 3");
        break;
    }
    if (m.kind == ConeKind::Power && !(m.exponent > 0.0 && m.exponent < 1.0)) {
      out.push_back(where + ": power exponent outside (0,1)");
    }
    for (const auto& r : m.rows) check_expr(r, where);
  }
  check_expr(program.objective(), "objective");

  for (int v = 0; v < n; ++v) {
    const auto& var = program.variable(v);
    if (var.lower > var.upper) {
      out.push_back("variable " + std::to_string(v) + " (" + var.name + "): empty bounds");
    }
    if (var.binary && (var.lower < 0.0 || var.upper > 1.0)) {
      out.push_back("variable " + std::to_string(v) + " (" + var.name +
                    "): binary with bounds outside [0,1]");
    }
  }

  for (std::size_t g = 0; g < program.one_hot_groups().size(); ++g) {
    const auto& group = program.one_hot_groups()[g];
    for (VarId v : group) {
      if (v < 0 || v >= n) {
        out.push_back("one-hot group " + std::to_string(g) + ": dangling variable id " +
                      std::to_string(v));
      } else if (!program.variable(v).binary) {
        out.push_back("one-hot group " + std::to_string(g) + ": member " + std::to_string(v) +
                      " is not binary");
      }
    }
    bool found = false;
    for (const auto& m : ms) {
      if (m.kind != ConeKind::Zero) continue;
      for (const auto& r : m.rows) {
        if (is_group_row(r, group)) found = true;
      }
    }
    if (!found) {
      out.push_back("one-hot group " + std::to_string(g) + ": missing convexity row (sum == 1)");
    }
  }
  return out;
}

Eigen::VectorXd cone_direction(const ConeMembership& m) {
  const auto k = static_cast<Eigen::Index>(m.rows.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(k);
  switch (m.kind) {
    case ConeKind::Zero:
      break;
    case ConeKind::Nonnegative:
      e.setOnes();
      break;
    case ConeKind::SecondOrder:
      e(0) = 1.0;
      break;
    case ConeKind::RotatedSecondOrder:
      e(0) = 1.0;
      e(1) = 1.0;
      break;
    case ConeKind::Exponential:
      e << 1.290928, 0.805102, -0.827838;
      break;
    case ConeKind::Power:
      e << 1.0, 1.0, 0.0;
      break;
  }
  return e;
}

bool in_cone(ConeKind kind, const Eigen::VectorXd& u, double exponent) {
  switch (kind) {
    case ConeKind::Zero:
      return (u.array() == 0.0).all();
    case ConeKind::Nonnegative:
      return (u.array() >= 0.0).all();
    case ConeKind::SecondOrder:
      return u(0) >= u.tail(u.size() - 1).norm();
    case ConeKind::RotatedSecondOrder:
      return u(0) >= 0.0 && u(1) >= 0.0 &&
             2.0 * u(0) * u(1) >= u.tail(u.size() - 2).squaredNorm();
    case ConeKind::Exponential: {
      const double z = u(0), y = u(1), t = u(2);
      if (y > 0.0) return z >= y * std::exp(t / y);
      if (y == 0.0) return z >= 0.0 && t <= 0.0;
      return false;
    }
    case ConeKind::Power: {
      const double z = u(0), y = u(1), t = u(2);
      if (z < 0.0 || y < 0.0) return false;
      return std::pow(z, exponent) * std::pow(y, 1.0 - exponent) >= std::abs(t);
    }
  }
  return false;
}

double membership_residual(const ConeMembership& m, std::span<const double> x) {
  const auto k = static_cast<Eigen::Index>(m.rows.size());
  Eigen::VectorXd u(k);
  for (Eigen::Index i = 0; i < k; ++i) u(i) = m.rows[static_cast<std::size_t>(i)].evaluate(x);

  switch (m.kind) {
    case ConeKind::Zero:
      return u.cwiseAbs().maxCoeff();
    case ConeKind::Nonnegative:
      return std::max(0.0, -u.minCoeff());
    case ConeKind::SecondOrder:
      return std::max(0.0, u.tail(k - 1).norm() - u(0));
    case ConeKind::RotatedSecondOrder: {
      const double z = u(0), y = u(1), q = u.tail(k - 2).squaredNorm();
      const double s = 0.5 * (-(z + y) + std::sqrt((z - y) * (z - y) + 2.0 * q));
      return std::max(0.0, s);
    }
    case ConeKind::Exponential:
    case ConeKind::Power: {
      if (in_cone(m.kind, u, m.exponent)) return 0.0;
      const Eigen::VectorXd e = cone_direction(m);
      double hi = std::max(1.0, u.cwiseAbs().maxCoeff());
      for (int i = 0; i < 200 && !in_cone(m.kind, u + hi * e, m.exponent); ++i) hi *= 2.0;
      double lo = 0.0;
      for (int i = 0; i < 200 && hi - lo > 1e-16 * std::max(1.0, hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (in_cone(m.kind, u + mid * e, m.exponent)) {
          hi = mid;
        } else {
          lo = mid;
        }
      }
      return hi;
    }
  }
  return kInf;
}

Certificate certify(const ConicProgram& program, const Solution& solution, double tolerance) {
  Certificate c;
  const auto& x = solution.primal;
  if (x.size() != program.num_vars()) {
    c.worst = "primal has wrong length";
    return c;
  }
  const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
  for (std::size_t i = 0; i < program.memberships().size(); ++i) {
    const double r = membership_residual(program.memberships()[i], xs);
    if (r > c.maxResidual) {
      c.maxResidual = r;
      c.worst = "membership " + std::to_string(i) + " (" +
                to_string(program.memberships()[i].kind) + ")";
    }
  }
  for (int v = 0; v < program.num_vars(); ++v) {
    const auto& var = program.variable(v);
    const double viol = std::max({0.0, var.lower - x(v), x(v) - var.upper});
    c.boundViolation = std::max(c.boundViolation, viol);
  }
  c.objectiveMismatch = std::abs(program.objective().evaluate(xs) - solution.objectiveValue);
  c.ok = c.maxResidual <= tolerance && c.boundViolation <= tolerance &&
         c.objectiveMismatch <= 1e-9 * std::max(1.0, std::abs(solution.objectiveValue));
  return c;
}

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw SchemaError("program text: bad number '" + s + "'");
  }
  return v;
}

std::string format_expr(const AffineExpr& e) {
  std::string out = format_double(e.constant());
  for (const auto& t : e.terms()) {
    out += ' ';
    out += format_double(t.coef);
    out += "*x";
    out += std::to_string(t.var);
  }
  return out;
}

AffineExpr parse_expr(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  AffineExpr e;
  if (!(in >> tok)) throw SchemaError("program text: empty expression");
  e.add_constant(parse_double(tok));
  while (in >> tok) {
    const auto star = tok.find("*x");
    if (star == std::string::npos) throw SchemaError("program text: bad term '" + tok + "'");
    e.add(std::stoi(tok.substr(star + 2)), parse_double(tok.substr(0, star)));
  }
  return e;
}

std::string sanitize(const std::string& name) {
  std::string out = name.empty() ? "_" : name;
  std::replace_if(out.begin(), out.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }, '_');
  return out;
}

}  // namespace

std::string serialize(const ConicProgram& program) {
  std::ostringstream out;
  out << "CONICPROGRAM 1\n";
  for (int v = 0; v < program.num_vars(); ++v) {
    const auto& var = program.variable(v);
    out << "VAR " << v << ' ' << format_double(var.lower) << ' ' << format_double(var.upper) << ' '
        << (var.binary ? 'B' : 'C') << ' ' << sanitize(var.name) << '\n';
  }
  for (const auto& m : program.memberships()) {
    out << "CONE " << to_string(m.kind);
    if (m.kind == ConeKind::Power) out << ' ' << format_double(m.exponent);
    out << ':';
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
      out << (i == 0 ? " " : " ; ") << format_expr(m.rows[i]);
    }
    out << '\n';
  }
  for (const auto& g : program.one_hot_groups()) {
    out << "ONEHOT";
    for (VarId v : g) out << ' ' << v;
    out << '\n';
  }
  out << "OBJ " << format_expr(program.objective()) << '\n';
  out << "END\n";
  return out.str();
}

ConicProgram parse_program(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  ConicProgram p;
  if (!std::getline(in, line) || line != "CONICPROGRAM 1") {
    throw SchemaError("program text: missing header");
  }
  const std::map<std::string, ConeKind> kinds = {
      {"ZERO", ConeKind::Zero}, {"NONNEG", ConeKind::Nonnegative},
      {"SOC", ConeKind::SecondOrder}, {"RSOC", ConeKind::RotatedSecondOrder},
      {"EXP", ConeKind::Exponential}, {"POW", ConeKind::Power}};
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "VAR") {
      int id;
      std::string lo, hi, type, name;
      ls >> id >> lo >> hi >> type >> name;
      if (id != p.num_vars()) throw SchemaError("program text: variables out of order");
      const VarId v = p.add_variable(name, parse_double(lo), parse_double(hi));
      if (type == "B") p.mark_binary(v);
    } else if (tag == "CONE") {
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw SchemaError("program text: CONE without ':'");
      std::istringstream head(line.substr(5, colon - 5));
      std::string kindName;
      head >> kindName;
      auto it = kinds.find(kindName);
      if (it == kinds.end()) throw SchemaError("program text: unknown cone " + kindName);
      ConeMembership m;
      m.kind = it->second;
      if (m.kind == ConeKind::Power) {
        std::string eta;
        head >> eta;
        m.exponent = parse_double(eta);
      }
      std::string body = line.substr(colon + 1);
      std::size_t start = 0;
      while (start <= body.size()) {
        const auto sep = body.find(" ; ", start);
        const std::string part = body.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
        m.rows.push_back(parse_expr(part));
        if (sep == std::string::npos) break;
        start = sep + 3;
      }
      p.add_membership(std::move(m));
    } else if (tag == "ONEHOT") {
      std::vector<VarId> g;
      VarId v;
      while (ls >> v) g.push_back(v);
      p.declare_one_hot_group(std::move(g));
    } else if (tag == "OBJ") {
      p.set_objective(parse_expr(line.substr(4)));
    } else if (tag == "END") {
      ended = true;
      break;
    } else {
      throw SchemaError("program text: unknown record '" + tag + "'");
    }
  }
  if (!ended) throw SchemaError("program text: missing END");
  return p;
}

VarId add_quadratic_objective_epigraph(ConicProgram& program, const Eigen::MatrixXd& Q,
                                       const std::vector<AffineExpr>& exprs) {
  if (Q.rows() != Q.cols() || Q.rows() != static_cast<Eigen::Index>(exprs.size())) {
    throw DimensionError("quadratic weight must be square and match the argument length");
  }
  const Eigen::MatrixXd sym = 0.5 * (Q + Q.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw DomainError("quadratic weight is indefinite");
  }
  std::vector<AffineExpr> rows;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double lam = es.eigenvalues()(i);
    if (lam <= 1e-14 * scale) continue;
    AffineExpr r;
    const Eigen::VectorXd f = std::sqrt(lam) * es.eigenvectors().col(i);
    for (Eigen::Index j = 0; j < f.size(); ++j) {
      if (f(j) != 0.0) r += exprs[static_cast<std::size_t>(j)] * f(j);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) return -1;

  const VarId s = program.add_variable("quad_epi", 0.0, kInf);
  std::vector<AffineExpr> cone;
  cone.push_back(AffineExpr::var(s));
  cone.push_back(AffineExpr(1.0));
  for (auto& r : rows) cone.push_back(std::move(r));
  program.add_rotated_second_order(std::move(cone));
  program.add_objective(AffineExpr::var(s, 2.0));
  return s;
}

VarId add_quadratic_objective_epigraph(ConicProgram& program, const Eigen::MatrixXd& Q,
                                       std::span<const VarId> vars) {
  std::vector<AffineExpr> exprs;
  exprs.reserve(vars.size());
  for (VarId v : vars) exprs.push_back(AffineExpr::var(v));
  return add_quadratic_objective_epigraph(program, Q, exprs);
}

}  // namespace dsmpc::conic
