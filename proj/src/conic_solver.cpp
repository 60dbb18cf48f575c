#include "dsmpc/conic_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>

namespace dsmpc::conic {

namespace {

std::mutex observerMutex;
SolutionObserver observer;

struct SparseRow {
  std::vector<int> idx;
  std::vector<double> val;
  double c = 0.0;
};

struct Cone {
  ConeKind kind = ConeKind::Nonnegative;
  double eta = 0.5;
  std::vector<int> support;
  Eigen::MatrixXd J;  // rows x support
  Eigen::VectorXd h;
  Eigen::VectorXd e;
  int degree = 1;
};

int cone_degree(ConeKind kind) {
  switch (kind) {
    case ConeKind::Nonnegative: return 1;
    case ConeKind::SecondOrder:
    case ConeKind::RotatedSecondOrder: return 2;
    case ConeKind::Exponential:
    case ConeKind::Power: return 3;
    case ConeKind::Zero: return 0;
  }
  return 0;
}

// Barrier value, gradient and Hessian at u. Returns false outside the
// interior. g and H may be null.
bool barrier(ConeKind kind, double eta, const Eigen::VectorXd& u, double* f, Eigen::VectorXd* g,
             Eigen::MatrixXd* H) {
  const auto k = u.size();
  switch (kind) {
    case ConeKind::Nonnegative: {
      if (!(u(0) > 0.0)) return false;
      *f = -std::log(u(0));
      if (g) (*g)(0) = -1.0 / u(0);
      if (H) (*H)(0, 0) = 1.0 / (u(0) * u(0));
      return true;
    }
    case ConeKind::SecondOrder: {
      const double t = u(0);
      const double s = t * t - u.tail(k - 1).squaredNorm();
      if (!(t > 0.0) || !(s > 0.0)) return false;
      *f = -std::log(s);
      if (g || H) {
        Eigen::VectorXd ds(k);
        ds(0) = 2.0 * t;
        ds.tail(k - 1) = -2.0 * u.tail(k - 1);
        if (g) *g = -ds / s;
        if (H) {
          *H = ds * ds.transpose() / (s * s);
          (*H)(0, 0) -= 2.0 / s;
          for (Eigen::Index i = 1; i < k; ++i) (*H)(i, i) += 2.0 / s;
        }
      }
      return true;
    }
    case ConeKind::RotatedSecondOrder: {
      const double z = u(0), y = u(1);
      const double s = 2.0 * z * y - u.tail(k - 2).squaredNorm();
      if (!(z > 0.0) || !(y > 0.0) || !(s > 0.0)) return false;
      *f = -std::log(s);
      if (g || H) {
        Eigen::VectorXd ds(k);
        ds(0) = 2.0 * y;
        ds(1) = 2.0 * z;
        ds.tail(k - 2) = -2.0 * u.tail(k - 2);
        if (g) *g = -ds / s;
        if (H) {
          *H = ds * ds.transpose() / (s * s);
          (*H)(0, 1) -= 2.0 / s;
          (*H)(1, 0) -= 2.0 / s;
          for (Eigen::Index i = 2; i < k; ++i) (*H)(i, i) += 2.0 / s;
        }
      }
      return true;
    }
    case ConeKind::Exponential: {
      const double z = u(0), y = u(1), t = u(2);
      if (!(z > 0.0) || !(y > 0.0)) return false;
      const double lzy = std::log(z / y);
      const double psi = y * lzy - t;
      if (!(psi > 0.0)) return false;
      *f = -std::log(psi) - std::log(z) - std::log(y);
      if (g || H) {
        const Eigen::Vector3d dpsi(y / z, lzy - 1.0, -1.0);
        if (g) *g = -dpsi / psi - Eigen::Vector3d(1.0 / z, 1.0 / y, 0.0);
        if (H) {
          Eigen::Matrix3d d2 = Eigen::Matrix3d::Zero();
          d2(0, 0) = -y / (z * z);
          d2(0, 1) = d2(1, 0) = 1.0 / z;
          d2(1, 1) = -1.0 / y;
          Eigen::Matrix3d M = -d2 / psi + dpsi * dpsi.transpose() / (psi * psi);
          M(0, 0) += 1.0 / (z * z);
          M(1, 1) += 1.0 / (y * y);
          *H = M;
        }
      }
      return true;
    }
    case ConeKind::Power: {
      const double z = u(0), y = u(1), t = u(2);
      if (!(z > 0.0) || !(y > 0.0)) return false;
      const double P = std::exp(2.0 * eta * std::log(z) + (2.0 - 2.0 * eta) * std::log(y));
      const double psi = P - t * t;
      if (!(psi > 0.0)) return false;
      *f = -std::log(psi) - (1.0 - eta) * std::log(z) - eta * std::log(y);
      if (g || H) {
        const double a = 2.0 * eta, b = 2.0 - 2.0 * eta;
        const Eigen::Vector3d dpsi(a * P / z, b * P / y, -2.0 * t);
        if (g) *g = -dpsi / psi - Eigen::Vector3d((1.0 - eta) / z, eta / y, 0.0);
        if (H) {
          Eigen::Matrix3d d2 = Eigen::Matrix3d::Zero();
          d2(0, 0) = a * (a - 1.0) * P / (z * z);
          d2(0, 1) = d2(1, 0) = a * b * P / (z * y);
          d2(1, 1) = b * (b - 1.0) * P / (y * y);
          d2(2, 2) = -2.0;
          Eigen::Matrix3d M = -d2 / psi + dpsi * dpsi.transpose() / (psi * psi);
          M(0, 0) += (1.0 - eta) / (z * z);
          M(1, 1) += eta / (y * y);
          *H = M;
        }
      }
      return true;
    }
    case ConeKind::Zero:
      return false;
  }
  return false;
}

struct Problem {
  int n = 0;
  std::vector<Cone> cones;
  Eigen::VectorXd c;
  double c0 = 0.0;
  int nu = 0;

  Eigen::VectorXd local(const Cone& k, const Eigen::VectorXd& z) const {
    Eigen::VectorXd zl(static_cast<Eigen::Index>(k.support.size()));
    for (std::size_t i = 0; i < k.support.size(); ++i) zl(static_cast<Eigen::Index>(i)) = z(k.support[i]);
    return k.J * zl + k.h;
  }

  // Barrier sum; +inf outside the domain.
  double barrier_value(const Eigen::VectorXd& z) const {
    double total = 0.0;
    for (const auto& k : cones) {
      double f;
      if (!barrier(k.kind, k.eta, local(k, z), &f, nullptr, nullptr)) return kInf;
      total += f;
    }
    return total;
  }

  bool derivatives(const Eigen::VectorXd& z, double tau, Eigen::VectorXd& g,
                   Eigen::MatrixXd& H) const {
    g = tau * c;
    H.setZero(n, n);
    Eigen::VectorXd gl;
    Eigen::MatrixXd Hl;
    for (const auto& k : cones) {
      const Eigen::VectorXd u = local(k, z);
      const auto r = u.size();
      gl.resize(r);
      Hl.resize(r, r);
      double f;
      if (!barrier(k.kind, k.eta, u, &f, &gl, &Hl)) return false;
      const Eigen::VectorXd gz = k.J.transpose() * gl;
      const Eigen::MatrixXd Hz = k.J.transpose() * Hl * k.J;
      const auto m = static_cast<Eigen::Index>(k.support.size());
      for (Eigen::Index a = 0; a < m; ++a) {
        const int ia = k.support[static_cast<std::size_t>(a)];
        g(ia) += gz(a);
        for (Eigen::Index b = 0; b < m; ++b) H(ia, k.support[static_cast<std::size_t>(b)]) += Hz(a, b);
      }
    }
    return true;
  }
};

Cone make_cone(ConeKind kind, double eta, const std::vector<SparseRow>& rows, const Eigen::VectorXd& e) {
  Cone k;
  k.kind = kind;
  k.eta = eta;
  k.degree = cone_degree(kind);
  for (const auto& r : rows) k.support.insert(k.support.end(), r.idx.begin(), r.idx.end());
  std::sort(k.support.begin(), k.support.end());
  k.support.erase(std::unique(k.support.begin(), k.support.end()), k.support.end());
  const auto nr = static_cast<Eigen::Index>(rows.size());
  k.J = Eigen::MatrixXd::Zero(nr, static_cast<Eigen::Index>(k.support.size()));
  k.h.resize(nr);
  for (Eigen::Index i = 0; i < nr; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    k.h(i) = r.c;
    for (std::size_t j = 0; j < r.idx.size(); ++j) {
      const auto pos = std::lower_bound(k.support.begin(), k.support.end(), r.idx[j]) - k.support.begin();
      k.J(i, pos) += r.val[j];
    }
  }
  k.e = e;
  return k;
}

// Smallest s >= 0 with u + s e in the closed cone.
double shift_residual(const Cone& k, const Eigen::VectorXd& u) {
  ConeMembership m;
  m.kind = k.kind;
  m.exponent = k.eta;
  m.rows.reserve(static_cast<std::size_t>(u.size()));
  for (Eigen::Index i = 0; i < u.size(); ++i) m.rows.emplace_back(u(i));
  return membership_residual(m, {});
}

enum class PathStatus { Converged, EarlyStop, Unbounded, Stalled, Failed };

struct PathResult {
  PathStatus status = PathStatus::Failed;
  Eigen::VectorXd z;
  double gap = kInf;
  int newtonSteps = 0;
};

PathResult path_follow(const Problem& P, Eigen::VectorXd z, const SolverOptions& opt,
                       const std::function<bool(const Eigen::VectorXd&, double)>& earlyStop) {
  PathResult res;
  const double nu = std::max(1, P.nu);
  Eigen::VectorXd g(P.n);
  Eigen::MatrixXd H(P.n, P.n);
  Eigen::LLT<Eigen::MatrixXd> llt;

  // Jacobi-scaled Cholesky; barrier Hessians mix curvatures that differ by
  // many orders of magnitude across variables.
  auto solve = [&](const Eigen::MatrixXd& M, const Eigen::VectorXd& rhs, Eigen::VectorXd& out) {
    Eigen::VectorXd d = M.diagonal().cwiseMax(1e-300).cwiseSqrt();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (M(i, i) <= 0.0) d(i) = 1.0;
    }
    const Eigen::VectorXd dinv = d.cwiseInverse();
    const Eigen::MatrixXd S = dinv.asDiagonal() * M * dinv.asDiagonal();
    double reg = 1e-14;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd Sr = S;
      Sr.diagonal().array() += reg;
      llt.compute(Sr);
      if (llt.info() == Eigen::Success) {
        out = dinv.cwiseProduct(llt.solve(dinv.cwiseProduct(rhs)));
        if (out.allFinite()) return true;
      }
      reg *= 100.0;
    }
    return false;
  };

  // Initial barrier weight: least-squares fit of tau c to -grad f.
  double tau = 1.0;
  const bool hasObjective = P.c.cwiseAbs().maxCoeff() > 0.0;
  if (P.derivatives(z, 0.0, g, H)) {
    Eigen::VectorXd hc, hg;
    if (hasObjective && solve(H, P.c, hc) && solve(H, g, hg)) {
      const double a = P.c.dot(hc);
      const double b = -P.c.dot(hg);
      if (a > 0.0 && b > 0.0) tau = b / a;
    }
  }
  const double objScale = std::max(1.0, std::abs(P.c.dot(z) + P.c0));
  tau = std::clamp(tau, 1e-6 * nu / objScale, 1e3 * nu / objScale);

  Eigen::VectorXd dz;
  int steps = 0;
  for (int outer = 0; outer < 200; ++outer) {
    const bool last = !hasObjective || nu / tau <= opt.gapTolerance * std::max(1.0, std::abs(P.c.dot(z) + P.c0));
    const double centerTol = last ? 1e-6 : 0.05;
    double lambda2 = kInf;
    bool stalled = false;
    for (;;) {
      if (steps >= opt.maxNewtonSteps) {
        res.status = PathStatus::Failed;
        res.z = z;
        res.newtonSteps = steps;
        return res;
      }
      if (!P.derivatives(z, tau, g, H) || !solve(H, -g, dz)) {
        stalled = true;
        break;
      }
      lambda2 = -g.dot(dz);
      if (lambda2 <= centerTol) break;
      const double F0 = tau * P.c.dot(z) + P.barrier_value(z);
      // Inside the quadratic convergence region (decrement below 1/4) the
      // full step stays feasible; elsewhere backtrack on the Armijo rule.
      const bool quadratic = lambda2 < 0.0625;
      double alpha = 1.0;
      while (alpha > 1e-14) {
        const Eigen::VectorXd zn = z + alpha * dz;
        const double bv = P.barrier_value(zn);
        if (std::isfinite(bv)) {
          if (quadratic) break;
          if (tau * P.c.dot(zn) + bv <= F0 - 0.01 * alpha * lambda2) break;
        }
        alpha *= 0.5;
      }
      if (alpha <= 1e-14) {
        stalled = true;
        break;
      }
      z += alpha * dz;
      ++steps;
      if (earlyStop && earlyStop(z, kInf)) {
        res.status = PathStatus::EarlyStop;
        res.z = z;
        res.newtonSteps = steps;
        return res;
      }
      if (z.cwiseAbs().maxCoeff() > opt.unboundedThreshold) {
        res.status = PathStatus::Unbounded;
        res.z = z;
        res.newtonSteps = steps;
        return res;
      }
    }
    res.z = z;
    res.newtonSteps = steps;
    res.gap = (nu + std::sqrt(nu * std::max(0.0, std::min(lambda2, 1.0)))) / tau;
    if (stalled) {
      res.status = PathStatus::Stalled;
      return res;
    }
    if (earlyStop && earlyStop(z, res.gap)) {
      res.status = PathStatus::EarlyStop;
      return res;
    }
    if (last) {
      res.status = PathStatus::Converged;
      return res;
    }
    const double nextTau = tau * opt.pathFactor;
    // Predictor along the central path tangent dz/dtau = -H^-1 c, taken at
    // the centered point and shortened until it stays interior and lowers
    // the merit function of the next barrier weight.
    Eigen::VectorXd tangent;
    if (hasObjective && P.derivatives(z, tau, g, H) && solve(H, -P.c, tangent)) {
      const double F0 = nextTau * P.c.dot(z) + P.barrier_value(z);
      for (double beta = nextTau - tau; beta > 1e-3 * (nextTau - tau); beta *= 0.5) {
        const Eigen::VectorXd zp = z + beta * tangent;
        const double Fp = nextTau * P.c.dot(zp) + P.barrier_value(zp);
        if (std::isfinite(Fp) && Fp < F0) {
          z = zp;
          break;
        }
      }
    }
    tau = nextTau;
  }
  res.status = PathStatus::Failed;
  return res;
}

struct Reduced {
  Problem problem;
  std::vector<SparseRow> varMap;  // original variable -> affine in z
  bool infeasible = false;
  std::string diagnostic;
};

// Rewrites rows over x into rows over z using varMap.
SparseRow substitute(const AffineExpr& e, const std::vector<SparseRow>& varMap,
                     std::vector<double>& scratch, std::vector<int>& touched) {
  SparseRow out;
  out.c = e.constant();
  for (const auto& t : e.terms()) {
    const auto& m = varMap[static_cast<std::size_t>(t.var)];
    out.c += t.coef * m.c;
    for (std::size_t j = 0; j < m.idx.size(); ++j) {
      const int col = m.idx[j];
      if (scratch[static_cast<std::size_t>(col)] == 0.0) touched.push_back(col);
      scratch[static_cast<std::size_t>(col)] += t.coef * m.val[j];
      if (scratch[static_cast<std::size_t>(col)] == 0.0) scratch[static_cast<std::size_t>(col)] = 1e-300;
    }
  }
  std::sort(touched.begin(), touched.end());
  for (int col : touched) {
    const double v = scratch[static_cast<std::size_t>(col)];
    if (std::abs(v) > 1e-290) {
      out.idx.push_back(col);
      out.val.push_back(v);
    }
    scratch[static_cast<std::size_t>(col)] = 0.0;
  }
  touched.clear();
  return out;
}

Reduced reduce(const ConicProgram& program, const SolverOptions& opt) {
  Reduced R;
  const int n = program.num_vars();
  std::vector<int> freeIndex(static_cast<std::size_t>(n), -1);
  std::vector<int> freeVars;
  for (int j = 0; j < n; ++j) {
    const auto& v = program.variable(j);
    if (!(v.lower == v.upper)) {
      freeIndex[static_cast<std::size_t>(j)] = static_cast<int>(freeVars.size());
      freeVars.push_back(j);
    }
  }
  const int nf = static_cast<int>(freeVars.size());

  // Equality system E xf = b over free variables.
  std::vector<const AffineExpr*> eqRows;
  for (const auto& m : program.memberships()) {
    if (m.kind != ConeKind::Zero) continue;
    for (const auto& r : m.rows) eqRows.push_back(&r);
  }
  const auto me = static_cast<Eigen::Index>(eqRows.size());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(me, nf);
  Eigen::VectorXd b(me);
  for (Eigen::Index i = 0; i < me; ++i) {
    double rhs = -eqRows[static_cast<std::size_t>(i)]->constant();
    for (const auto& t : eqRows[static_cast<std::size_t>(i)]->terms()) {
      const int fi = freeIndex[static_cast<std::size_t>(t.var)];
      if (fi < 0) {
        rhs -= t.coef * program.variable(t.var).lower;
      } else {
        E(i, fi) += t.coef;
      }
    }
    b(i) = rhs;
  }

  // Gauss-Jordan elimination with full pivoting.
  std::vector<int> pivotCol;
  std::vector<Eigen::Index> pivotRow;
  {
    std::vector<bool> colUsed(static_cast<std::size_t>(nf), false);
    std::vector<bool> rowUsed(static_cast<std::size_t>(me), false);
    const double scale = me > 0 && nf > 0 ? std::max(1.0, E.cwiseAbs().maxCoeff()) : 1.0;
    for (;;) {
      double best = 0.0;
      Eigen::Index br = -1, bc = -1;
      for (Eigen::Index i = 0; i < me; ++i) {
        if (rowUsed[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index j = 0; j < nf; ++j) {
          if (colUsed[static_cast<std::size_t>(j)]) continue;
          if (std::abs(E(i, j)) > best) {
            best = std::abs(E(i, j));
            br = i;
            bc = j;
          }
        }
      }
      if (br < 0 || best <= 1e-12 * scale) break;
      rowUsed[static_cast<std::size_t>(br)] = true;
      colUsed[static_cast<std::size_t>(bc)] = true;
      const double p = E(br, bc);
      E.row(br) /= p;
      b(br) /= p;
      for (Eigen::Index i = 0; i < me; ++i) {
        if (i == br || E(i, bc) == 0.0) continue;
        const double f = E(i, bc);
        E.row(i) -= f * E.row(br);
        b(i) -= f * b(br);
        E(i, bc) = 0.0;
      }
      pivotCol.push_back(static_cast<int>(bc));
      pivotRow.push_back(br);
    }
    for (Eigen::Index i = 0; i < me; ++i) {
      if (!rowUsed[static_cast<std::size_t>(i)] &&
          std::abs(b(i)) > opt.feasibilityTolerance * std::max(1.0, b.cwiseAbs().maxCoeff())) {
        R.infeasible = true;
        R.diagnostic = "inconsistent equality rows";
        return R;
      }
    }
  }

  std::vector<bool> isPivot(static_cast<std::size_t>(nf), false);
  for (int c : pivotCol) isPivot[static_cast<std::size_t>(c)] = true;
  std::vector<int> zIndex(static_cast<std::size_t>(nf), -1);
  int nz = 0;
  for (int j = 0; j < nf; ++j) {
    if (!isPivot[static_cast<std::size_t>(j)]) zIndex[static_cast<std::size_t>(j)] = nz++;
  }

  R.varMap.assign(static_cast<std::size_t>(n), {});
  for (int j = 0; j < n; ++j) {
    const int fi = freeIndex[static_cast<std::size_t>(j)];
    auto& m = R.varMap[static_cast<std::size_t>(j)];
    if (fi < 0) {
      m.c = program.variable(j).lower;
    } else if (!isPivot[static_cast<std::size_t>(fi)]) {
      m.idx.push_back(zIndex[static_cast<std::size_t>(fi)]);
      m.val.push_back(1.0);
    }
  }
  for (std::size_t p = 0; p < pivotCol.size(); ++p) {
    const int fi = pivotCol[p];
    const Eigen::Index row = pivotRow[p];
    auto& m = R.varMap[static_cast<std::size_t>(freeVars[static_cast<std::size_t>(fi)])];
    m.c = b(row);
    for (int j = 0; j < nf; ++j) {
      if (isPivot[static_cast<std::size_t>(j)] || E(row, j) == 0.0) continue;
      m.idx.push_back(zIndex[static_cast<std::size_t>(j)]);
      m.val.push_back(-E(row, j));
    }
  }

  Problem& P = R.problem;
  P.n = nz;
  std::vector<double> scratch(static_cast<std::size_t>(std::max(nz, 1)), 0.0);
  std::vector<int> touched;
  const double tol = opt.feasibilityTolerance;

  auto add_cone = [&](ConeKind kind, double eta, std::vector<SparseRow> rows,
                      const Eigen::VectorXd& e) -> bool {
    bool constant = true;
    for (const auto& r : rows) constant = constant && r.idx.empty();
    if (constant) {
      ConeMembership m;
      m.kind = kind;
      m.exponent = eta;
      for (const auto& r : rows) m.rows.emplace_back(r.c);
      if (membership_residual(m, {}) > tol) {
        R.infeasible = true;
        R.diagnostic = std::string("constant ") + to_string(kind) + " membership violated";
        return false;
      }
      return true;
    }
    P.cones.push_back(make_cone(kind, eta, rows, e));
    P.nu += P.cones.back().degree;
    return true;
  };

  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  for (const auto& m : program.memberships()) {
    if (m.kind == ConeKind::Zero) continue;
    if (m.kind == ConeKind::Nonnegative) {
      for (const auto& r : m.rows) {
        if (!add_cone(ConeKind::Nonnegative, 0.5, {substitute(r, R.varMap, scratch, touched)}, one)) return R;
      }
      continue;
    }
    std::vector<SparseRow> rows;
    rows.reserve(m.rows.size());
    for (const auto& r : m.rows) rows.push_back(substitute(r, R.varMap, scratch, touched));
    if (!add_cone(m.kind, m.exponent, std::move(rows), cone_direction(m))) return R;
  }
  for (int j : freeVars) {
    const auto& v = program.variable(j);
    if (std::isfinite(v.lower)) {
      AffineExpr e = AffineExpr::var(j);
      e.add_constant(-v.lower);
      if (!add_cone(ConeKind::Nonnegative, 0.5, {substitute(e, R.varMap, scratch, touched)}, one)) return R;
    }
    if (std::isfinite(v.upper)) {
      AffineExpr e = AffineExpr::var(j, -1.0);
      e.add_constant(v.upper);
      if (!add_cone(ConeKind::Nonnegative, 0.5, {substitute(e, R.varMap, scratch, touched)}, one)) return R;
    }
  }
  const SparseRow obj = substitute(program.objective(), R.varMap, scratch, touched);
  P.c = Eigen::VectorXd::Zero(nz);
  for (std::size_t j = 0; j < obj.idx.size(); ++j) P.c(obj.idx[j]) = obj.val[j];
  P.c0 = obj.c;
  return R;
}

Eigen::VectorXd recover(const Reduced& R, const Eigen::VectorXd& z) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(R.varMap.size()));
  for (std::size_t j = 0; j < R.varMap.size(); ++j) {
    const auto& m = R.varMap[j];
    double v = m.c;
    for (std::size_t k = 0; k < m.idx.size(); ++k) v += m.val[k] * z(m.idx[k]);
    x(static_cast<Eigen::Index>(j)) = v;
  }
  return x;
}

// Minimum cone violation treated as infeasible without enlarging the ball.
constexpr double kGrossViolation = 1e-3;

Solution solve_impl(const ConicProgram& program, const SolverOptions& opt) {
  Solution sol;
  const auto diagnostics = validate_program(program);
  for (const auto& d : diagnostics) {
    // Missing convexity rows do not affect the continuous problem.
    if (d.find("missing convexity row") == std::string::npos) {
      sol.status = SolveStatus::NumericalFailure;
      sol.diagnostic = "invalid program: " + d;
      return sol;
    }
  }

  const Reduced R = reduce(program, opt);
  if (R.infeasible) {
    sol.status = SolveStatus::Infeasible;
    sol.diagnostic = R.diagnostic;
    return sol;
  }
  const Problem& P = R.problem;
  auto finish = [&](const Eigen::VectorXd& z, SolveStatus status, double gap) {
    sol.status = status;
    sol.primal = recover(R, z);
    sol.objectiveValue = program.objective().evaluate(sol.primal);
    sol.lowerBound = sol.objectiveValue - gap;
  };

  if (P.n == 0) {
    // Every variable is determined; constant memberships were checked in reduce.
    finish(Eigen::VectorXd(), SolveStatus::Optimal, 0.0);
    return sol;
  }

  // Phase I: minimize s subject to u_i(z) + s e_i in K_i and s >= -1.
  Eigen::VectorXd z = Eigen::VectorXd::Zero(P.n);
  double s0 = 0.0;
  bool interior = true;
  for (const auto& k : P.cones) {
    const Eigen::VectorXd u = P.local(k, z);
    double f;
    if (!barrier(k.kind, k.eta, u, &f, nullptr, nullptr)) interior = false;
    s0 = std::max(s0, shift_residual(k, u));
  }

  double shift = 0.0;
  if (!interior) {
    // The ball ||z|| <= radius keeps one-sided variables from drifting while
    // s is minimized; it is enlarged when it turns out to be active.
    bool resolved = false;
    for (double radius = 1e4; !resolved; radius *= 1e2) {
      Problem Q;
      Q.n = P.n + 1;
      Q.nu = P.nu + 3;
      Q.c = Eigen::VectorXd::Zero(Q.n);
      Q.c(P.n) = 1.0;
      for (const auto& k : P.cones) {
        Cone q = k;
        q.support.push_back(P.n);
        q.J.conservativeResize(Eigen::NoChange, q.J.cols() + 1);
        q.J.col(q.J.cols() - 1) = k.e;
        Q.cones.push_back(std::move(q));
      }
      Cone floor;
      floor.kind = ConeKind::Nonnegative;
      floor.support = {P.n};
      floor.J = Eigen::MatrixXd::Ones(1, 1);
      floor.h = Eigen::VectorXd::Ones(1);
      floor.degree = 1;
      Q.cones.push_back(floor);
      Cone ball;
      ball.kind = ConeKind::SecondOrder;
      ball.degree = 2;
      for (int j = 0; j < P.n; ++j) ball.support.push_back(j);
      ball.J = Eigen::MatrixXd::Zero(P.n + 1, P.n);
      ball.J.bottomRows(P.n).setIdentity();
      ball.h = Eigen::VectorXd::Zero(P.n + 1);
      ball.h(0) = radius;
      Q.cones.push_back(std::move(ball));

      Eigen::VectorXd w(Q.n);
      w.head(P.n) = z;
      w(P.n) = 1.5 * s0 + 1.0;
      SolverOptions phaseOpt = opt;
      phaseOpt.gapTolerance = 1e-9;
      // Stops once a strictly feasible point appears, or once the centered
      // lower bound on s shows a violation no larger ball would remove.
      const PathResult pr = path_follow(Q, w, phaseOpt, [&](const Eigen::VectorXd& v, double gap) {
        if (v(P.n) < -1e-4) return true;
        if (!std::isfinite(gap)) return false;
        const double bound = v(P.n) - gap;
        return bound > kGrossViolation ||
               (bound > opt.feasibilityTolerance && v.head(P.n).norm() < 0.5 * radius);
      });
      sol.solveStats.iterations += pr.newtonSteps;
      const double s = pr.z(P.n);
      const bool ballActive = pr.z.head(P.n).norm() > 0.5 * radius;
      if (pr.status == PathStatus::EarlyStop && s - pr.gap > opt.feasibilityTolerance) {
        sol.status = SolveStatus::Infeasible;
        sol.diagnostic = "phase I: minimum cone violation above " + std::to_string(s - pr.gap);
        return sol;
      }
      if (pr.status == PathStatus::EarlyStop || s < 0.0) {
        z = pr.z.head(P.n);
        resolved = true;
      } else if (pr.status == PathStatus::Converged || pr.status == PathStatus::Stalled) {
        if (s - pr.gap < 0.5 * opt.feasibilityTolerance) {
          // Feasible set without a numerically usable interior; solve the
          // problem with every cone widened by slightly more than s.
          shift = std::max(s, 0.0) + 1e-9;
          z = pr.z.head(P.n);
          resolved = true;
          if (shift > 0.5 * opt.feasibilityTolerance) {
            sol.status = SolveStatus::Infeasible;
            sol.diagnostic = "phase I: no point within tolerance";
            return sol;
          }
        } else if (!ballActive || radius >= 1e8) {
          sol.status = SolveStatus::Infeasible;
          sol.diagnostic = "phase I: minimum cone violation " + std::to_string(s);
          return sol;
        }
      } else {
        sol.status = SolveStatus::NumericalFailure;
        sol.diagnostic = "phase I did not converge";
        return sol;
      }
    }
  }

  Problem P2 = P;
  if (shift > 0.0) {
    for (auto& k : P2.cones) k.h += shift * k.e;
  }
  const PathResult pr = path_follow(P2, z, opt, nullptr);
  sol.solveStats.iterations += pr.newtonSteps;
  switch (pr.status) {
    case PathStatus::Converged:
      finish(pr.z, SolveStatus::Optimal, pr.gap);
      break;
    case PathStatus::Stalled:
      if (pr.gap <= 1e-6 * std::max(1.0, std::abs(P.c.dot(pr.z) + P.c0))) {
        finish(pr.z, SolveStatus::Optimal, pr.gap);
      } else {
        finish(pr.z, SolveStatus::NumericalFailure, pr.gap);
        sol.diagnostic = "line search stalled before the gap target";
      }
      break;
    case PathStatus::Unbounded:
      finish(pr.z, SolveStatus::Unbounded, kInf);
      sol.diagnostic = "iterates diverge along a decreasing direction";
      break;
    default:
      finish(pr.z, SolveStatus::NumericalFailure, kInf);
      sol.diagnostic = "Newton step limit reached";
      break;
  }
  return sol;
}

}  // namespace

Solution solve_relaxation(const ConicProgram& program, const SolverOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Solution sol = solve_impl(program, options);
  sol.solveStats.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  SolutionObserver obs;
  {
    std::lock_guard<std::mutex> lock(observerMutex);
    obs = observer;
  }
  if (obs) obs(program, sol);
  return sol;
}

void set_solution_observer(SolutionObserver fn) {
  std::lock_guard<std::mutex> lock(observerMutex);
  observer = std::move(fn);
}

}  // namespace dsmpc::conic
