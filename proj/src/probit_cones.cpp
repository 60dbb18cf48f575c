#include "dsmpc/probit_cones.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "dsmpc/errors.hpp"

namespace dsmpc {

using conic::AffineExpr;
using conic::ConicProgram;
using conic::VarId;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// AS241 (PPND16), about 1e-16 relative accuracy before polishing.
double as241(double p) {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
             1.3314166789178437745e+2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
             4.2313330701600911252e+1) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

// Valid for p <= 0.5, where Phi is evaluated in the lower tail and small p
// keeps full relative accuracy through the Newton step.
double lower_tail_probit(double p) {
  double x = as241(p);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  if (pdf > 0.0) x -= (normal_cdf(x) - p) / pdf;
  return x;
}

}  // namespace

double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("probit argument must lie in (0,1)");
  if (p > 0.5) return -lower_tail_probit(1.0 - p);
  return lower_tail_probit(p);
}

double probit_complement(double g) {
  if (!(g > 0.0 && g < 1.0)) throw DomainError("probit argument must lie in (0,1)");
  if (g > 0.5) return lower_tail_probit(1.0 - g);
  return -lower_tail_probit(g);
}

double lambert_w0(double z) {
  if (!(z >= 0.0)) throw DomainError("lambert_w0 requires z >= 0");
  if (z == 0.0) return 0.0;
  if (std::isinf(z)) return z;
  double w = std::log1p(z);
  for (int it = 0; it < 100; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - z;
    const double d = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
    const double step = f / d;
    w -= step;
    if (std::abs(step) <= 1e-16 * (1.0 + std::abs(w))) break;
  }
  return w;
}

const char* to_string(ApproxKind kind) {
  switch (kind) {
    case ApproxKind::Inv: return "inv";
    case ApproxKind::Root: return "root";
    case ApproxKind::Log: return "log";
  }
  return "?";
}

ApproxKind parse_approx_kind(const std::string& name) {
  if (name == "inv") return ApproxKind::Inv;
  if (name == "root") return ApproxKind::Root;
  if (name == "log") return ApproxKind::Log;
  throw DomainError("unknown formulation '" + name + "' (expected inv, root or log)");
}

double curvature_cap(ApproxKind kind) {
  switch (kind) {
    case ApproxKind::Inv: return 0.078;
    case ApproxKind::Root: return 0.239;
    case ApproxKind::Log: return 0.158;
  }
  return 0.0;
}

ApproxParams table_params(ApproxKind kind) {
  ApproxParams p;
  p.kind = kind;
  p.intervalMax = curvature_cap(kind);
  switch (kind) {
    case ApproxKind::Inv:
      p.alpha = 0.1012;
      p.beta = 0.6406;
      p.lambda = 2.6874;
      break;
    case ApproxKind::Root:
      p.alpha = 2.7465e3;
      p.beta = -0.0992;
      p.lambda = -1.3059;
      p.phi = 1.5798;
      p.rho = -0.0435;
      break;
    case ApproxKind::Log:
      p.alpha = 3.6416e2;
      p.beta = -0.1261;
      p.lambda = -2.8898;
      p.phi = 0.7186;
      p.rho = -0.0651;
      break;
  }
  return p;
}

namespace {

double psi_raw(const ApproxParams& p, double g) {
  if (p.kind == ApproxKind::Inv) return p.beta * std::pow(g, p.alpha) + p.lambda * g + p.phi;
  return p.beta * lambert_w0(p.alpha * g) + p.lambda * g + p.phi + p.rho * std::log(g);
}

}  // namespace

const ApproxParams& certified_params(ApproxKind kind) {
  static const ApproxParams inv = enforce_bound(table_params(ApproxKind::Inv), kRiskFloor, 0.078);
  static const ApproxParams root = enforce_bound(table_params(ApproxKind::Root), kRiskFloor, 0.239);
  static const ApproxParams log = enforce_bound(table_params(ApproxKind::Log), kRiskFloor, 0.158);
  switch (kind) {
    case ApproxKind::Inv: return inv;
    case ApproxKind::Root: return root;
    case ApproxKind::Log: return log;
  }
  return log;
}

double psi_eval(const ApproxParams& params, double g) {
  if (!(g > 0.0) || g > params.intervalMax * (1.0 + 1e-12)) {
    throw DomainError("psi_eval: risk " + std::to_string(g) + " outside (0, " +
                      std::to_string(params.intervalMax) + "]");
  }
  return psi_raw(params, g);
}

double exact_composition(ApproxKind kind, double g) {
  const double z = probit_complement(g);
  switch (kind) {
    case ApproxKind::Inv: return 1.0 / z;
    case ApproxKind::Root: return std::sqrt(z);
    case ApproxKind::Log: return std::log(z);
  }
  return 0.0;
}

double signed_violation(const ApproxParams& params, double g) {
  const double d = psi_raw(params, g) - exact_composition(params.kind, g);
  return params.kind == ApproxKind::Inv ? d : -d;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (!(lo > 0.0) || hi < lo || n < 2) throw DomainError("log_grid requires 0 < lo <= hi, n >= 2");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) out[i] = std::exp(a + (b - a) * i / (n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

namespace {

// Maximizes f on [a, b] (in log g) by golden section.
double golden_max(const std::function<double(double)>& f, double a, double b, int iters) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  double best = std::max({f(a), f(b), fc, fd});
  for (int i = 0; i < iters; ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
    best = std::max({best, fc, fd});
  }
  return best;
}

}  // namespace

double max_bound_violation(const ApproxParams& params, double lo, double hi) {
  const int n = 20000;
  const auto grid = log_grid(lo, hi, n);
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = signed_violation(params, grid[i]);

  double best = *std::max_element(v.begin(), v.end());
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool left = i == 0 || v[i] >= v[i - 1];
    const bool right = i + 1 == v.size() || v[i] >= v[i + 1];
    if (left && right) peaks.push_back(i);
  }
  std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  if (peaks.size() > 8) peaks.resize(8);
  auto f = [&](double s) { return signed_violation(params, std::exp(s)); };
  for (std::size_t i : peaks) {
    const double a = std::log(grid[i == 0 ? 0 : i - 1]);
    const double b = std::log(grid[std::min(i + 1, grid.size() - 1)]);
    best = std::max(best, golden_max(f, a, b, 60));
  }
  return best;
}

ApproxParams enforce_bound(ApproxParams params, double lo, double hi) {
  const double v = max_bound_violation(params, lo, hi);
  const double shift = v + 1e-12;
  params.phi += params.kind == ApproxKind::Inv ? -shift : shift;
  return params;
}

namespace {

struct LinearFit {
  Eigen::VectorXd coef;
  double maxErr = conic::kInf;
};

// Lawson's iteratively reweighted least squares, which drives the weighted
// L2 fit toward the minimax (uniform) fit.
LinearFit lawson_fit(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int iters) {
  const auto m = A.rows();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  LinearFit best;
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::VectorXd x =
        (sw.asDiagonal() * A).colPivHouseholderQr().solve(sw.asDiagonal() * b);
    const Eigen::VectorXd e = (A * x - b).cwiseAbs();
    const double maxErr = e.maxCoeff();
    if (maxErr < best.maxErr) {
      best.coef = x;
      best.maxErr = maxErr;
    }
    const Eigen::VectorXd nw = w.cwiseProduct(e);
    const double total = nw.sum();
    if (!(total > 0.0)) break;
    w = nw / total;
  }
  return best;
}

struct Candidate {
  ApproxParams params;
  double maxErr = conic::kInf;
};

Candidate fit_at(ApproxKind kind, double alpha, const std::vector<double>& grid,
                 const Eigen::VectorXd& target, int iters) {
  const auto m = static_cast<Eigen::Index>(grid.size());
  const bool inv = kind == ApproxKind::Inv;
  Eigen::MatrixXd A(m, inv ? 3 : 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double g = grid[static_cast<std::size_t>(i)];
    A(i, 0) = inv ? std::pow(g, alpha) : lambert_w0(alpha * g);
    A(i, 1) = g;
    A(i, 2) = 1.0;
    if (!inv) A(i, 3) = std::log(g);
  }
  const LinearFit lf = lawson_fit(A, target, iters);
  Candidate c;
  c.params.kind = kind;
  c.params.alpha = alpha;
  c.params.beta = lf.coef(0);
  c.params.lambda = lf.coef(1);
  c.params.phi = lf.coef(2);
  if (!inv) c.params.rho = lf.coef(3);
  // Curvature (and hence conic representability) needs beta > 0 for inv and
  // beta, rho <= 0 for the Lambert forms.
  const bool signsOk = inv ? c.params.beta > 0.0 : (c.params.beta <= 0.0 && c.params.rho <= 0.0);
  c.maxErr = signsOk ? lf.maxErr : conic::kInf;
  return c;
}

}  // namespace

FitReport fit_psi(ApproxKind kind, double lo, double hi, int gridSize) {
  const double cap = curvature_cap(kind);
  if (!(lo > 0.0) || !(hi > lo) || hi > cap * (1.0 + 1e-12)) {
    throw DomainError(std::string("fit_psi: interval must lie in (0, ") + std::to_string(cap) +
                      "] for " + to_string(kind));
  }
  if (gridSize < 50) throw DomainError("fit_psi: gridSize must be >= 50");

  const auto grid = log_grid(lo, hi, gridSize);
  Eigen::VectorXd target(gridSize);
  for (int i = 0; i < gridSize; ++i) target(i) = exact_composition(kind, grid[i]);

  // Outer search over the nonlinear parameter: the exponent for inv, log10
  // of the Lambert scale otherwise.
  const bool inv = kind == ApproxKind::Inv;
  const double sLo = inv ? 0.01 : 0.0;
  const double sHi = inv ? 0.99 : 5.0;
  auto toAlpha = [&](double s) { return inv ? s : std::pow(10.0, s); };
  auto score = [&](double s, int iters) { return fit_at(kind, toAlpha(s), grid, target, iters); };

  const int scan = 50;
  double bestS = sLo;
  double bestErr = conic::kInf;
  for (int i = 0; i <= scan; ++i) {
    const double s = sLo + (sHi - sLo) * i / scan;
    const double e = score(s, 60).maxErr;
    if (e < bestErr) {
      bestErr = e;
      bestS = s;
    }
  }
  if (!std::isfinite(bestErr)) {
    throw DomainError("approximation family inadequate on interval");
  }
  double a = std::max(sLo, bestS - (sHi - sLo) / scan);
  double b = std::min(sHi, bestS + (sHi - sLo) / scan);
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = score(c, 60).maxErr, fd = score(d, 60).maxErr;
  for (int i = 0; i < 40; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = score(c, 60).maxErr;
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = score(d, 60).maxErr;
    }
  }
  const double sBest = fc < fd ? c : d;
  Candidate best = score(sBest, 200);
  if (!std::isfinite(best.maxErr)) best = score(bestS, 200);
  best.params.intervalMax = hi;

  FitReport report;
  const double before = best.params.phi;
  report.params = enforce_bound(best.params, lo, hi);
  report.enforcementShift = report.params.phi - before;
  for (int i = 0; i < gridSize; ++i) {
    report.maxAbsResidual =
        std::max(report.maxAbsResidual, std::abs(psi_raw(report.params, grid[i]) - target(i)));
  }
  if (report.maxAbsResidual > 0.05) {
    throw DomainError("approximation family inadequate on interval");
  }
  return report;
}

std::size_t encode_power_hypograph(ConicProgram& program, const AffineExpr& g, VarId s,
                                   double exponent) {
  if (!(exponent > 0.0 && exponent < 1.0)) {
    throw DomainError("power cone exponent must lie in (0,1)");
  }
  return program.add_power(g, AffineExpr(1.0), AffineExpr::var(s), exponent);
}

VarId encode_w0_hypograph(ConicProgram& program, const AffineExpr& z, VarId y) {
  const VarId u = program.add_variable("w0_aux", 0.0, conic::kInf);
  program.add_exponential(z, AffineExpr::var(y), AffineExpr::var(u));
  program.add_rotated_second_order({AffineExpr(0.5), AffineExpr::var(u), AffineExpr::var(y)});
  return u;
}

std::size_t encode_log_hypograph(ConicProgram& program, const AffineExpr& z, const AffineExpr& t) {
  return program.add_exponential(z, AffineExpr(1.0), t);
}

VarId encode_psi_bound(ConicProgram& program, const ApproxParams& params, const AffineExpr& g) {
  const VarId t = program.add_variable(std::string("psi_") + to_string(params.kind));
  if (params.kind == ApproxKind::Inv) {
    if (!(params.beta > 0.0)) throw DomainError("inv approximation needs beta > 0");
    const VarId s = program.add_variable("pow_aux");
    encode_power_hypograph(program, g, s, params.alpha);
    AffineExpr rhs = params.beta * AffineExpr::var(s) + params.lambda * g;
    rhs.add_constant(params.phi);
    program.add_nonnegative(rhs - AffineExpr::var(t));
    return t;
  }
  if (params.beta > 0.0 || params.rho > 0.0 || !(params.alpha > 0.0)) {
    throw DomainError("Lambert approximation needs alpha > 0, beta <= 0, rho <= 0");
  }
  AffineExpr rhs = params.lambda * g;
  rhs.add_constant(params.phi);
  if (params.beta != 0.0) {
    const VarId w = program.add_variable("w0", 0.0, conic::kInf);
    encode_w0_hypograph(program, params.alpha * g, w);
    rhs.add(w, params.beta);
  }
  if (params.rho != 0.0) {
    const VarId l = program.add_variable("log_aux");
    encode_log_hypograph(program, g, AffineExpr::var(l));
    rhs.add(l, params.rho);
  }
  program.add_nonnegative(AffineExpr::var(t) - rhs);
  return t;
}

}  // namespace dsmpc
