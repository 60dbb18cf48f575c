#include "dsmpc/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "dsmpc/errors.hpp"

namespace dsmpc {

namespace {

bool all_finite(const Eigen::MatrixXd& M) { return M.allFinite(); }

std::string shape(const Eigen::MatrixXd& M) {
  return std::to_string(M.rows()) + "x" + std::to_string(M.cols());
}

}  // namespace

void SystemModel::validate() const {
  if (A.rows() == 0 || A.rows() != A.cols()) {
    throw DimensionError("model.A must be square and non-empty, got " + shape(A));
  }
  if (B.rows() != A.rows() || B.cols() == 0) {
    throw DimensionError("model.B must have " + std::to_string(A.rows()) + " rows, got " +
                         shape(B));
  }
  if (G.rows() != A.rows() || G.cols() == 0) {
    throw DimensionError("model.G must have " + std::to_string(A.rows()) + " rows, got " +
                         shape(G));
  }
  if (!all_finite(A)) throw DimensionError("model.A has non-finite entries");
  if (!all_finite(B)) throw DimensionError("model.B has non-finite entries");
  if (!all_finite(G)) throw DimensionError("model.G has non-finite entries");
}

StackedSystem build_stacked(const SystemModel& model, int N) {
  model.validate();
  if (N < 1) throw DomainError("horizon must be >= 1");
  const int nx = model.nx(), nu = model.nu(), nw = model.nw();

  StackedSystem s;
  s.N = N;
  s.nx = nx;
  s.nu = nu;
  s.nw = nw;
  s.calA = Eigen::MatrixXd::Zero((N + 1) * nx, nx);
  s.calB = Eigen::MatrixXd::Zero((N + 1) * nx, N * nu);
  s.calG = Eigen::MatrixXd::Zero((N + 1) * nx, N * nw);

  // powers[k] = A^k
  std::vector<Eigen::MatrixXd> powers(N + 1);
  powers[0] = Eigen::MatrixXd::Identity(nx, nx);
  for (int k = 1; k <= N; ++k) powers[k] = model.A * powers[k - 1];

  for (int i = 0; i <= N; ++i) {
    s.calA.block(i * nx, 0, nx, nx) = powers[i];
    for (int j = 0; j < i; ++j) {
      s.calB.block(i * nx, j * nu, nx, nu) = powers[i - 1 - j] * model.B;
      s.calG.block(i * nx, j * nw, nx, nw) = powers[i - 1 - j] * model.G;
    }
  }
  return s;
}

Eigen::MatrixXd riccati_value(const SystemModel& model, const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& R, const RiccatiOptions& options) {
  const Eigen::MatrixXd& A = model.A;
  const Eigen::MatrixXd& B = model.B;
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < options.maxIterations; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd S = R + BtP * B;
    const Eigen::MatrixXd K = S.ldlt().solve(BtP * A);
    Eigen::MatrixXd next = Q + A.transpose() * P * A - (BtP * A).transpose() * K;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double step = (next - P).stableNorm();
    P = std::move(next);
    const double scale = P.stableNorm();
    if (!std::isfinite(step) || !std::isfinite(scale)) break;
    if (step <= options.tolerance * std::max(1.0, scale)) return P;
  }
  throw ConvergenceError("unstabilizable or ill-conditioned design: Riccati iteration did not converge");
}

FeedbackGain lq_gain(const SystemModel& model, const Eigen::VectorXd& qDiag,
                     const Eigen::VectorXd& rDiag, const RiccatiOptions& options) {
  model.validate();
  if (qDiag.size() != model.nx()) throw DimensionError("Q_F must have n_x entries");
  if (rDiag.size() != model.nu()) throw DimensionError("R_F must have n_u entries");
  if ((qDiag.array() < 0.0).any()) throw DomainError("Q_F must be positive semidefinite");
  if ((rDiag.array() <= 0.0).any()) throw DomainError("R_F must be positive definite");

  const Eigen::MatrixXd Q = qDiag.asDiagonal();
  const Eigen::MatrixXd R = rDiag.asDiagonal();
  const Eigen::MatrixXd P = riccati_value(model, Q, R, options);
  const Eigen::MatrixXd BtP = model.B.transpose() * P;

  FeedbackGain gain;
  gain.L = -(R + BtP * model.B).ldlt().solve(BtP * model.A);
  gain.qDiag = qDiag;
  gain.rDiag = rDiag;
  return gain;
}

Eigen::MatrixXd stacked_state_feedback(const StackedSystem& stacked, const Eigen::MatrixXd& L) {
  if (L.rows() != stacked.nu || L.cols() != stacked.nx) {
    throw DimensionError("feedback gain must be n_u x n_x, got " + shape(L));
  }
  Eigen::MatrixXd calL = Eigen::MatrixXd::Zero(stacked.N * stacked.nu, (stacked.N + 1) * stacked.nx);
  for (int i = 0; i < stacked.N; ++i) {
    calL.block(i * stacked.nu, i * stacked.nx, stacked.nu, stacked.nx) = L;
  }
  return calL;
}

Eigen::MatrixXd state_to_disturbance_feedback(const StackedSystem& stacked,
                                              const FeedbackGain& gain) {
  const int N = stacked.N, nx = stacked.nx, nu = stacked.nu, nw = stacked.nw;
  if (gain.L.rows() != nu || gain.L.cols() != nx) {
    throw DimensionError("feedback gain must be n_u x n_x, got " + shape(gain.L));
  }
  // K = (I - calB calL)^-1 calG. calB calL has block (i, j) = calB_ij L for
  // j < i, so block row i of K only needs rows 0..i-1.
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero((N + 1) * nx, N * nw);
  for (int i = 0; i <= N; ++i) {
    Eigen::MatrixXd row = stacked.calG.middleRows(i * nx, nx);
    for (int j = 0; j < std::min(i, N); ++j) {
      row += stacked.calB.block(i * nx, j * nu, nx, nu) * gain.L * K.middleRows(j * nx, nx);
    }
    K.middleRows(i * nx, nx) = row;
  }
  Eigen::MatrixXd calM(N * nu, N * nw);
  for (int i = 0; i < N; ++i) {
    calM.middleRows(i * nu, nu) = gain.L * K.middleRows(i * nx, nx);
  }
  return calM;
}

Trajectory simulate_trajectory(const StackedSystem& stacked, const Eigen::MatrixXd& calM,
                               const Eigen::VectorXd& V, const Eigen::VectorXd& x0,
                               const Eigen::VectorXd& W) {
  const int N = stacked.N;
  if (calM.rows() != N * stacked.nu || calM.cols() != N * stacked.nw) {
    throw DimensionError("calM must be N n_u x N n_w, got " + shape(calM));
  }
  if (V.size() != N * stacked.nu) throw DimensionError("V must have N n_u entries");
  if (x0.size() != stacked.nx) throw DimensionError("x0 must have n_x entries");
  if (W.size() != N * stacked.nw) throw DimensionError("W must have N n_w entries");

  Trajectory out;
  out.U = calM * W + V;
  out.X = stacked.calA * x0 + stacked.calB * out.U + stacked.calG * W;
  out.X.head(stacked.nx) = x0;
  return out;
}

Trajectory simulate_state_feedback(const SystemModel& model, int N, const Eigen::MatrixXd& L,
                                   const Eigen::VectorXd& V, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& W) {
  const int nx = model.nx(), nu = model.nu(), nw = model.nw();
  Trajectory out;
  out.X.resize((N + 1) * nx);
  out.U.resize(N * nu);
  Eigen::VectorXd x = x0;
  out.X.head(nx) = x;
  for (int i = 0; i < N; ++i) {
    const Eigen::VectorXd u = L * x + V.segment(i * nu, nu);
    out.U.segment(i * nu, nu) = u;
    x = model.A * x + model.B * u + model.G * W.segment(i * nw, nw);
    out.X.segment((i + 1) * nx, nx) = x;
  }
  return out;
}

double spectral_radius(const Eigen::MatrixXd& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& block, int count) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(block.rows() * count, block.cols() * count);
  for (int i = 0; i < count; ++i) {
    out.block(i * block.rows(), i * block.cols(), block.rows(), block.cols()) = block;
  }
  return out;
}

std::vector<double> sample_grid_values(const GainGridSpec& grid, std::uint64_t seed) {
  if (grid.NL < 1) throw DomainError("gain grid NL must be >= 1");
  if (!(grid.rMin > 0.0) || grid.rMax < grid.rMin) {
    throw DomainError("gain grid requires 0 < rMin <= rMax");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(grid.rMin, grid.rMax);
  std::vector<double> r(grid.NL);
  for (double& v : r) v = dist(rng);
  std::sort(r.begin(), r.end());
  return r;
}

GainLibrary build_gain_library(const StackedSystem& stacked,
                               const std::vector<Eigen::MatrixXd>& gains,
                               const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd calR = block_diagonal(R, stacked.N);
  GainLibrary lib;
  for (const auto& L : gains) {
    FeedbackGain g;
    g.L = L;
    lib.calM.push_back(state_to_disturbance_feedback(stacked, g));
    lib.feedbackCost.push_back((lib.calM.back().transpose() * calR * lib.calM.back()).trace());
    lib.gains.push_back(std::move(g));
  }
  return lib;
}

GainLibrary build_gain_library(const SystemModel& model, const StackedSystem& stacked,
                               const GainGridSpec& grid, const Eigen::MatrixXd& R,
                               std::uint64_t seed) {
  const int nx = model.nx(), nu = model.nu();
  if (static_cast<int>(grid.stateWeights.size()) != nx) {
    throw DimensionError("gainGrid.stateWeights must have n_x entries");
  }
  if (grid.stateSlot < 0 || grid.stateSlot >= nx) {
    throw DimensionError("gainGrid.stateSlot out of range");
  }
  const std::vector<double> r = sample_grid_values(grid, seed);
  const int coords = 1 + nu;
  long total = 1;
  for (int c = 0; c < coords; ++c) total *= grid.NL;

  const Eigen::MatrixXd calR = block_diagonal(R, stacked.N);
  GainLibrary lib;
  std::vector<int> index(coords, 0);
  for (long k = 0; k < total; ++k) {
    long rest = k;
    for (int c = coords - 1; c >= 0; --c) {
      index[c] = static_cast<int>(rest % grid.NL);
      rest /= grid.NL;
    }
    Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(grid.stateWeights.data(), nx);
    q(grid.stateSlot) = r[index[0]];
    Eigen::VectorXd rr(nu);
    for (int j = 0; j < nu; ++j) rr(j) = r[index[1 + j]];

    FeedbackGain gain = lq_gain(model, q, rr);
    lib.calM.push_back(state_to_disturbance_feedback(stacked, gain));
    lib.feedbackCost.push_back((lib.calM.back().transpose() * calR * lib.calM.back()).trace());
    lib.gains.push_back(std::move(gain));
  }
  return lib;
}

}  // namespace dsmpc
