#pragma once

/**
 * @file
 * @brief Horizon-stacked linear prediction, LQ gain design and the
 * state-to-disturbance feedback map.
 *
 * Stacking conventions for a horizon N:
 *   X = [x_0; ...; x_N]        ((N+1) n_x)
 *   U = [u_0; ...; u_{N-1}]    (N n_u)
 *   W = [w_0; ...; w_{N-1}]    (N n_w)
 *   X = calA x_0 + calB U + calG W
 */

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace dsmpc {

/// x+ = A x + B u + G w
struct SystemModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd G;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  int nw() const { return static_cast<int>(G.cols()); }

  /// Throws DimensionError naming "model.A", "model.B" or "model.G".
  void validate() const;
};

struct StackedSystem {
  Eigen::MatrixXd calA;  ///< (N+1)nx x nx
  Eigen::MatrixXd calB;  ///< (N+1)nx x N nu
  Eigen::MatrixXd calG;  ///< (N+1)nx x N nw
  int N = 0;
  int nx = 0;
  int nu = 0;
  int nw = 0;
};

struct FeedbackGain {
  Eigen::MatrixXd L;      ///< nu x nx, applied as u = L x
  Eigen::VectorXd qDiag;  ///< state weights used in the design
  Eigen::VectorXd rDiag;  ///< input weights used in the design
};

struct GainLibrary {
  std::vector<FeedbackGain> gains;
  std::vector<Eigen::MatrixXd> calM;  ///< N nu x N nw, strictly block lower-triangular
  std::vector<double> feedbackCost;   ///< tr(M^T calR M)

  std::size_t size() const { return gains.size(); }
};

StackedSystem build_stacked(const SystemModel& model, int N);

struct RiccatiOptions {
  double tolerance = 1e-12;  // relative Frobenius increment
  int maxIterations = 100000;
};

/// Infinite-horizon discrete LQ gain by fixed-point iteration of the Riccati
/// difference equation. Returns L = -(R + B'PB)^-1 B'PA.
FeedbackGain lq_gain(const SystemModel& model, const Eigen::VectorXd& qDiag,
                     const Eigen::VectorXd& rDiag, const RiccatiOptions& options = {});

/// Riccati value matrix P for the same problem; exposed for tests.
Eigen::MatrixXd riccati_value(const SystemModel& model, const Eigen::MatrixXd& Q,
                              const Eigen::MatrixXd& R, const RiccatiOptions& options = {});

/// calL = blockdiag(L, ..., L) padded with a zero last block column.
Eigen::MatrixXd stacked_state_feedback(const StackedSystem& stacked, const Eigen::MatrixXd& L);

/// calM = calL (I - calB calL)^-1 calG, computed by forward block substitution.
Eigen::MatrixXd state_to_disturbance_feedback(const StackedSystem& stacked,
                                              const FeedbackGain& gain);

struct Trajectory {
  Eigen::VectorXd X;
  Eigen::VectorXd U;
};

/// U = calM W + V, X = calA x0 + calB V + (calG + calB calM) W.
Trajectory simulate_trajectory(const StackedSystem& stacked, const Eigen::MatrixXd& calM,
                               const Eigen::VectorXd& V, const Eigen::VectorXd& x0,
                               const Eigen::VectorXd& W);

/// Closed-loop rollout with per-step state feedback u_i = L x_i + v_i.
Trajectory simulate_state_feedback(const SystemModel& model, int N, const Eigen::MatrixXd& L,
                                   const Eigen::VectorXd& V, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& W);

double spectral_radius(const Eigen::MatrixXd& M);

/// Parameters of the LQ design grid: Q_F = diag(stateWeights) with
/// stateWeights[stateSlot] replaced by r_m; R_F = diag(r_n, r_p, ...), one
/// grid coordinate per input. N_F = NL^(1 + nu).
struct GainGridSpec {
  int NL = 1;
  double rMin = 0.1;
  double rMax = 0.1;
  std::vector<double> stateWeights;
  int stateSlot = 0;
};

/// Uniform samples r_1 <= ... <= r_NL drawn with the given seed.
std::vector<double> sample_grid_values(const GainGridSpec& grid, std::uint64_t seed);

/// Builds every gain of the grid (index order m, n, p, ... with the last
/// coordinate fastest), their disturbance-feedback blocks and feedback costs
/// tr(M' blockdiag(R) M).
GainLibrary build_gain_library(const SystemModel& model, const StackedSystem& stacked,
                               const GainGridSpec& grid, const Eigen::MatrixXd& R,
                               std::uint64_t seed);

/// Library from explicitly supplied gains.
GainLibrary build_gain_library(const StackedSystem& stacked,
                               const std::vector<Eigen::MatrixXd>& gains,
                               const Eigen::MatrixXd& R);

/// blockdiag(R, ..., R) with N blocks.
Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& block, int count);

}  // namespace dsmpc
