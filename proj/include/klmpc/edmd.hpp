#pragma once

#include <cstdint>
#include <vector>

#include "klmpc/lifted_model.hpp"
#include "klmpc/linalg.hpp"
#include "klmpc/observables.hpp"
#include "klmpc/plant.hpp"

namespace klmpc {

struct SnapshotMeta {
  std::uint64_t seed = 0;
  int n_traj = 0;
  int samples_per_traj = 0;
  double dt = 1.0;
  int discarded = 0;
};

/// Snapshot pairs (x_j, u_j, x_j+) stored column-wise: row j of X, U, X_next
/// is one pair. traj_id and k locate the pair in its generating trajectory.
struct SnapshotSet {
  std::vector<int> traj_id;
  std::vector<int> k;
  MatrixXd X;
  MatrixXd U;
  MatrixXd X_next;
  SnapshotMeta meta;

  Eigen::Index size() const { return X.rows(); }
  int n_x() const { return static_cast<int>(X.cols()); }
  int n_u() const { return static_cast<int>(U.cols()); }
  /// Throws ValidationError on inconsistent shapes or non-finite entries.
  void validate() const;
};

/// Random excitation of the reactor for identification.
///
/// Each trajectory starts uniformly in x0_center * (1 +/- x0_spread). Both
/// inputs follow randomized proportional loops clipped to the input box:
///   Tc = jacket_nominal + temp_gain * (T_ref - T) + Tc_dither,
///   F  = F0 + level_gain * (h - h_ref) + F_dither,
/// with T_ref, h_ref and both dithers redrawn uniformly every hold_steps
/// samples. Open-loop uniform inputs drain or flood the tank and ignite the
/// reactor (T > 400 K) at low levels, far outside the operating region.
struct DataGenConfig {
  int n_traj = 1000;
  double T_horizon = 500.0;
  double dt = 1.0;
  int substeps = 10;
  Eigen::Vector3d x0_center{0.878, 324.5, 0.659};
  Eigen::Vector3d x0_spread{0.1, 0.03, 0.1};
  Eigen::Vector2d u_min{290.0, 0.04};
  Eigen::Vector2d u_max{315.0, 0.16};
  int hold_steps = 15;
  double level_gain = 0.1;
  double level_ref_min = 0.5;
  double level_ref_max = 1.0;
  double flow_dither = 0.005;
  double jacket_nominal = 300.0;
  double temp_gain = 0.5;
  double temp_ref_min = 316.0;
  double temp_ref_max = 329.0;
  double jacket_dither = 3.0;
  std::uint64_t seed = 42;
  /// 0 = hardware concurrency.
  int threads = 0;

  int samples_per_traj() const;
  void validate() const;
};

/// Simulates cfg.n_traj trajectories. Trajectories that leave the validity
/// region are dropped; more than 10% dropped is an IdentificationError.
/// Output is bit-identical for a given seed regardless of thread count.
SnapshotSet generate(const CstrParams& params, const DataGenConfig& cfg);

struct IdentifyOptions {
  double ridge = 1e-8;
  bool scale_columns = true;
};

struct IdentificationResult {
  LiftedModel model;
  /// Sum of squared one-step lifted residuals.
  double objective = 0.0;
  /// Root mean square of the lifted residual per observable.
  VectorXd residual_rms;
  /// Same for the output fit.
  VectorXd output_residual_rms;
  Eigen::Index n_pairs = 0;
};

/// Least-squares fit of (A, B) on lifted snapshots and of C with y = x.
IdentificationResult identify(const SnapshotSet& data,
                              const ObservableLibrary& lib,
                              const IdentifyOptions& opts = {});

/// Sum of ||psi(x+) - A psi(x) - B u||^2 over the data.
double lifted_objective(const SnapshotSet& data, const ObservableLibrary& lib,
                        const MatrixXd& A, const MatrixXd& B);

struct NrmseReport {
  VectorXd nrmse;
  VectorXd rmse;
  /// (K+1) x n_y trajectories sampled at t = 0..K.
  MatrixXd plant_outputs;
  MatrixXd model_outputs;
};

/// Open-loop validation: runs plant and model from x0 under the same inputs
/// (rows of `inputs`) and returns per-output NRMSE = RMSE / (y_max - y_min)
/// of the plant output. Throws DomainError on a zero plant output range.
NrmseReport nrmse(const LiftedModel& model, const ObservableLibrary& lib,
                  const DiscretePlant& plant, const VectorXd& x0,
                  const MatrixXd& inputs);

/// Step changes in Tc (-3..+2 K) every 15 min with 2-sample F pulses (+/-0.005)
/// at the start of each
/// window, centred on the steady input u_ss.
MatrixXd step_pulse_validation_inputs(const Eigen::Vector2d& u_ss,
                                      int windows = 6, int window_len = 15);

}  // namespace klmpc
