#pragma once

#include "klmpc/lifted_model.hpp"
#include "klmpc/linalg.hpp"

namespace klmpc {

/// Box l <= v <= u.
struct Bounds {
  VectorXd lower;
  VectorXd upper;

  Eigen::Index size() const { return lower.size(); }
  /// Throws DimensionError on size mismatch and ValidationError when empty.
  void validate(Eigen::Index n, const char* what) const;
};

struct TargetSpec {
  VectorXd y_bar_c;  ///< set-point of the controlled variables
  VectorXd z_bar_s;  ///< desired lifted target
  VectorXd u_bar_s;  ///< desired steady input
  MatrixXd Q_z_bar;
  MatrixXd Q_u_bar;
  Bounds u_bounds;
  Bounds y_bounds;
  /// Relax infeasible output bounds with an L1 penalty instead of failing.
  bool soft_outputs = true;
  double soft_weight = 1e4;
  /// Tikhonov weight on z_bar - z_bar_s (resolves non-unique targets).
  double tikhonov = 1e-8;

  void validate(const LiftedModel& model, const ControlledVariableMap& H) const;
};

struct TargetPair {
  VectorXd z_bar;
  VectorXd u_bar;
  /// Output target C z_bar + C_d d_hat.
  VectorXd y_bar;
  /// True when the output bounds had to be relaxed.
  bool softened = false;
  /// Largest output-bound relaxation used (0 unless softened).
  double max_slack = 0.0;
};

/// Residuals of the steady-state equalities
///   (A - I) z + B u + B_d d = 0,   H (C z + C_d d) - y_bar_c = 0.
struct TargetResiduals {
  double equilibrium = 0.0;
  double setpoint = 0.0;
};
TargetResiduals target_residuals(const LiftedModel& model,
                                 const DisturbanceModel& dist,
                                 const ControlledVariableMap& H,
                                 const VectorXd& y_bar_c, const VectorXd& d_hat,
                                 const VectorXd& z_bar, const VectorXd& u_bar);

/// Steady-state target problem:
///   min ||u - u_s||^2_Qu + ||z - z_s||^2_Qz
///   s.t. [A - I, B; HC, 0] [z; u] = [-B_d d; y_bar_c - H C_d d],
///        u in u_bounds,  C z + C_d d in y_bounds.
/// Throws InfeasibleError when the equalities are inconsistent or the input
/// bounds cannot be met (output bounds are softened when allowed).
TargetPair solve_target(const LiftedModel& model, const DisturbanceModel& dist,
                        const ControlledVariableMap& H, const TargetSpec& spec,
                        const VectorXd& d_hat);

}  // namespace klmpc
