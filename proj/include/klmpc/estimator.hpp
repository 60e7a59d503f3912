#pragma once

#include "klmpc/lifted_model.hpp"
#include "klmpc/linalg.hpp"

namespace klmpc {

/// Gains of the joint lifted-state / disturbance observer. The correction
/// term is L (-y_p + C z_hat + C_d d_hat), so a stable design makes
/// [[A, B_d], [0, I]] + [L_z; L_d] [C, C_d] Schur stable.
struct EstimatorGains {
  MatrixXd L_z;
  MatrixXd L_d;
};

struct EstimateState {
  VectorXd z_hat;
  VectorXd d_hat;
};

/// Covariance surrogates of the steady-state Kalman design: process noise
/// blkdiag(q_z I, q_d I) on (z, d), measurement noise r_y I.
struct EstimatorDesign {
  double q_z = 1e-4;
  double q_d = 1e-2;
  double r_y = 1e-2;

  void validate() const;
};

/// Augmented matrices A_a = [[A, B_d], [0, I]], C_a = [C, C_d].
MatrixXd augmented_A(const LiftedModel& model, const DisturbanceModel& dist);
MatrixXd augmented_C(const LiftedModel& model, const DisturbanceModel& dist);

/// Spectral radius of A_a + [L_z; L_d] C_a.
double estimator_spectral_radius(const LiftedModel& model,
                                 const DisturbanceModel& dist,
                                 const EstimatorGains& gains);

/// Steady-state predictor-form Kalman gains. Throws DesignError when the
/// Riccati iteration fails or the resulting observer is not Schur stable.
EstimatorGains design_gains(const LiftedModel& model,
                            const DisturbanceModel& dist,
                            const EstimatorDesign& design = {});

/// Innovation e = -y_p + C z_hat + C_d d_hat.
VectorXd innovation(const LiftedModel& model, const DisturbanceModel& dist,
                    const EstimateState& est, const VectorXd& y_p);

/// One observer step:
///   z_hat+ = A z_hat + B u + B_d d_hat + L_z e,  d_hat+ = d_hat + L_d e.
EstimateState update(const EstimatorGains& gains, const LiftedModel& model,
                     const DisturbanceModel& dist, const EstimateState& est,
                     const VectorXd& u, const VectorXd& y_p);

}  // namespace klmpc
