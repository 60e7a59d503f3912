#pragma once

#include "klmpc/lifted_model.hpp"
#include "klmpc/linalg.hpp"
#include "klmpc/observables.hpp"

namespace klmpc {

/// h(z, d, z_bar) = N_bar z_bar - K_z z - K_d d.
struct StabilizingLaw {
  MatrixXd K_z;
  MatrixXd N_bar;
  MatrixXd K_d;
};

/// LQR weights for K_z. An empty Q means D_x' Q_v D_x + 1e-6 I; an empty R
/// means the identity.
struct LqrWeights {
  MatrixXd Q;
  MatrixXd R;
};

/// K_z by discrete LQR, then
///   N_bar = pinv((I - A + B K_z)^{-1} B),
///   K_d   = N_bar (I - A + B K_z)^{-1} B_d.
/// Throws DesignError when the Riccati solve fails or A - B K_z is not Schur.
StabilizingLaw design_law(const LiftedModel& model, const DisturbanceModel& dist,
                          const LyapunovSpec& spec, const LqrWeights& weights = {});

VectorXd stabilizing_input(const StabilizingLaw& law, const VectorXd& z,
                           const VectorXd& d_hat, const VectorXd& z_bar);

/// N_bar z_bar - K_d d for a target pair (z_bar, u_bar) that is an
/// equilibrium under d, evaluated as u_bar + K_z z_bar. The two agree
/// exactly for consistent targets; this form avoids amplifying round-off
/// through (I - A + B K_z)^{-1} when A - B K_z has eigenvalues close to 1.
VectorXd target_feedforward(const StabilizingLaw& law, const VectorXd& z_bar,
                            const VectorXd& u_bar);

/// How the one-step decrease constraint F_v z_1 <= rhs is formed.
///  kLifted: rhs = F_v z_1^h, i.e. the lifted Lyapunov observable must not
///           exceed its value under the stabilizing law. This is linear in
///           (z_hat, d_hat, z_bar) and is the form the explicit control law
///           is derived for.
///  kExact:  rhs = V(D_x (z_1^h - z_bar)) - c_shift, the quadratic Lyapunov
///           function evaluated at the physical part of z_1^h.
enum class DecreaseForm { kLifted, kExact };

const char* to_string(DecreaseForm f);
DecreaseForm decrease_form_from_string(const std::string& s);

struct LyapunovConstraintData {
  RowVectorXd F_v;
  double c_shift = 0.0;
  /// r - z_bar' W z_bar + z_s' W z_s.
  double rhs_region = 0.0;
  /// A z0 + B h + B_d d_hat with h = target_feedforward(z_bar, u_bar) - K_z z0.
  VectorXd z1_h;
  /// V(D_x (z1_h - z_bar)) - z_bar' W z_bar + z_s' W z_s.
  double rhs_decrease = 0.0;
  /// F_v z1_h.
  double rhs_decrease_lifted = 0.0;

  double decrease_rhs(DecreaseForm form) const {
    return form == DecreaseForm::kLifted ? rhs_decrease_lifted : rhs_decrease;
  }
};

LyapunovConstraintData build_constraints(const LyapunovSpec& spec,
                                         const StabilizingLaw& law,
                                         const LiftedModel& model,
                                         const DisturbanceModel& dist,
                                         const VectorXd& z0, const VectorXd& d_hat,
                                         const VectorXd& z_bar,
                                         const VectorXd& u_bar);

}  // namespace klmpc
