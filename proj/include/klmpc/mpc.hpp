#pragma once

#include <string>
#include <vector>

#include "klmpc/lifted_model.hpp"
#include "klmpc/linalg.hpp"
#include "klmpc/lyapunov.hpp"
#include "klmpc/observables.hpp"
#include "klmpc/qp.hpp"
#include "klmpc/target.hpp"

namespace klmpc {

struct MpcConfig {
  int N = 10;
  MatrixXd Q_z;
  MatrixXd Q_u;
  Bounds u_bounds;
  Bounds y_bounds;
  DecreaseForm decrease_form = DecreaseForm::kLifted;
  /// L1 weight and small quadratic weight of the slacks used when the output
  /// and region rows must be relaxed.
  double soft_weight = 1e4;
  double soft_quadratic = 1e-6;

  void validate(const LiftedModel& model) const;
};

/// Constraint row layout of the condensed OCP (G U <= g + S z_hat), in
/// this order: input upper (N n_u), input lower (N n_u), output upper
/// (N n_y), output lower (N n_y), region (N), decrease (1).
struct OcpRows {
  int n_u = 0;
  int n_y = 0;
  int N = 0;

  int input_upper() const { return 0; }
  int input_lower() const { return N * n_u; }
  int output_upper() const { return 2 * N * n_u; }
  int output_lower() const { return 2 * N * n_u + N * n_y; }
  int region() const { return 2 * N * n_u + 2 * N * n_y; }
  int decrease() const { return region() + N; }
  int total() const { return decrease() + 1; }
  /// Output and region rows (the ones softened by the fallback).
  bool softenable(int row) const { return row >= output_upper() && row < decrease(); }
};

/// Condensed optimal control problem
///   min 1/2 U'H U + f'U  s.t.  G U <= g + S z_hat,
/// with H = Psi' Q Psi + Q_u and f = F_z z_hat + f_const where
/// F_z = Psi' Q Phi and f_const = Psi' Q (Psi_d D - Z_bar) - Q_u U_bar.
/// Upper-case stacked quantities repeat d_hat, z_bar, u_bar over the horizon.
struct CondensedOcp {
  MatrixXd Psi;
  MatrixXd Psi_d;
  MatrixXd Phi;
  MatrixXd Q_bar;   ///< blkdiag(Q_z)
  MatrixXd Qu_bar;  ///< blkdiag(Q_u)
  MatrixXd H_inf;
  VectorXd f_inf;
  MatrixXd F_z;
  VectorXd f_const;
  MatrixXd G_inf;
  VectorXd g_inf;
  MatrixXd S_inf;
  /// Constant of the summed stage cost: cost = U'H U + 2 f'U + c0.
  double c0 = 0.0;
  OcpRows rows;
  VectorXd z_hat;
  VectorXd d_hat;
  VectorXd z_bar;
  VectorXd u_bar;
  LyapunovConstraintData lyap;

  /// The QP handed to the solver (gineq = g + S z_hat).
  QpProblem qp() const;
  /// Summed stage cost of a candidate input sequence.
  double cost(const VectorXd& U) const;
};

/// Offset-free OCP around the targets (z_bar, u_bar) with disturbance
/// estimate d_hat; outputs are C z + C_d d_hat.
CondensedOcp build_ocp_offset_free(const LiftedModel& model,
                                   const DisturbanceModel& dist,
                                   const StabilizingLaw& law,
                                   const LyapunovSpec& spec, const MpcConfig& cfg,
                                   const VectorXd& z_hat, const VectorXd& d_hat,
                                   const VectorXd& z_bar, const VectorXd& u_bar);

/// Nominal OCP: no disturbance terms; targets default to (z_bar_s, u_bar_s).
CondensedOcp build_ocp_nominal(const LiftedModel& model, const StabilizingLaw& law,
                               const LyapunovSpec& spec, const MpcConfig& cfg,
                               const VectorXd& z0, const VectorXd& z_bar,
                               const VectorXd& u_bar);

enum class Branch { kUnconstrained, kLyapunovActive, kOther };

const char* to_string(Branch b);

struct ControlResult {
  QpStatus status = QpStatus::kInfeasible;
  VectorXd u0;
  VectorXd U;
  std::vector<int> active_set;
  /// Multipliers of the G rows (softened runs: of the original rows).
  VectorXd duals;
  Branch branch = Branch::kOther;
  bool decrease_active = false;
  /// Summed stage cost at U.
  double objective = 0.0;
  bool softened = false;
  double max_slack = 0.0;
  int iterations = 0;
};

/// Solves the OCP; when the hard problem is infeasible and `allow_soft`, the
/// output and region rows are relaxed with L1-penalized slacks (input and
/// decrease rows stay hard). The branch is kUnconstrained for an empty active
/// set and kLyapunovActive when exactly the decrease row is active.
ControlResult solve_control(const CondensedOcp& ocp, const MpcConfig& cfg,
                            bool allow_soft = true);

struct ExplicitLaw {
  MatrixXd K_mpc;
  VectorXd c_mpc;
  Branch branch = Branch::kUnconstrained;

  VectorXd apply(const VectorXd& z) const { return K_mpc * z + c_mpc; }
};

/// Unconstrained minimizer u0 = K_un z + c_un with
///   K_un = -C1 H^{-1} Psi' Q Phi,
///   c_un =  C1 H^{-1} (Psi' Q (Z_bar - Psi_d D) + Q_u U_bar).
ExplicitLaw unconstrained_gain(const CondensedOcp& ocp);

/// Law with only the decrease row active:
///   u0 = C1 (M1 Psi' Q Phi - M2 S_l) z + C1 (M1 (Psi' Q (Psi_d D - Z_bar)
///        - Q_u U_bar) - M2 g_l),
///   M1 = H^{-1} G_l' (G_l H^{-1} G_l')^{-1} G_l H^{-1} - H^{-1},
///   M2 = -H^{-1} G_l' (G_l H^{-1} G_l')^{-1}.
/// Throws DomainError when G_l H^{-1} G_l' is not positive.
ExplicitLaw explicit_kkt_solution(const CondensedOcp& ocp);

/// Multiplier of the decrease row when it is the only active row:
///   v = -(G_l H^{-1} G_l')^{-1} (G_l H^{-1} f + g_l + S_l z_hat).
double explicit_decrease_dual(const CondensedOcp& ocp);

}  // namespace klmpc
