#pragma once

#include <optional>
#include <string>
#include <vector>

#include "klmpc/estimator.hpp"
#include "klmpc/lifted_model.hpp"
#include "klmpc/lyapunov.hpp"
#include "klmpc/mpc.hpp"
#include "klmpc/observables.hpp"
#include "klmpc/plant.hpp"
#include "klmpc/target.hpp"

namespace klmpc {

/// Everything a controller needs, designed once from an identified model.
/// target.y_bar_c is overwritten by the set-point schedule at run time.
struct ControllerBundle {
  LiftedModel model;
  ObservableLibrary lib;
  DisturbanceModel dist;
  ControlledVariableMap H;
  EstimatorGains gains;
  StabilizingLaw law;
  LyapunovSpec spec;
  MpcConfig mpc;
  TargetSpec target;

  /// Dimension and structural consistency; throws on failure.
  void validate() const;
};

enum class ControllerKind { kOffsetFree, kNominal };

const char* to_string(ControllerKind k);
ControllerKind controller_kind_from_string(const std::string& s);

struct SetpointStep {
  double t_start = 0.0;
  VectorXd y_bar_c;
};

struct SimScenario {
  double duration = 200.0;
  double dt = 1.0;
  std::vector<SetpointStep> schedule;
  VectorXd x0;
  ControllerKind controller = ControllerKind::kOffsetFree;
  std::uint64_t seed = 0;
  int settle_window = 5;

  int steps() const;
  /// Set-point active at time t.
  const VectorXd& setpoint_at(double t) const;
  void validate(int n_yc) const;
};

struct StepRecord {
  double t = 0.0;
  VectorXd x;
  VectorXd y_p;
  VectorXd z_hat;
  VectorXd d_hat;
  VectorXd z_bar;
  VectorXd u_bar;
  VectorXd u;
  VectorXd y_bar_c;
  double objective = 0.0;
  std::string active_set;
  Branch branch = Branch::kOther;
  bool target_softened = false;
  bool ocp_softened = false;
};

struct ClosedLoopTrace {
  ControllerKind controller = ControllerKind::kOffsetFree;
  std::vector<StepRecord> records;
  /// Set when a stage failed: "<stage> at t=<time>: <message>".
  std::optional<std::string> abort_reason;
};

/// Runs the loop for scenario.steps() + 1 samples. At sample k: measure
/// y_p = x (full state); for the offset-free controller solve the target
/// with the current d_hat, solve the OCP from (z_hat, d_hat), then advance
/// the estimator with (u, y_p). The nominal controller lifts the measured
/// state (z_hat = psi(y_p)), uses d_hat = 0 in the target problem and the
/// OCP, and has no estimator. The plant then advances one sample.
ClosedLoopTrace run_closed_loop(const DiscretePlant& plant,
                                const ControllerBundle& bundle,
                                const SimScenario& scenario);

struct SegmentOffset {
  double t_start = 0.0;
  double t_end = 0.0;
  VectorXd y_bar_c;
  /// Mean of H y_p - y_bar_c over the final window samples of the segment.
  VectorXd offset;
  /// Largest change of d_hat over the window (max-abs).
  double d_hat_variation = 0.0;
  /// Branch tags seen in the window; "mixed" when they differ.
  std::string settle_branch;
};

/// Throws ValidationError when a segment has fewer than `window` samples or
/// the trace was aborted before the segment ended.
std::vector<SegmentOffset> steady_state_offset(const ClosedLoopTrace& trace,
                                               const SimScenario& scenario,
                                               const ControlledVariableMap& H,
                                               int window);

struct ZeroOffsetReport {
  bool holds = false;
  /// Dimension of the null space of L_d.
  int null_dim = 0;
  /// max over null-space basis vectors of ||H (I - C (I - A - B K)^{-1} L_z) v||,
  /// relative to max(1, ||H (I - C (...)^{-1} L_z)||).
  double max_violation = 0.0;
};

/// Null space of L_d must be annihilated by H (I - C (I - A - B K_mpc)^{-1} L_z).
/// Throws DomainError when I - A - B K_mpc is singular.
ZeroOffsetReport check_zero_offset_condition(const EstimatorGains& gains,
                                             const LiftedModel& model,
                                             const MatrixXd& K_mpc,
                                             const ControlledVariableMap& H);

}  // namespace klmpc
