#pragma once

#include "klmpc/config.hpp"
#include "klmpc/edmd.hpp"
#include "klmpc/sim.hpp"

namespace klmpc {

/// An identified model together with everything needed to reuse it: the
/// library it was fitted on, the Lyapunov level chosen from the data and a
/// summary of the fit.
struct ModelArtifact {
  LiftedModel model;
  ObservableLibrary lib;
  double lyapunov_level = 1.0;
  double dt = 1.0;
  double objective = 0.0;
  VectorXd residual_rms;
  VectorXd output_residual_rms;
  Eigen::Index n_pairs = 0;
};

/// Steady state at the configured operating point.
SteadyState operating_steady_state(const RunConfig& cfg);

/// Library from the configured observable names, centred on x_s with
/// Q_v = diag(1 / v_ranges^2).
ObservableLibrary make_library(const RunConfig& cfg, const SteadyState& ss);

/// EDMD fit plus the data-driven Lyapunov level (or the configured one).
ModelArtifact identify_artifact(const SnapshotSet& data, const RunConfig& cfg);

/// Designs the disturbance model, estimator, stabilizing law, MPC weights
/// and target problem for `art`.
ControllerBundle assemble_bundle(const RunConfig& cfg, const ModelArtifact& art,
                                 const SteadyState& ss);

/// Same, with a caller-supplied disturbance model and estimator gains (used
/// by negative controls that alter the observer).
ControllerBundle assemble_bundle(const RunConfig& cfg, const ModelArtifact& art,
                                 const SteadyState& ss, const DisturbanceModel& dist,
                                 const EstimatorGains& gains);

SimScenario make_scenario(const RunConfig& cfg, const SteadyState& ss,
                          ControllerKind kind);

/// The reactor sampled at the scenario's dt.
CstrPlant make_plant(const RunConfig& cfg);

}  // namespace klmpc
