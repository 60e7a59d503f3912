#include "klmpc/pipeline.hpp"

#include "klmpc/error.hpp"

namespace klmpc {

SteadyState operating_steady_state(const RunConfig& cfg) {
  return solve_steady_state(cfg.plant, cfg.operating_point.c, cfg.operating_point.T,
                            cfg.operating_point.h_guess);
}

ObservableLibrary make_library(const RunConfig& cfg, const SteadyState& ss) {
  std::vector<Observable> entries;
  for (const auto& name : cfg.library.observables) entries.push_back(Observable::parse(name));
  const MatrixXd Q_v = cfg.library.v_ranges.cwiseAbs2().cwiseInverse().asDiagonal();
  return ObservableLibrary(3, std::move(entries), ss.x.vec(), Q_v);
}

ModelArtifact identify_artifact(const SnapshotSet& data, const RunConfig& cfg) {
  const SteadyState ss = operating_steady_state(cfg);
  ObservableLibrary lib = make_library(cfg, ss);
  IdentificationResult fit = identify(data, lib, cfg.identification);
  double r = 1.0;
  if (cfg.library.r) {
    r = *cfg.library.r;
  } else {
    r = lyapunov_level_from_data(LyapunovSpec::from_library(lib, 1.0),
                                 lib.lift_rows(data.X), cfg.library.r_quantile);
  }
  return ModelArtifact{std::move(fit.model),      std::move(lib),
                       r,
                       data.meta.dt,
                       fit.objective,
                       std::move(fit.residual_rms),
                       std::move(fit.output_residual_rms),
                       fit.n_pairs};
}

namespace {

MpcConfig make_mpc(const RunConfig& cfg, const LyapunovSpec& spec) {
  const auto& m = cfg.mpc;
  MpcConfig mc;
  mc.N = m.N;
  mc.Q_z = spec.D_x.transpose() * m.state_ranges.cwiseAbs2().cwiseInverse().asDiagonal() *
               spec.D_x +
           m.q_regularization * MatrixXd::Identity(spec.n_z(), spec.n_z());
  mc.Q_u = m.input_weight * m.input_ranges.cwiseAbs2().cwiseInverse().asDiagonal().toDenseMatrix();
  mc.u_bounds = {m.u_min, m.u_max};
  mc.y_bounds = {m.y_min, m.y_max};
  mc.decrease_form = m.decrease_form;
  mc.soft_weight = m.soft_weight;
  return mc;
}

}  // namespace

ControllerBundle assemble_bundle(const RunConfig& cfg, const ModelArtifact& art,
                                 const SteadyState& ss) {
  const DisturbanceModel dist =
      DisturbanceModel::output_disturbance(art.model, cfg.disturbance.channels);
  const EstimatorGains gains = design_gains(art.model, dist, cfg.estimator);
  return assemble_bundle(cfg, art, ss, dist, gains);
}

ControllerBundle assemble_bundle(const RunConfig& cfg, const ModelArtifact& art,
                                 const SteadyState& ss, const DisturbanceModel& dist,
                                 const EstimatorGains& gains) {
  if (art.lib.n_z() != art.model.n_z()) {
    throw DimensionError("assemble_bundle: library has " + std::to_string(art.lib.n_z()) +
                         " observables but the model has n_z = " +
                         std::to_string(art.model.n_z()));
  }
  const LyapunovSpec spec = LyapunovSpec::from_library(art.lib, art.lyapunov_level);
  LqrWeights w;
  w.Q = spec.lifted_weight() +
        cfg.lqr.q_regularization * MatrixXd::Identity(spec.n_z(), spec.n_z());
  w.R = cfg.lqr.r_scale * MatrixXd::Identity(art.model.n_u(), art.model.n_u());
  const StabilizingLaw law = design_law(art.model, dist, spec, w);
  const MpcConfig mc = make_mpc(cfg, spec);

  TargetSpec ts;
  ts.y_bar_c = cfg.scenario.schedule.front().setpoint;
  ts.z_bar_s = spec.z_bar_s;
  ts.u_bar_s = ss.u.vec();
  ts.Q_z_bar = mc.Q_z;
  ts.Q_u_bar = mc.Q_u;
  ts.u_bounds = mc.u_bounds;
  ts.y_bounds = mc.y_bounds;
  ts.soft_outputs = cfg.target.soft_outputs;
  ts.soft_weight = cfg.target.soft_weight;
  ts.tikhonov = cfg.target.tikhonov;

  ControllerBundle b{art.model,
                     art.lib,
                     dist,
                     ControlledVariableMap::select(art.model.n_y(), cfg.controlled),
                     gains,
                     law,
                     spec,
                     mc,
                     ts};
  b.validate();
  return b;
}

SimScenario make_scenario(const RunConfig& cfg, const SteadyState& ss,
                          ControllerKind kind) {
  SimScenario sc;
  sc.duration = cfg.scenario.duration;
  sc.dt = cfg.scenario.dt;
  for (const auto& e : cfg.scenario.schedule) sc.schedule.push_back({e.t, e.setpoint});
  sc.x0 = cfg.scenario.x0 ? VectorXd(*cfg.scenario.x0) : VectorXd(ss.x.vec());
  sc.controller = kind;
  sc.seed = cfg.seed;
  sc.settle_window = cfg.scenario.settle_window;
  sc.validate(2);
  return sc;
}

CstrPlant make_plant(const RunConfig& cfg) {
  return CstrPlant(cfg.plant, cfg.scenario.dt, cfg.scenario.substeps);
}

}  // namespace klmpc
