#include "klmpc/sim.hpp"

#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "klmpc/error.hpp"

namespace klmpc {

void ControllerBundle::validate() const {
  model.validate();
  if (lib.n_z() != model.n_z()) {
    throw DimensionError("ControllerBundle: library and model disagree on n_z");
  }
  H.validate(model.n_y());
  require_shape(dist.B_d(), model.n_z(), dist.n_d(), "ControllerBundle: B_d");
  require_shape(dist.C_d(), model.n_y(), dist.n_d(), "ControllerBundle: C_d");
  require_shape(gains.L_z, model.n_z(), model.n_y(), "ControllerBundle: L_z");
  require_shape(gains.L_d, dist.n_d(), model.n_y(), "ControllerBundle: L_d");
  require_shape(law.K_z, model.n_u(), model.n_z(), "ControllerBundle: K_z");
  require_shape(law.N_bar, model.n_u(), model.n_z(), "ControllerBundle: N_bar");
  require_shape(law.K_d, model.n_u(), dist.n_d(), "ControllerBundle: K_d");
  require_shape(spec.D_x, model.n_y(), model.n_z(), "ControllerBundle: D_x");
  mpc.validate(model);
  TargetSpec t = target;
  if (t.y_bar_c.size() != H.H.rows()) t.y_bar_c = VectorXd::Zero(H.H.rows());
  t.validate(model, H);
}

const char* to_string(ControllerKind k) {
  return k == ControllerKind::kOffsetFree ? "offset-free" : "nominal";
}

ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "offset-free") return ControllerKind::kOffsetFree;
  if (s == "nominal") return ControllerKind::kNominal;
  throw ValidationError("unknown controller kind '" + s + "' (offset-free|nominal)");
}

int SimScenario::steps() const {
  return static_cast<int>(std::lround(duration / dt));
}

const VectorXd& SimScenario::setpoint_at(double t) const {
  const VectorXd* current = &schedule.front().y_bar_c;
  for (const auto& s : schedule) {
    if (s.t_start <= t + 1e-9 * dt) current = &s.y_bar_c;
  }
  return *current;
}

void SimScenario::validate(int n_yc) const {
  if (!(duration > 0.0) || !(dt > 0.0) || steps() < 1) {
    throw ValidationError("SimScenario: duration and dt must be positive");
  }
  if (std::abs(steps() * dt - duration) > 1e-9 * duration) {
    throw ValidationError("SimScenario: duration must be a multiple of dt");
  }
  if (schedule.empty() || schedule.front().t_start != 0.0) {
    throw ValidationError("SimScenario: schedule must start at t = 0");
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    require_size(schedule[i].y_bar_c, n_yc, "SimScenario: set-point");
    if (i > 0 && !(schedule[i].t_start > schedule[i - 1].t_start)) {
      throw ValidationError("SimScenario: schedule times must increase strictly");
    }
    if (schedule[i].t_start > duration) {
      throw ValidationError("SimScenario: schedule entry after the end of the run");
    }
  }
  if (settle_window < 1) throw ValidationError("SimScenario: settle_window >= 1");
}

namespace {

std::string signature(const std::vector<int>& active) {
  std::ostringstream os;
  for (std::size_t i = 0; i < active.size(); ++i) os << (i ? ";" : "") << active[i];
  return os.str();
}

}  // namespace

ClosedLoopTrace run_closed_loop(const DiscretePlant& plant,
                                const ControllerBundle& bundle,
                                const SimScenario& scenario) {
  bundle.validate();
  scenario.validate(static_cast<int>(bundle.H.H.rows()));
  const int K = scenario.steps();
  const bool offset_free = scenario.controller == ControllerKind::kOffsetFree;

  ClosedLoopTrace trace;
  trace.controller = scenario.controller;
  trace.records.reserve(static_cast<std::size_t>(K) + 1);

  VectorXd state = plant.initial_state(scenario.x0);
  EstimateState est;
  est.z_hat = bundle.lib.lift(plant.measure(state));
  est.d_hat = VectorXd::Zero(bundle.dist.n_d());
  TargetSpec target = bundle.target;

  std::string stage;
  double t = 0.0;
  try {
    for (int k = 0; k <= K; ++k) {
      t = k * scenario.dt;
      StepRecord rec;
      rec.t = t;
      stage = "measure";
      rec.y_p = plant.measure(state);
      rec.x = rec.y_p;
      if (!offset_free) {
        est.z_hat = bundle.lib.lift(rec.y_p);
        est.d_hat.setZero();
      }
      rec.z_hat = est.z_hat;
      rec.d_hat = est.d_hat;
      rec.y_bar_c = scenario.setpoint_at(t);

      stage = "target";
      target.y_bar_c = rec.y_bar_c;
      const TargetPair tp =
          solve_target(bundle.model, bundle.dist, bundle.H, target, est.d_hat);
      rec.z_bar = tp.z_bar;
      rec.u_bar = tp.u_bar;
      rec.target_softened = tp.softened;

      stage = "ocp";
      const CondensedOcp ocp =
          offset_free
              ? build_ocp_offset_free(bundle.model, bundle.dist, bundle.law,
                                      bundle.spec, bundle.mpc, est.z_hat, est.d_hat,
                                      tp.z_bar, tp.u_bar)
              : build_ocp_nominal(bundle.model, bundle.law, bundle.spec, bundle.mpc,
                                  est.z_hat, tp.z_bar, tp.u_bar);
      const ControlResult cr = solve_control(ocp, bundle.mpc);
      if (cr.status != QpStatus::kOptimal) {
        std::ostringstream os;
        os << "OCP solver status " << to_string(cr.status);
        throw InfeasibleError(os.str(), 0.0);
      }
      rec.u = cr.u0;
      rec.objective = cr.objective;
      rec.active_set = signature(cr.active_set);
      rec.branch = cr.branch;
      rec.ocp_softened = cr.softened;
      trace.records.push_back(rec);
      if (k == K) break;

      if (offset_free) {
        stage = "estimator";
        est = update(bundle.gains, bundle.model, bundle.dist, est, rec.u, rec.y_p);
      }
      stage = "plant";
      state = plant.advance(state, rec.u);
    }
  } catch (const Error& e) {
    std::ostringstream os;
    os << stage << " at t=" << t << ": " << e.what();
    trace.abort_reason = os.str();
    spdlog::error("closed loop aborted: {}", *trace.abort_reason);
  }
  return trace;
}

std::vector<SegmentOffset> steady_state_offset(const ClosedLoopTrace& trace,
                                               const SimScenario& scenario,
                                               const ControlledVariableMap& H,
                                               int window) {
  if (window < 1) throw ValidationError("steady_state_offset: window must be >= 1");
  std::vector<SegmentOffset> out;
  const auto& recs = trace.records;
  for (std::size_t s = 0; s < scenario.schedule.size(); ++s) {
    SegmentOffset seg;
    seg.t_start = scenario.schedule[s].t_start;
    seg.t_end = s + 1 < scenario.schedule.size() ? scenario.schedule[s + 1].t_start
                                                 : scenario.duration + scenario.dt;
    seg.y_bar_c = scenario.schedule[s].y_bar_c;
    std::vector<const StepRecord*> in;
    for (const auto& r : recs) {
      if (r.t >= seg.t_start - 1e-9 && r.t < seg.t_end - 1e-9) in.push_back(&r);
    }
    const double expected_end =
        s + 1 < scenario.schedule.size() ? seg.t_end - scenario.dt : scenario.duration;
    if (static_cast<int>(in.size()) < window || in.back()->t < expected_end - 1e-9) {
      std::ostringstream os;
      os << "steady_state_offset: segment starting at t=" << seg.t_start
         << " has fewer than " << window << " samples or was not completed";
      throw ValidationError(os.str());
    }
    const std::size_t first = in.size() - static_cast<std::size_t>(window);
    seg.offset = VectorXd::Zero(H.H.rows());
    for (std::size_t i = first; i < in.size(); ++i) {
      seg.offset += H.H * in[i]->y_p - seg.y_bar_c;
      seg.d_hat_variation = std::max(
          seg.d_hat_variation,
          (in[i]->d_hat - in[first]->d_hat).cwiseAbs().maxCoeff());
    }
    seg.offset /= static_cast<double>(window);
    seg.settle_branch = to_string(in[first]->branch);
    for (std::size_t i = first; i < in.size(); ++i) {
      if (in[i]->branch != in[first]->branch) seg.settle_branch = "mixed";
    }
    out.push_back(seg);
  }
  return out;
}

ZeroOffsetReport check_zero_offset_condition(const EstimatorGains& gains,
                                             const LiftedModel& model,
                                             const MatrixXd& K_mpc,
                                             const ControlledVariableMap& H) {
  require_shape(K_mpc, model.n_u(), model.n_z(), "check_zero_offset_condition: K_mpc");
  require_shape(gains.L_z, model.n_z(), model.n_y(), "check_zero_offset_condition: L_z");
  const int nz = model.n_z();
  // Evaluated in the model's basis z = T w, where the raw lifted coordinates'
  // disparate scales do not mask the conditioning of I - A - B K_mpc:
  // C (I - A - B K)^{-1} L_z = (C T) (T^{-1} (I - A - B K) T)^{-1} (T^{-1} L_z).
  const MatrixXd Tb = model.basis_or_identity();
  const Eigen::PartialPivLU<MatrixXd> tlu(Tb);
  const MatrixXd M = tlu.solve(MatrixXd(MatrixXd::Identity(nz, nz) - model.A - model.B * K_mpc) * Tb);
  if (numerical_rank(M) < nz) {
    throw DomainError("check_zero_offset_condition: I - A - B K_mpc is singular");
  }
  const MatrixXd T = H.H * (MatrixXd::Identity(model.n_y(), model.n_y()) -
                            (model.C * Tb) * M.fullPivLu().solve(tlu.solve(gains.L_z)));
  const MatrixXd Nd = null_space(gains.L_d);
  ZeroOffsetReport rep;
  rep.null_dim = static_cast<int>(Nd.cols());
  const double scale = std::max(1.0, T.norm());
  for (Eigen::Index j = 0; j < Nd.cols(); ++j) {
    rep.max_violation = std::max(rep.max_violation, (T * Nd.col(j)).norm() / scale);
  }
  rep.holds = rep.max_violation < 1e-8;
  return rep;
}

}  // namespace klmpc
