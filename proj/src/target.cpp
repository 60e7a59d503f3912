#include "klmpc/target.hpp"

#include <sstream>

#include <spdlog/spdlog.h>

#include "klmpc/error.hpp"
#include "klmpc/qp.hpp"

namespace klmpc {

void Bounds::validate(Eigen::Index n, const char* what) const {
  require_size(lower, n, std::string(what) + ": lower bound");
  require_size(upper, n, std::string(what) + ": upper bound");
  if ((lower.array() > upper.array()).any()) {
    throw ValidationError(std::string(what) + ": empty bounds (lower > upper)");
  }
}

void TargetSpec::validate(const LiftedModel& model,
                          const ControlledVariableMap& H) const {
  H.validate(model.n_y());
  require_size(y_bar_c, H.H.rows(), "TargetSpec: y_bar_c");
  require_size(z_bar_s, model.n_z(), "TargetSpec: z_bar_s");
  require_size(u_bar_s, model.n_u(), "TargetSpec: u_bar_s");
  require_shape(Q_z_bar, model.n_z(), model.n_z(), "TargetSpec: Q_z_bar");
  require_shape(Q_u_bar, model.n_u(), model.n_u(), "TargetSpec: Q_u_bar");
  if (Eigen::LLT<MatrixXd>(Q_u_bar).info() != Eigen::Success) {
    throw ValidationError("TargetSpec: Q_u_bar must be positive definite");
  }
  u_bounds.validate(model.n_u(), "TargetSpec: u_bounds");
  y_bounds.validate(model.n_y(), "TargetSpec: y_bounds");
  if (!(soft_weight > 0.0) || tikhonov < 0.0) {
    throw ValidationError("TargetSpec: soft_weight must be positive, tikhonov >= 0");
  }
}

TargetResiduals target_residuals(const LiftedModel& model,
                                 const DisturbanceModel& dist,
                                 const ControlledVariableMap& H,
                                 const VectorXd& y_bar_c, const VectorXd& d_hat,
                                 const VectorXd& z_bar, const VectorXd& u_bar) {
  TargetResiduals r;
  r.equilibrium = (model.A * z_bar - z_bar + model.B * u_bar + dist.B_d() * d_hat)
                      .cwiseAbs()
                      .maxCoeff();
  r.setpoint = (H.H * (model.C * z_bar + dist.C_d() * d_hat) - y_bar_c)
                   .cwiseAbs()
                   .maxCoeff();
  return r;
}

namespace {

// Builds the target QP over x = [w; u; s] with z = T w in the model's
// well-conditioned basis T; s (2 n_y slacks, present only when `soft`)
// relaxes the upper and lower output bounds. The equilibrium rows are
// premultiplied by T^{-1}.
QpProblem build_target_qp(const LiftedModel& model, const DisturbanceModel& dist,
                          const ControlledVariableMap& H, const TargetSpec& spec,
                          const VectorXd& d_hat, bool soft) {
  const int nz = model.n_z();
  const int nu = model.n_u();
  const int ny = model.n_y();
  const auto nyc = H.H.rows();
  const int ns = soft ? 2 * ny : 0;
  const int nv = nz + nu + ns;

  QpProblem qp;
  qp.Hq = MatrixXd::Zero(nv, nv);
  qp.fq = VectorXd::Zero(nv);
  const MatrixXd T = model.basis_or_identity();
  const Eigen::PartialPivLU<MatrixXd> lu(T);
  const MatrixXd CT = model.C * T;
  const MatrixXd Qz = spec.Q_z_bar + spec.tikhonov * MatrixXd::Identity(nz, nz);
  qp.Hq.topLeftCorner(nz, nz) = 2.0 * T.transpose() * Qz * T;
  qp.Hq.block(nz, nz, nu, nu) = 2.0 * spec.Q_u_bar;
  qp.fq.head(nz) = -2.0 * T.transpose() * (Qz * spec.z_bar_s);
  qp.fq.segment(nz, nu) = -2.0 * spec.Q_u_bar * spec.u_bar_s;
  if (soft) {
    // Small curvature keeps the slack block strictly convex.
    qp.Hq.bottomRightCorner(ns, ns) = 1e-6 * MatrixXd::Identity(ns, ns);
    qp.fq.tail(ns).setConstant(spec.soft_weight);
  }
  qp.Hq = 0.5 * (qp.Hq + qp.Hq.transpose());

  qp.Aeq = MatrixXd::Zero(nz + nyc, nv);
  qp.Aeq.topLeftCorner(nz, nz) = lu.solve(model.A * T) - MatrixXd::Identity(nz, nz);
  qp.Aeq.block(0, nz, nz, nu) = lu.solve(model.B);
  qp.Aeq.block(nz, 0, nyc, nz) = H.H * CT;
  qp.beq.resize(nz + nyc);
  qp.beq.head(nz) = -lu.solve(dist.B_d() * d_hat);
  qp.beq.tail(nyc) = spec.y_bar_c - H.H * dist.C_d() * d_hat;

  const VectorXd yd = dist.C_d() * d_hat;
  const int rows = 2 * nu + 2 * ny + ns;
  qp.Gineq = MatrixXd::Zero(rows, nv);
  qp.gineq = VectorXd::Zero(rows);
  int r = 0;
  qp.Gineq.block(r, nz, nu, nu).setIdentity();
  qp.gineq.segment(r, nu) = spec.u_bounds.upper;
  r += nu;
  qp.Gineq.block(r, nz, nu, nu) = -MatrixXd::Identity(nu, nu);
  qp.gineq.segment(r, nu) = -spec.u_bounds.lower;
  r += nu;
  qp.Gineq.block(r, 0, ny, nz) = CT;
  qp.gineq.segment(r, ny) = spec.y_bounds.upper - yd;
  if (soft) qp.Gineq.block(r, nz + nu, ny, ny) = -MatrixXd::Identity(ny, ny);
  r += ny;
  qp.Gineq.block(r, 0, ny, nz) = -CT;
  qp.gineq.segment(r, ny) = -spec.y_bounds.lower + yd;
  if (soft) qp.Gineq.block(r, nz + nu + ny, ny, ny) = -MatrixXd::Identity(ny, ny);
  r += ny;
  if (soft) {
    qp.Gineq.block(r, nz + nu, ns, ns) = -MatrixXd::Identity(ns, ns);
  }
  return qp;
}

}  // namespace

TargetPair solve_target(const LiftedModel& model, const DisturbanceModel& dist,
                        const ControlledVariableMap& H, const TargetSpec& spec,
                        const VectorXd& d_hat) {
  spec.validate(model, H);
  require_size(d_hat, dist.n_d(), "solve_target: d_hat");
  const int nz = model.n_z();
  const int nu = model.n_u();
  const int ny = model.n_y();

  QpProblem qp = build_target_qp(model, dist, H, spec, d_hat, false);
  {
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(qp.Aeq);
    const VectorXd x = cod.solve(qp.beq);
    const double resid = (qp.Aeq * x - qp.beq).cwiseAbs().maxCoeff();
    const double scale = std::max({1.0, qp.beq.cwiseAbs().maxCoeff(),
                                   qp.Aeq.cwiseAbs().maxCoeff() * x.cwiseAbs().maxCoeff()});
    if (resid > 1e-9 * scale) {
      std::ostringstream os;
      os << "solve_target: steady-state equalities are inconsistent (residual "
         << resid << ")";
      throw InfeasibleError(os.str(), resid);
    }
  }

  QpSolution sol = solve(qp);
  TargetPair out;
  if (sol.status != QpStatus::kOptimal) {
    const QpProblem soft = build_target_qp(model, dist, H, spec, d_hat, true);
    const QpSolution ssol = solve(soft);
    if (ssol.status != QpStatus::kOptimal) {
      throw InfeasibleError(
          "solve_target: input bounds cannot be met at steady state",
          sol.infeasibility);
    }
    const VectorXd s = ssol.x_star.tail(2 * ny);
    Eigen::Index worst = 0;
    out.max_slack = s.maxCoeff(&worst);
    const bool upper = worst < ny;
    std::ostringstream os;
    os << "solve_target: output " << (upper ? "upper" : "lower")
       << " bound on y" << (worst % ny) + 1 << " infeasible (violation "
       << out.max_slack << ")";
    if (!spec.soft_outputs) throw InfeasibleError(os.str(), out.max_slack);
    spdlog::warn("{}; relaxed with L1 penalty", os.str());
    out.softened = true;
    sol = ssol;
  }
  out.z_bar = model.basis_or_identity() * sol.x_star.head(nz);
  out.u_bar = sol.x_star.segment(nz, nu);
  out.y_bar = model.C * out.z_bar + dist.C_d() * d_hat;
  return out;
}

}  // namespace klmpc
