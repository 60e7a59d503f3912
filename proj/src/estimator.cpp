#include "klmpc/estimator.hpp"

#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

void EstimatorDesign::validate() const {
  if (!(q_z > 0.0) || !(q_d > 0.0) || !(r_y > 0.0)) {
    throw ValidationError("EstimatorDesign: covariance scales must be positive");
  }
}

MatrixXd augmented_A(const LiftedModel& model, const DisturbanceModel& dist) {
  const int nz = model.n_z();
  const int nd = dist.n_d();
  MatrixXd Aa = MatrixXd::Zero(nz + nd, nz + nd);
  Aa.topLeftCorner(nz, nz) = model.A;
  Aa.topRightCorner(nz, nd) = dist.B_d();
  Aa.bottomRightCorner(nd, nd).setIdentity();
  return Aa;
}

MatrixXd augmented_C(const LiftedModel& model, const DisturbanceModel& dist) {
  MatrixXd Ca(model.n_y(), model.n_z() + dist.n_d());
  Ca << model.C, dist.C_d();
  return Ca;
}

double estimator_spectral_radius(const LiftedModel& model,
                                 const DisturbanceModel& dist,
                                 const EstimatorGains& gains) {
  MatrixXd L(gains.L_z.rows() + gains.L_d.rows(), model.n_y());
  L << gains.L_z, gains.L_d;
  return spectral_radius(augmented_A(model, dist) +
                         L * augmented_C(model, dist));
}

EstimatorGains design_gains(const LiftedModel& model,
                            const DisturbanceModel& dist,
                            const EstimatorDesign& design) {
  model.validate();
  design.validate();
  require_shape(dist.B_d(), model.n_z(), dist.n_d(), "design_gains: B_d");
  require_shape(dist.C_d(), model.n_y(), dist.n_d(), "design_gains: C_d");
  const int nz = model.n_z();
  const int nd = dist.n_d();
  const MatrixXd Aa = augmented_A(model, dist);
  const MatrixXd Ca = augmented_C(model, dist);
  const MatrixXd W = block_diag(design.q_z * MatrixXd::Identity(nz, nz),
                                design.q_d * MatrixXd::Identity(nd, nd));
  const MatrixXd V = design.r_y * MatrixXd::Identity(model.n_y(), model.n_y());

  // Filter Riccati equation as the dual control problem, solved in the
  // model's well-conditioned basis (z, d) = blkdiag(T, I) w; the gain maps
  // back as L = blkdiag(T, I) L_w.
  const MatrixXd Ta = block_diag(model.basis_or_identity(), MatrixXd::Identity(nd, nd));
  const Eigen::PartialPivLU<MatrixXd> lu(Ta);
  const MatrixXd Aw = lu.solve(Aa * Ta);
  const MatrixXd Cw = Ca * Ta;
  const MatrixXd TinvT = lu.solve(MatrixXd::Identity(nz + nd, nz + nd));
  MatrixXd Ww = TinvT * W * TinvT.transpose();
  Ww = 0.5 * (Ww + Ww.transpose());
  const MatrixXd P = solve_dare(Aw.transpose(), Cw.transpose(), Ww, V);
  const MatrixXd S = Cw * P * Cw.transpose() + V;
  const MatrixXd L = -Ta * (Aw * P * Cw.transpose()) *
                     S.ldlt().solve(MatrixXd::Identity(S.rows(), S.cols()));

  EstimatorGains gains{L.topRows(nz), L.bottomRows(nd)};
  const double rho = estimator_spectral_radius(model, dist, gains);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os << "design_gains: observer not stable (spectral radius " << rho << ")";
    throw DesignError(os.str());
  }
  return gains;
}

VectorXd innovation(const LiftedModel& model, const DisturbanceModel& dist,
                    const EstimateState& est, const VectorXd& y_p) {
  require_size(est.z_hat, model.n_z(), "innovation: z_hat");
  require_size(est.d_hat, dist.n_d(), "innovation: d_hat");
  require_size(y_p, model.n_y(), "innovation: y_p");
  return -y_p + model.C * est.z_hat + dist.C_d() * est.d_hat;
}

EstimateState update(const EstimatorGains& gains, const LiftedModel& model,
                     const DisturbanceModel& dist, const EstimateState& est,
                     const VectorXd& u, const VectorXd& y_p) {
  require_size(u, model.n_u(), "update: u");
  const VectorXd e = innovation(model, dist, est, y_p);
  return {model.A * est.z_hat + model.B * u + dist.B_d() * est.d_hat +
              gains.L_z * e,
          est.d_hat + gains.L_d * e};
}

}  // namespace klmpc
