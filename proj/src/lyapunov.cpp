#include "klmpc/lyapunov.hpp"

#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

StabilizingLaw design_law(const LiftedModel& model, const DisturbanceModel& dist,
                          const LyapunovSpec& spec, const LqrWeights& weights) {
  model.validate();
  const int nz = model.n_z();
  const int nu = model.n_u();
  require_shape(dist.B_d(), nz, dist.n_d(), "design_law: B_d");
  MatrixXd Q = weights.Q;
  if (Q.size() == 0) {
    require_shape(spec.D_x, spec.n_x(), nz, "design_law: D_x");
    Q = spec.lifted_weight() + 1e-6 * MatrixXd::Identity(nz, nz);
  }
  const MatrixXd R = weights.R.size() == 0 ? MatrixXd::Identity(nu, nu) : weights.R;
  require_shape(Q, nz, nz, "design_law: Q");
  require_shape(R, nu, nu, "design_law: R");

  // The Riccati solve runs in the model's well-conditioned basis z = T w;
  // the gain transforms back as K_z = K_w T^{-1}.
  const MatrixXd T = model.basis_or_identity();
  const Eigen::PartialPivLU<MatrixXd> lu(T);
  const MatrixXd Aw = lu.solve(model.A * T);
  const MatrixXd Bw = lu.solve(model.B);
  MatrixXd Qw = T.transpose() * Q * T;
  Qw = 0.5 * (Qw + Qw.transpose());
  const MatrixXd Kw = dlqr_gain(Aw, Bw, Qw, R);

  StabilizingLaw law;
  law.K_z = Eigen::PartialPivLU<MatrixXd>(T.transpose()).solve(Kw.transpose()).transpose();
  const double rho = spectral_radius(model.A - model.B * law.K_z);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os << "design_law: A - B K_z not Schur stable (spectral radius " << rho << ")";
    throw DesignError(os.str());
  }
  const MatrixXd M = MatrixXd::Identity(nz, nz) - model.A + model.B * law.K_z;
  const Eigen::PartialPivLU<MatrixXd> mlu(M);
  law.N_bar = pseudo_inverse(mlu.solve(model.B));
  law.K_d = law.N_bar * mlu.solve(dist.B_d());
  return law;
}

VectorXd stabilizing_input(const StabilizingLaw& law, const VectorXd& z,
                           const VectorXd& d_hat, const VectorXd& z_bar) {
  require_size(z, law.K_z.cols(), "stabilizing_input: z");
  require_size(z_bar, law.N_bar.cols(), "stabilizing_input: z_bar");
  require_size(d_hat, law.K_d.cols(), "stabilizing_input: d_hat");
  return law.N_bar * z_bar - law.K_z * z - law.K_d * d_hat;
}

VectorXd target_feedforward(const StabilizingLaw& law, const VectorXd& z_bar,
                            const VectorXd& u_bar) {
  require_size(z_bar, law.K_z.cols(), "target_feedforward: z_bar");
  require_size(u_bar, law.K_z.rows(), "target_feedforward: u_bar");
  return u_bar + law.K_z * z_bar;
}

const char* to_string(DecreaseForm f) {
  return f == DecreaseForm::kLifted ? "lifted" : "exact";
}

DecreaseForm decrease_form_from_string(const std::string& s) {
  if (s == "lifted") return DecreaseForm::kLifted;
  if (s == "exact") return DecreaseForm::kExact;
  throw ValidationError("unknown decrease form '" + s + "' (lifted|exact)");
}

LyapunovConstraintData build_constraints(const LyapunovSpec& spec,
                                         const StabilizingLaw& law,
                                         const LiftedModel& model,
                                         const DisturbanceModel& dist,
                                         const VectorXd& z0, const VectorXd& d_hat,
                                         const VectorXd& z_bar,
                                         const VectorXd& u_bar) {
  require_size(z0, model.n_z(), "build_constraints: z0");
  require_size(d_hat, dist.n_d(), "build_constraints: d_hat");
  const ShiftedLyapunov sh = shifted_coeffs(spec, z_bar);
  LyapunovConstraintData out;
  out.F_v = sh.F_v;
  out.c_shift = sh.c_shift;
  out.rhs_region = spec.r - sh.c_shift;
  const VectorXd h = target_feedforward(law, z_bar, u_bar) - law.K_z * z0;
  out.z1_h = model.A * z0 + model.B * h + dist.B_d() * d_hat;
  const VectorXd e = spec.D_x * (out.z1_h - z_bar);
  out.rhs_decrease = e.dot(spec.Q_v * e) - sh.c_shift;
  out.rhs_decrease_lifted = out.F_v.dot(out.z1_h);
  return out;
}

}  // namespace klmpc
