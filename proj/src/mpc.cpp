#include "klmpc/mpc.hpp"

#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

void MpcConfig::validate(const LiftedModel& model) const {
  if (N < 1) throw ValidationError("MpcConfig: N must be >= 1");
  require_shape(Q_z, model.n_z(), model.n_z(), "MpcConfig: Q_z");
  require_shape(Q_u, model.n_u(), model.n_u(), "MpcConfig: Q_u");
  const auto symmetric = [](const MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <=
           1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
  };
  if (!symmetric(Q_z) || !symmetric(Q_u)) {
    throw ValidationError("MpcConfig: weights must be symmetric");
  }
  if (Eigen::SelfAdjointEigenSolver<MatrixXd>(Q_z).eigenvalues().minCoeff() <
      -1e-12 * std::max(1.0, Q_z.cwiseAbs().maxCoeff())) {
    throw ValidationError("MpcConfig: Q_z must be positive semidefinite");
  }
  if (Eigen::LLT<MatrixXd>(Q_u).info() != Eigen::Success) {
    throw ValidationError("MpcConfig: Q_u must be positive definite");
  }
  u_bounds.validate(model.n_u(), "MpcConfig: u_bounds");
  y_bounds.validate(model.n_y(), "MpcConfig: y_bounds");
  if (!(soft_weight > 0.0) || !(soft_quadratic > 0.0)) {
    throw ValidationError("MpcConfig: soft weights must be positive");
  }
}

namespace {

VectorXd repeat(const VectorXd& v, int N) { return v.replicate(N, 1); }

MatrixXd block_repeat(const MatrixXd& m, int N) {
  MatrixXd out = MatrixXd::Zero(m.rows() * N, m.cols() * N);
  for (int i = 0; i < N; ++i) {
    out.block(i * m.rows(), i * m.cols(), m.rows(), m.cols()) = m;
  }
  return out;
}

// Lower block-Toeplitz [X 0 ..; A X 0 ..; ..; A^{N-1} X .. X].
MatrixXd toeplitz(const MatrixXd& A, const MatrixXd& X, int N) {
  const auto nz = A.rows();
  const auto nc = X.cols();
  MatrixXd out = MatrixXd::Zero(nz * N, nc * N);
  MatrixXd AkX = X;
  for (int k = 0; k < N; ++k) {
    for (int j = 0; j + k < N; ++j) {
      out.block((j + k) * nz, j * nc, nz, nc) = AkX;
    }
    AkX = A * AkX;
  }
  return out;
}

CondensedOcp build_common(const LiftedModel& model, const MatrixXd& B_d,
                          const MatrixXd& C_d, const StabilizingLaw& law,
                          const LyapunovSpec& spec, const MpcConfig& cfg,
                          const DisturbanceModel& dist, const VectorXd& z_hat,
                          const VectorXd& d_hat, const VectorXd& z_bar,
                          const VectorXd& u_bar) {
  cfg.validate(model);
  require_size(z_hat, model.n_z(), "build_ocp: z_hat");
  require_size(d_hat, B_d.cols(), "build_ocp: d_hat");
  require_size(z_bar, model.n_z(), "build_ocp: z_bar");
  require_size(u_bar, model.n_u(), "build_ocp: u_bar");
  const int N = cfg.N;
  const int nz = model.n_z();
  const int nu = model.n_u();
  const int ny = model.n_y();

  CondensedOcp ocp;
  ocp.z_hat = z_hat;
  ocp.d_hat = d_hat;
  ocp.z_bar = z_bar;
  ocp.u_bar = u_bar;
  ocp.rows = OcpRows{nu, ny, N};

  ocp.Psi = toeplitz(model.A, model.B, N);
  ocp.Psi_d = toeplitz(model.A, B_d, N);
  ocp.Phi = MatrixXd(nz * N, nz);
  MatrixXd Ak = model.A;
  for (int k = 0; k < N; ++k) {
    ocp.Phi.middleRows(k * nz, nz) = Ak;
    Ak = model.A * Ak;
  }
  ocp.Q_bar = block_repeat(cfg.Q_z, N);
  ocp.Qu_bar = block_repeat(cfg.Q_u, N);

  const VectorXd D = repeat(d_hat, N);
  const VectorXd Zb = repeat(z_bar, N);
  const VectorXd Ub = repeat(u_bar, N);
  const MatrixXd PsiQ = ocp.Psi.transpose() * ocp.Q_bar;
  ocp.H_inf = PsiQ * ocp.Psi + ocp.Qu_bar;
  ocp.H_inf = 0.5 * (ocp.H_inf + ocp.H_inf.transpose());
  ocp.F_z = PsiQ * ocp.Phi;
  const VectorXd free_resp_d = ocp.Psi_d * D;
  ocp.f_const = PsiQ * (free_resp_d - Zb) - ocp.Qu_bar * Ub;
  ocp.f_inf = ocp.F_z * z_hat + ocp.f_const;
  const VectorXd e0 = ocp.Phi * z_hat + free_resp_d - Zb;
  ocp.c0 = e0.dot(ocp.Q_bar * e0) + Ub.dot(ocp.Qu_bar * Ub);

  ocp.lyap = build_constraints(spec, law, model, dist, z_hat, d_hat, z_bar, u_bar);

  const OcpRows& R = ocp.rows;
  ocp.G_inf = MatrixXd::Zero(R.total(), N * nu);
  ocp.g_inf = VectorXd::Zero(R.total());
  ocp.S_inf = MatrixXd::Zero(R.total(), nz);

  ocp.G_inf.middleRows(R.input_upper(), N * nu).setIdentity();
  ocp.g_inf.segment(R.input_upper(), N * nu) = repeat(cfg.u_bounds.upper, N);
  ocp.G_inf.middleRows(R.input_lower(), N * nu) = -MatrixXd::Identity(N * nu, N * nu);
  ocp.g_inf.segment(R.input_lower(), N * nu) = -repeat(cfg.u_bounds.lower, N);

  const MatrixXd Cbar = block_repeat(model.C, N);
  const VectorXd y_off = repeat(C_d * d_hat, N) + Cbar * free_resp_d;
  const MatrixXd CPsi = Cbar * ocp.Psi;
  const MatrixXd CPhi = Cbar * ocp.Phi;
  ocp.G_inf.middleRows(R.output_upper(), N * ny) = CPsi;
  ocp.g_inf.segment(R.output_upper(), N * ny) = repeat(cfg.y_bounds.upper, N) - y_off;
  ocp.S_inf.middleRows(R.output_upper(), N * ny) = -CPhi;
  ocp.G_inf.middleRows(R.output_lower(), N * ny) = -CPsi;
  ocp.g_inf.segment(R.output_lower(), N * ny) = -repeat(cfg.y_bounds.lower, N) + y_off;
  ocp.S_inf.middleRows(R.output_lower(), N * ny) = CPhi;

  const MatrixXd Fbar = block_repeat(ocp.lyap.F_v, N);
  ocp.G_inf.middleRows(R.region(), N) = Fbar * ocp.Psi;
  ocp.g_inf.segment(R.region(), N) =
      VectorXd::Constant(N, ocp.lyap.rhs_region) - Fbar * free_resp_d;
  ocp.S_inf.middleRows(R.region(), N) = -Fbar * ocp.Phi;

  const RowVectorXd FB = ocp.lyap.F_v * model.B;
  ocp.G_inf.row(R.decrease()).head(nu) = FB;
  if (cfg.decrease_form == DecreaseForm::kLifted) {
    ocp.g_inf(R.decrease()) = FB.dot(target_feedforward(law, z_bar, u_bar));
    ocp.S_inf.row(R.decrease()) = -FB * law.K_z;
  } else {
    ocp.g_inf(R.decrease()) = ocp.lyap.rhs_decrease - ocp.lyap.F_v.dot(B_d * d_hat);
    ocp.S_inf.row(R.decrease()) = -ocp.lyap.F_v * model.A;
  }
  return ocp;
}

}  // namespace

QpProblem CondensedOcp::qp() const {
  QpProblem p;
  p.Hq = H_inf;
  p.fq = f_inf;
  p.Gineq = G_inf;
  p.gineq = g_inf + S_inf * z_hat;
  return p;
}

double CondensedOcp::cost(const VectorXd& U) const {
  return U.dot(H_inf * U) + 2.0 * f_inf.dot(U) + c0;
}

CondensedOcp build_ocp_offset_free(const LiftedModel& model,
                                   const DisturbanceModel& dist,
                                   const StabilizingLaw& law,
                                   const LyapunovSpec& spec, const MpcConfig& cfg,
                                   const VectorXd& z_hat, const VectorXd& d_hat,
                                   const VectorXd& z_bar, const VectorXd& u_bar) {
  require_shape(dist.B_d(), model.n_z(), dist.n_d(), "build_ocp_offset_free: B_d");
  require_shape(dist.C_d(), model.n_y(), dist.n_d(), "build_ocp_offset_free: C_d");
  return build_common(model, dist.B_d(), dist.C_d(), law, spec, cfg, dist, z_hat,
                      d_hat, z_bar, u_bar);
}

CondensedOcp build_ocp_nominal(const LiftedModel& model, const StabilizingLaw& law,
                               const LyapunovSpec& spec, const MpcConfig& cfg,
                               const VectorXd& z0, const VectorXd& z_bar,
                               const VectorXd& u_bar) {
  // The nominal problem is the offset-free one with a zero disturbance of
  // the law's dimension, so both builders share one arithmetic path.
  const auto nd = law.K_d.cols();
  const DisturbanceModel none = DisturbanceModel::unchecked(
      MatrixXd::Zero(model.n_z(), nd), MatrixXd::Zero(model.n_y(), nd));
  return build_common(model, none.B_d(), none.C_d(), law, spec, cfg, none, z0,
                      VectorXd::Zero(nd), z_bar, u_bar);
}

const char* to_string(Branch b) {
  switch (b) {
    case Branch::kUnconstrained:
      return "unconstrained";
    case Branch::kLyapunovActive:
      return "lyapunov_active";
    case Branch::kOther:
      return "other";
  }
  return "?";
}

ControlResult solve_control(const CondensedOcp& ocp, const MpcConfig& cfg,
                            bool allow_soft) {
  const QpProblem hard = ocp.qp();
  const int nU = static_cast<int>(ocp.H_inf.rows());
  const int nu = ocp.rows.n_u;
  const int m = ocp.rows.total();

  ControlResult res;
  QpSolution sol = solve(hard);
  VectorXd U;
  if (sol.status == QpStatus::kOptimal || !allow_soft) {
    U = sol.x_star;
    res.duals = sol.duals_ineq;
    res.active_set = sol.active_set;
  } else {
    const int first = ocp.rows.output_upper();
    const int ns = ocp.rows.decrease() - first;
    QpProblem soft;
    soft.Hq = MatrixXd::Zero(nU + ns, nU + ns);
    soft.Hq.topLeftCorner(nU, nU) = hard.Hq;
    soft.Hq.bottomRightCorner(ns, ns) = cfg.soft_quadratic * MatrixXd::Identity(ns, ns);
    soft.fq = VectorXd::Zero(nU + ns);
    soft.fq.head(nU) = hard.fq;
    soft.fq.tail(ns).setConstant(cfg.soft_weight);
    soft.Gineq = MatrixXd::Zero(m + ns, nU + ns);
    soft.Gineq.topLeftCorner(m, nU) = hard.Gineq;
    soft.Gineq.block(first, nU, ns, ns) = -MatrixXd::Identity(ns, ns);
    soft.Gineq.bottomRightCorner(ns, ns) = -MatrixXd::Identity(ns, ns);
    soft.gineq = VectorXd::Zero(m + ns);
    soft.gineq.head(m) = hard.gineq;
    sol = solve(soft);
    U = sol.x_star.head(nU);
    res.duals = sol.duals_ineq.head(m);
    for (int i : sol.active_set) {
      if (i < m) res.active_set.push_back(i);
    }
    res.softened = true;
    res.max_slack = sol.x_star.tail(ns).maxCoeff();
  }
  res.status = sol.status;
  res.iterations = sol.iterations;
  res.U = U;
  res.u0 = U.head(nu);
  res.objective = ocp.cost(U);
  const int dec = ocp.rows.decrease();
  for (int i : res.active_set) {
    if (i == dec) res.decrease_active = true;
  }
  if (res.active_set.empty()) {
    res.branch = Branch::kUnconstrained;
  } else if (res.active_set.size() == 1 && res.decrease_active) {
    res.branch = Branch::kLyapunovActive;
  } else {
    res.branch = Branch::kOther;
  }
  return res;
}

ExplicitLaw unconstrained_gain(const CondensedOcp& ocp) {
  const Eigen::LLT<MatrixXd> llt(ocp.H_inf);
  if (llt.info() != Eigen::Success) {
    throw DomainError("unconstrained_gain: Hessian is not positive definite");
  }
  const int nu = ocp.rows.n_u;
  const int N = ocp.rows.N;
  const VectorXd D = repeat(ocp.d_hat, N);
  const VectorXd Zb = repeat(ocp.z_bar, N);
  const VectorXd Ub = repeat(ocp.u_bar, N);
  const MatrixXd PsiQ = ocp.Psi.transpose() * ocp.Q_bar;
  ExplicitLaw law;
  law.branch = Branch::kUnconstrained;
  law.K_mpc = -llt.solve(ocp.F_z).topRows(nu);
  law.c_mpc = llt.solve(VectorXd(PsiQ * (Zb - ocp.Psi_d * D) + ocp.Qu_bar * Ub)).head(nu);
  return law;
}

namespace {

struct DecreaseRow {
  RowVectorXd G;
  double g = 0.0;
  RowVectorXd S;
  double curvature = 0.0;  // G H^{-1} G'
};

DecreaseRow decrease_row(const CondensedOcp& ocp, const Eigen::LLT<MatrixXd>& llt) {
  DecreaseRow r;
  const int dec = ocp.rows.decrease();
  r.G = ocp.G_inf.row(dec);
  r.g = ocp.g_inf(dec);
  r.S = ocp.S_inf.row(dec);
  r.curvature = r.G.dot(llt.solve(VectorXd(r.G.transpose())));
  if (!(r.curvature > 0.0)) {
    throw DomainError("explicit law: zero curvature along the decrease constraint");
  }
  return r;
}

}  // namespace

ExplicitLaw explicit_kkt_solution(const CondensedOcp& ocp) {
  const Eigen::LLT<MatrixXd> llt(ocp.H_inf);
  if (llt.info() != Eigen::Success) {
    throw DomainError("explicit_kkt_solution: Hessian is not positive definite");
  }
  const DecreaseRow r = decrease_row(ocp, llt);
  const auto n = ocp.H_inf.rows();
  const MatrixXd Hinv = llt.solve(MatrixXd::Identity(n, n));
  const VectorXd HiGt = Hinv * r.G.transpose();
  const MatrixXd M1 = HiGt * HiGt.transpose() / r.curvature - Hinv;
  const VectorXd M2 = -HiGt / r.curvature;
  const int nu = ocp.rows.n_u;
  const int N = ocp.rows.N;
  const VectorXd D = repeat(ocp.d_hat, N);
  const VectorXd Zb = repeat(ocp.z_bar, N);
  const VectorXd Ub = repeat(ocp.u_bar, N);
  const MatrixXd PsiQ = ocp.Psi.transpose() * ocp.Q_bar;
  ExplicitLaw law;
  law.branch = Branch::kLyapunovActive;
  law.K_mpc = (M1 * ocp.F_z - M2 * r.S).topRows(nu);
  law.c_mpc = (M1 * VectorXd(PsiQ * (ocp.Psi_d * D - Zb) - ocp.Qu_bar * Ub) - M2 * r.g)
                  .head(nu);
  return law;
}

double explicit_decrease_dual(const CondensedOcp& ocp) {
  const Eigen::LLT<MatrixXd> llt(ocp.H_inf);
  if (llt.info() != Eigen::Success) {
    throw DomainError("explicit_decrease_dual: Hessian is not positive definite");
  }
  const DecreaseRow r = decrease_row(ocp, llt);
  return -(r.G.dot(llt.solve(ocp.f_inf)) + r.g + r.S.dot(ocp.z_hat)) / r.curvature;
}

}  // namespace klmpc
