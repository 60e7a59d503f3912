#include "klmpc/analysis.hpp"

#include <map>
#include <random>

#include "klmpc/error.hpp"

namespace klmpc {

bool TheoryCheckReport::all_pass() const {
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return true;
}

const CheckEntry* TheoryCheckReport::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

void TheoryCheckReport::append(const TheoryCheckReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

CheckContext CheckContext::at_target(const ControllerBundle& bundle,
                                     const VectorXd& y_bar_c, const VectorXd& d_hat) {
  TargetSpec spec = bundle.target;
  spec.y_bar_c = y_bar_c;
  const TargetPair tp = solve_target(bundle.model, bundle.dist, bundle.H, spec, d_hat);
  return CheckContext{&bundle, tp.z_bar, tp.u_bar, d_hat};
}

CondensedOcp CheckContext::ocp(const VectorXd& z_hat) const {
  const ControllerBundle& b = *bundle;
  return build_ocp_offset_free(b.model, b.dist, b.law, b.spec, b.mpc, z_hat, d_hat, z_bar,
                               u_bar);
}

namespace {

/// Running maximum of one check.
struct Tracker {
  CheckEntry entry;

  Tracker(std::string name, std::string description, double tol) {
    entry.name = std::move(name);
    entry.description = std::move(description);
    entry.tolerance = tol;
  }

  void add(double residual, const VectorXd& z) {
    ++entry.samples;
    if (!(residual <= entry.max_residual) || entry.worst_sample.size() == 0) {
      if (!(residual <= entry.max_residual)) entry.max_residual = residual;
      entry.worst_sample = z;
    }
    if (!(residual < entry.tolerance)) entry.pass = false;
  }

  CheckEntry done(int excluded = 0) {
    entry.excluded = excluded;
    return entry;
  }
};

std::vector<VectorXd> draw_samples(const CheckContext& ctx, const SampleSpec& s) {
  const ControllerBundle& b = *ctx.bundle;
  const VectorXd x_bar = b.spec.D_x * ctx.z_bar;
  const bool lifted = s.mode == SampleSpec::Mode::kLiftedState;
  if (lifted && s.ranges.size() != x_bar.size()) {
    throw DimensionError("SampleSpec: ranges must have one entry per state");
  }
  const MatrixXd T = b.model.basis_or_identity();
  std::vector<VectorXd> out;
  out.reserve(s.samples);
  for (int i = 0; i < s.samples; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed),
                      static_cast<std::uint32_t>(s.seed >> 32), static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> scale_dist(s.min_scale, s.max_scale);
    const double scale = scale_dist(rng);
    if (lifted) {
      VectorXd x = x_bar;
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += scale * s.ranges(j) * unit(rng);
      out.push_back(b.lib.lift(x));
    } else {
      VectorXd delta(T.cols());
      for (Eigen::Index j = 0; j < delta.size(); ++j) delta(j) = scale * unit(rng);
      out.push_back(ctx.z_bar + T * delta);
    }
  }
  return out;
}

std::string signature(const std::vector<int>& active) {
  std::string s;
  for (int i : active) s += std::to_string(i) + ";";
  return s;
}

}  // namespace

double recursive_cost(const CondensedOcp& ocp, const ControllerBundle& bundle,
                      const VectorXd& U) {
  const LiftedModel& m = bundle.model;
  const int nu = m.n_u();
  VectorXd z = ocp.z_hat;
  const VectorXd w = bundle.dist.B_d() * ocp.d_hat;
  double cost = 0.0;
  for (int k = 0; k < ocp.rows.N; ++k) {
    const VectorXd u = U.segment(k * nu, nu);
    z = m.A * z + m.B * u + w;
    const VectorXd ez = z - ocp.z_bar;
    const VectorXd eu = u - ocp.u_bar;
    cost += ez.dot(bundle.mpc.Q_z * ez) + eu.dot(bundle.mpc.Q_u * eu);
  }
  return cost;
}

TheoryCheckReport verify_explicit_law(const CheckContext& ctx, const SampleSpec& samples,
                                      double tol_unconstrained, double tol_active) {
  const ControllerBundle& b = *ctx.bundle;
  Tracker un("explicit_law_unconstrained",
             "solver u0 vs closed-form unconstrained law where no constraint is active",
             tol_unconstrained);
  Tracker act("explicit_law_decrease_active",
              "solver u0 vs closed-form law where only the Lyapunov decrease row is active",
              tol_active);
  Tracker dual("explicit_law_decrease_dual",
               "solver multiplier of the decrease row vs its closed-form value", tol_active);
  int excluded = 0;
  for (const VectorXd& z : draw_samples(ctx, samples)) {
    const CondensedOcp ocp = ctx.ocp(z);
    const ControlResult res = solve_control(ocp, b.mpc, false);
    if (res.status != QpStatus::kOptimal) {
      ++excluded;
      continue;
    }
    const double scale = std::max(1.0, res.u0.cwiseAbs().maxCoeff());
    if (res.branch == Branch::kUnconstrained) {
      un.add((unconstrained_gain(ocp).apply(z) - res.u0).cwiseAbs().maxCoeff() / scale, z);
    } else if (res.branch == Branch::kLyapunovActive) {
      act.add((explicit_kkt_solution(ocp).apply(z) - res.u0).cwiseAbs().maxCoeff() / scale,
              z);
      const double v = res.duals(ocp.rows.decrease());
      dual.add(std::abs(explicit_decrease_dual(ocp) - v) / std::max(1.0, std::abs(v)), z);
    } else {
      ++excluded;
    }
  }
  TheoryCheckReport rep;
  rep.entries = {un.done(excluded), act.done(excluded), dual.done(excluded)};
  return rep;
}

TheoryCheckReport verify_equilibrium(const CheckContext& ctx, double tol_input,
                                     double tol_decrease, double tol_objective) {
  const ControllerBundle& b = *ctx.bundle;
  Tracker input("equilibrium_input", "u0 at z_hat = z_bar equals u_bar", tol_input);
  Tracker decrease("equilibrium_decrease_row",
                   "decrease row tight at z_hat = z_bar with zero Lyapunov value on both sides",
                   tol_decrease);
  Tracker objective("equilibrium_objective", "optimal cost at z_hat = z_bar is zero",
                    tol_objective);
  const CondensedOcp ocp = ctx.ocp(ctx.z_bar);
  const ControlResult res = solve_control(ocp, b.mpc, false);
  if (res.status != QpStatus::kOptimal) {
    const double inf = std::numeric_limits<double>::infinity();
    input.add(inf, ctx.z_bar);
    decrease.add(inf, ctx.z_bar);
    objective.add(inf, ctx.z_bar);
  } else {
    const double scale = std::max(1.0, ctx.u_bar.cwiseAbs().maxCoeff());
    input.add((res.u0 - ctx.u_bar).cwiseAbs().maxCoeff() / scale, ctx.z_bar);

    const int row = ocp.rows.decrease();
    const double lhs = ocp.G_inf.row(row).dot(res.U);
    const double rhs = ocp.g_inf(row) + ocp.S_inf.row(row).dot(ctx.z_bar);
    const VectorXd z1 = b.model.A * ctx.z_bar + b.model.B * res.u0 + b.dist.B_d() * ctx.d_hat;
    const VectorXd x_bar = b.spec.D_x * ctx.z_bar;
    const double v1 = lyapunov_value(b.spec, b.spec.D_x * z1, x_bar);
    const double vh = lyapunov_value(b.spec, b.spec.D_x * ocp.lyap.z1_h, x_bar);
    decrease.add(std::max({std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)), v1, vh}),
                 ctx.z_bar);
    objective.add(recursive_cost(ocp, b, res.U), ctx.z_bar);
  }
  TheoryCheckReport rep;
  rep.entries = {input.done(), decrease.done(), objective.done()};
  return rep;
}

TheoryCheckReport verify_difference_law(const CheckContext& ctx, const SampleSpec& samples,
                                        double tol) {
  const ControllerBundle& b = *ctx.bundle;
  Tracker diff("difference_law",
               "u0(z) - u0(z_bar) = K_mpc (z - z_bar) on the branch active at z_bar", tol);
  const CondensedOcp ocp_bar = ctx.ocp(ctx.z_bar);
  const ControlResult at_bar = solve_control(ocp_bar, b.mpc, false);
  int excluded = 0;
  if (at_bar.status != QpStatus::kOptimal || at_bar.branch == Branch::kOther) {
    diff.add(std::numeric_limits<double>::infinity(), ctx.z_bar);
  } else {
    const MatrixXd K = at_bar.branch == Branch::kUnconstrained
                           ? unconstrained_gain(ocp_bar).K_mpc
                           : explicit_kkt_solution(ocp_bar).K_mpc;
    for (const VectorXd& z : draw_samples(ctx, samples)) {
      const ControlResult res = solve_control(ctx.ocp(z), b.mpc, false);
      if (res.status != QpStatus::kOptimal || res.branch != at_bar.branch) {
        ++excluded;
        continue;
      }
      const double scale = std::max(1.0, res.u0.cwiseAbs().maxCoeff());
      diff.add((res.u0 - at_bar.u0 - K * (z - ctx.z_bar)).cwiseAbs().maxCoeff() / scale, z);
    }
  }
  TheoryCheckReport rep;
  rep.entries = {diff.done(excluded)};
  return rep;
}

TheoryCheckReport verify_piecewise_affine(const CheckContext& ctx,
                                          const SampleSpec& samples, double tol) {
  const ControllerBundle& b = *ctx.bundle;
  Tracker fit("piecewise_affine",
              "z -> u0 is affine over samples sharing one active set (least-squares fit)",
              tol);
  std::map<std::string, std::vector<std::pair<VectorXd, VectorXd>>> groups;
  for (const VectorXd& z : draw_samples(ctx, samples)) {
    const ControlResult res = solve_control(ctx.ocp(z), b.mpc, false);
    if (res.status == QpStatus::kOptimal) groups[signature(res.active_set)].push_back({z, res.u0});
  }
  const auto largest = std::max_element(
      groups.begin(), groups.end(),
      [](const auto& a, const auto& c) { return a.second.size() < c.second.size(); });
  const int nz = b.model.n_z();
  int used = 0;
  if (largest == groups.end() || static_cast<int>(largest->second.size()) < nz + 2) {
    fit.add(std::numeric_limits<double>::infinity(), ctx.z_bar);
  } else {
    const auto& pts = largest->second;
    used = static_cast<int>(pts.size());
    // Regress on coordinates normalized by the model basis so the fit is
    // well conditioned.
    const Eigen::PartialPivLU<MatrixXd> T(b.model.basis_or_identity());
    MatrixXd X(used, nz + 1);
    MatrixXd Y(used, b.model.n_u());
    for (int i = 0; i < used; ++i) {
      X.row(i).head(nz) = T.solve(pts[i].first - ctx.z_bar).transpose();
      X(i, nz) = 1.0;
      Y.row(i) = pts[i].second.transpose();
    }
    const MatrixXd coef = X.colPivHouseholderQr().solve(Y);
    const MatrixXd resid = X * coef - Y;
    for (int i = 0; i < used; ++i) {
      const double scale = std::max(1.0, Y.row(i).cwiseAbs().maxCoeff());
      fit.add(resid.row(i).cwiseAbs().maxCoeff() / scale, pts[i].first);
    }
  }
  TheoryCheckReport rep;
  rep.entries = {fit.done(samples.samples - used)};
  return rep;
}

SettleCondition zero_offset_at_settle(const ControllerBundle& bundle,
                                      const ClosedLoopTrace& trace, int window) {
  SettleCondition out;
  if (trace.abort_reason || static_cast<int>(trace.records.size()) < window || window < 1) {
    return out;
  }
  const auto last = trace.records.end() - window;
  const Branch br = last->branch;
  for (auto it = last; it != trace.records.end(); ++it) {
    if (it->branch != br) {
      out.branch = "mixed";
      return out;
    }
  }
  out.branch = to_string(br);
  if (br == Branch::kOther) return out;
  const StepRecord& rec = trace.records.back();
  const CondensedOcp ocp =
      build_ocp_offset_free(bundle.model, bundle.dist, bundle.law, bundle.spec, bundle.mpc,
                            rec.z_hat, rec.d_hat, rec.z_bar, rec.u_bar);
  const MatrixXd K = br == Branch::kUnconstrained ? unconstrained_gain(ocp).K_mpc
                                                  : explicit_kkt_solution(ocp).K_mpc;
  try {
    out.report = check_zero_offset_condition(bundle.gains, bundle.model, K, bundle.H);
  } catch (const DomainError& e) {
    out.note = e.what();
    return out;
  }
  out.status = out.report->holds ? "holds" : "violated";
  return out;
}

}  // namespace klmpc
