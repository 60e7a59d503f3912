// Acceptance harness: evaluates each acceptance criterion once on the default
// configuration and prints one PASS/FAIL line per criterion. Exits 1 when any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "klmpc/analysis.hpp"
#include "klmpc/config.hpp"
#include "klmpc/error.hpp"
#include "klmpc/io.hpp"
#include "klmpc/pipeline.hpp"
#include "qp_oracle.hpp"

namespace klmpc {
namespace {

namespace fs = std::filesystem;
using testing::random_matrix;
using testing::random_vector;

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Shared identified CSTR model and controller on the default configuration.
struct CstrSetup {
  RunConfig cfg;
  SteadyState ss;
  ModelArtifact art;
  ControllerBundle bundle;

  CstrSetup()
      : ss(operating_steady_state(cfg)),
        art(identify_artifact(generate(cfg.plant, cfg.data), cfg)),
        bundle(assemble_bundle(cfg, art, ss)) {}
};

double max_abs(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Outcome edmd_recovery() {
  std::mt19937_64 rng(11);
  const MatrixXd A = 0.5 * random_matrix(rng, 3, 3);
  const MatrixXd B = random_matrix(rng, 3, 2);
  SnapshotSet s;
  const int pairs = 500;
  s.X = random_matrix(rng, pairs, 3);
  s.U = random_matrix(rng, pairs, 2);
  s.X_next = s.X * A.transpose() + s.U * B.transpose();
  for (int i = 0; i < pairs; ++i) {
    s.traj_id.push_back(0);
    s.k.push_back(i);
  }
  s.meta.n_traj = 1;
  s.meta.samples_per_traj = pairs;
  const auto t0 = std::chrono::steady_clock::now();
  const IdentificationResult r = identify(s, ObservableLibrary::state_only(3));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double err = std::max((r.model.A - A).cwiseAbs().maxCoeff(),
                              (r.model.B - B).cwiseAbs().maxCoeff());
  return {err < 1e-8 && secs < 5.0,
          fmt::format("max |A - A_true|, |B - B_true| = {:.2e} (< 1e-8), fit {:.3f} s (< 5 s)",
                      err, secs)};
}

Outcome lyapunov_identity(const CstrSetup& s) {
  std::mt19937_64 rng(12);
  const Eigen::Vector3d span = s.cfg.library.v_ranges;
  auto random_state = [&](double scale) {
    VectorXd x = s.ss.x.vec();
    for (int i = 0; i < 3; ++i) {
      x(i) += scale * span(i) * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    }
    return x;
  };
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const VectorXd x = random_state(1.0);
    // Arbitrary lifted centre: the lift of a state plus noise on the
    // non-state observables, which the identity must ignore.
    VectorXd z_bar = s.art.lib.lift(random_state(0.5));
    z_bar.tail(z_bar.size() - 3) += random_vector(rng, static_cast<int>(z_bar.size()) - 3);
    const ShiftedLyapunov sh = shifted_coeffs(s.bundle.spec, z_bar);
    const VectorXd x_bar = s.bundle.spec.D_x * z_bar;
    const double lhs = lyapunov_value(s.bundle.spec, x, x_bar);
    const double rhs = sh.F_v.dot(s.art.lib.lift(x)) + sh.c_shift;
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {worst < 1e-10, fmt::format("max |V(x - x_bar) - (F_v psi(x) + c)| = {:.2e} over "
                                     "1000 pairs (< 1e-10)",
                                     worst)};
}

Outcome fixed_point(const CstrSetup& s) {
  const ControllerBundle& b = s.bundle;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  double worst_ff = 0.0;
  int triples = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < 100; ++t) {
    TargetSpec ts = b.target;
    ts.y_bar_c = Eigen::Vector2d(0.875 + 0.025 * u(rng), 324.5 + 2.0 * u(rng));
    VectorXd d(b.dist.n_d());
    for (int i = 0; i < d.size(); ++i) d(i) = 0.002 * u(rng);
    const TargetPair tp = solve_target(b.model, b.dist, b.H, ts, d);
    VectorXd x0 = b.spec.D_x * tp.z_bar;
    x0 += Eigen::Vector3d(0.01 * u(rng), 1.0 * u(rng), 0.02 * u(rng));
    VectorXd z = b.lib.lift(x0);
    VectorXd z_ff = z;
    const VectorXd ff = target_feedforward(b.law, tp.z_bar, tp.u_bar);
    for (int k = 0; k < 500; ++k) {
      z = b.model.A * z + b.model.B * stabilizing_input(b.law, z, d, tp.z_bar) +
          b.dist.B_d() * d;
      z_ff = b.model.A * z_ff + b.model.B * (ff - b.law.K_z * z_ff) + b.dist.B_d() * d;
    }
    worst = std::max(worst, max_abs(z - tp.z_bar));
    worst_ff = std::max(worst_ff, max_abs(z_ff - tp.z_bar));
    ++triples;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-6 && secs < 10.0,
          fmt::format("max |z_500 - z_bar| = {:.2e} (< 1e-6) over {} triples; "
                      "feedforward form {:.2e}; {:.2f} s",
                      worst, triples, worst_ff, secs)};
}

Outcome qp_oracle() {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> dn(1, 12);
  double primal = 0.0;
  double dual = 0.0;
  int failures = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = dn(rng);
    const int m_eq = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);
    const int m_in = std::uniform_int_distribution<int>(0, 8)(rng);
    const QpProblem p = testing::random_qp(rng, n, m_eq, m_in);
    const auto oracle = testing::enumerate_active_sets(p);
    const QpSolution sol = solve(p);
    if (!oracle || sol.status != QpStatus::kOptimal) {
      ++failures;
      continue;
    }
    primal = std::max(primal, max_abs(sol.x_star - oracle->x));
    if (m_in > 0) dual = std::max(dual, max_abs(sol.duals_ineq - oracle->duals_ineq));
    if (m_eq > 0) dual = std::max(dual, max_abs(sol.duals_eq - oracle->duals_eq));
  }
  return {failures == 0 && primal < 1e-8 && dual < 1e-7,
          fmt::format("200 QPs: primal err {:.2e} (< 1e-8), dual err {:.2e} (< 1e-7), "
                      "{} unsolved",
                      primal, dual, failures)};
}

CheckContext operating_context(const CstrSetup& s) {
  return CheckContext::at_target(s.bundle, s.cfg.scenario.schedule.front().setpoint,
                                 VectorXd::Zero(s.bundle.dist.n_d()));
}

Outcome explicit_law(const CstrSetup& s) {
  const CheckContext ctx = operating_context(s);
  SampleSpec spec;
  spec.samples = 800;
  spec.seed = 15;
  spec.ranges = s.cfg.mpc.state_ranges;
  spec.max_scale = 0.25;
  const TheoryCheckReport rep = verify_explicit_law(ctx, spec);
  const CheckEntry* un = rep.find("explicit_law_unconstrained");
  const CheckEntry* act = rep.find("explicit_law_decrease_active");
  const CheckEntry* dual = rep.find("explicit_law_decrease_dual");
  const bool pass = rep.all_pass() && un->samples >= 50 && act->samples >= 50;
  return {pass, fmt::format("unconstrained {} samples err {:.2e} (< 1e-8); decrease-active "
                            "{} samples err {:.2e} (< 1e-7), dual err {:.2e}",
                            un->samples, un->max_residual, act->samples, act->max_residual,
                            dual->max_residual)};
}

double max_diff(const MatrixXd& a, const MatrixXd& b) {
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

Outcome builders_collapse(const CstrSetup& s) {
  const ControllerBundle& b = s.bundle;
  std::mt19937_64 rng(16);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    VectorXd x = s.ss.x.vec();
    x += Eigen::Vector3d(0.02, 2.0, 0.1).cwiseProduct(random_vector(rng, 3));
    const VectorXd z0 = b.lib.lift(x);
    const VectorXd zs = b.spec.z_bar_s;
    const VectorXd us = b.target.u_bar_s;
    const CondensedOcp off = build_ocp_offset_free(b.model, b.dist, b.law, b.spec, b.mpc, z0,
                                                   VectorXd::Zero(b.dist.n_d()), zs, us);
    const CondensedOcp nom = build_ocp_nominal(b.model, b.law, b.spec, b.mpc, z0, zs, us);
    const QpProblem p = off.qp();
    const QpProblem q = nom.qp();
    worst = std::max({worst, max_diff(p.Hq, q.Hq), max_diff(p.fq, q.fq),
                      max_diff(p.Gineq, q.Gineq), max_diff(p.gineq, q.gineq)});
  }
  return {worst < 1e-12,
          fmt::format("max |offset-free - nominal| over 20 states = {:.2e} (< 1e-12)", worst)};
}

struct ClosedLoopRuns {
  SimScenario sc_of;
  SimScenario sc_nom;
  ClosedLoopTrace offset_free;
  ClosedLoopTrace nominal;
  double seconds = 0.0;
};

ClosedLoopRuns run_scenario(const CstrSetup& s) {
  ClosedLoopRuns r;
  r.sc_of = make_scenario(s.cfg, s.ss, ControllerKind::kOffsetFree);
  r.sc_nom = make_scenario(s.cfg, s.ss, ControllerKind::kNominal);
  const CstrPlant plant = make_plant(s.cfg);
  const auto t0 = std::chrono::steady_clock::now();
  r.offset_free = run_closed_loop(plant, s.bundle, r.sc_of);
  r.nominal = run_closed_loop(plant, s.bundle, r.sc_nom);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

VectorXd worst_offset(const std::vector<SegmentOffset>& segs) {
  VectorXd w = VectorXd::Zero(segs.front().offset.size());
  for (const auto& s : segs) w = w.cwiseMax(s.offset.cwiseAbs());
  return w;
}

Outcome closed_loop_offsets(const CstrSetup& s, const ClosedLoopRuns& r) {
  if (r.offset_free.abort_reason || r.nominal.abort_reason) {
    return {false, "run aborted: " + r.offset_free.abort_reason.value_or("") +
                       r.nominal.abort_reason.value_or("")};
  }
  const int w = r.sc_of.settle_window;
  const VectorXd of = worst_offset(steady_state_offset(r.offset_free, r.sc_of, s.bundle.H, w));
  const VectorXd nom = worst_offset(steady_state_offset(r.nominal, r.sc_nom, s.bundle.H, w));
  const double ratio_c = nom(0) / std::max(of(0), 1e-300);
  const double ratio_T = nom(1) / std::max(of(1), 1e-300);
  const bool bounds = of(0) < 1e-3 && of(1) < 0.05;
  const bool ratio = std::max(ratio_c, ratio_T) >= 10.0;
  return {bounds && ratio && r.seconds < 60.0,
          fmt::format("offset-free |c| {:.2e} (< 1e-3), |T| {:.3f} (< 0.05); nominal |c| "
                      "{:.2e}, |T| {:.3f}; ratio c {:.2f}, T {:.2f} (>= 10); {:.1f} s (< 60 s)",
                      of(0), of(1), nom(0), nom(1), ratio_c, ratio_T, r.seconds)};
}

Outcome zero_offset_condition(const CstrSetup& s, const ClosedLoopRuns& r) {
  const int w = r.sc_of.settle_window;
  int holds = 0;
  int consistent = 0;
  int indeterminate = 0;
  int segments = 0;
  if (!r.offset_free.abort_reason) {
    for (const auto& seg : steady_state_offset(r.offset_free, r.sc_of, s.bundle.H, w)) {
      ClosedLoopTrace head;
      head.controller = r.offset_free.controller;
      for (const auto& rec : r.offset_free.records) {
        if (rec.t < seg.t_end) head.records.push_back(rec);
      }
      const SettleCondition cond = zero_offset_at_settle(s.bundle, head, w);
      ++segments;
      if (cond.status == "holds") {
        ++holds;
        if (std::abs(seg.offset(0)) < 1e-3 && std::abs(seg.offset(1)) < 0.05) ++consistent;
      } else if (cond.status == "indeterminate") {
        ++indeterminate;
      }
    }
  }

  // Negative control: an observer that never updates the disturbance
  // estimate cannot remove the plant-model mismatch.
  EstimatorGains frozen = s.bundle.gains;
  frozen.L_d.setZero();
  const ControllerBundle nb = assemble_bundle(s.cfg, s.art, s.ss, s.bundle.dist, frozen);
  const ClosedLoopTrace tr = run_closed_loop(make_plant(s.cfg), nb, r.sc_of);
  double control = 0.0;
  if (!tr.abort_reason) control = max_abs(worst_offset(steady_state_offset(tr, r.sc_of, nb.H, w)));

  const bool pass = segments > 0 && consistent == holds && control > 1e-3;
  return {pass, fmt::format("checker holds on {}/{} segments ({} indeterminate), bound met on "
                            "{}/{} of those; L_d = 0 control offset {:.2e} (> 1e-3){}",
                            holds, segments, indeterminate, consistent, holds, control,
                            tr.abort_reason ? " [aborted]" : "")};
}

Outcome validation_nrmse(const CstrSetup& s) {
  const MatrixXd inputs = step_pulse_validation_inputs(
      s.ss.u.vec(), s.cfg.validation.windows, s.cfg.validation.window_len);
  const NrmseReport rep = nrmse(s.art.model, s.art.lib, make_plant(s.cfg), s.ss.x.vec(), inputs);
  const VectorXd& e = rep.nrmse;
  const bool pass = e(2) < std::min(e(0), e(1)) && e.maxCoeff() < 0.3;
  return {pass, fmt::format("NRMSE c {:.4f}, T {:.4f}, h {:.5f} (h lowest, all < 0.3)", e(0),
                            e(1), e(2))};
}

Outcome determinism() {
  const fs::path base = fs::temp_directory_path() / "klmpc_acceptance";
  fs::remove_all(base);
  for (const char* name : {"a", "b"}) {
    const std::string common = std::string(" --seed 42 --out ") + (base / name).string();
    for (const std::string sub : {"gen-data", "identify", "validate", "simulate"}) {
      const std::string cmd =
          std::string("KLMPC_LOG=error ") + KLMPC_CLI + " " + sub + common + " >/dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        return {false, fmt::format("'{}' failed in run {}", sub, name)};
      }
    }
  }
  int same = 0;
  std::string differing;
  const char* files[] = {"data.csv",          "model.json",        "validation.csv",
                         "trace_offset-free.csv", "trace_nominal.csv", "summary.json"};
  for (const char* f : files) {
    if (read_file((base / "a" / f).string()) == read_file((base / "b" / f).string())) {
      ++same;
    } else {
      differing += std::string(" ") + f;
    }
  }
  const int total = static_cast<int>(std::size(files));
  return {same == total,
          fmt::format("{}/{} outputs byte-identical across two seeded CLI runs{}", same, total,
                      differing.empty() ? "" : ", differing:" + differing)};
}

}  // namespace
}  // namespace klmpc

int main() {
  using namespace klmpc;
  spdlog::set_level(spdlog::level::warn);
  int evaluated = 0;
  int passed = 0;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++evaluated;
    passed += o.pass ? 1 : 0;
    std::cout << fmt::format("criterion {:2d} {} {}: {} [{:.2f} s]", id,
                             o.pass ? "PASS" : "FAIL", title, o.detail, secs)
              << std::endl;
  };

  const auto t0 = std::chrono::steady_clock::now();
  const CstrSetup setup;
  std::cout << fmt::format("setup: identified CSTR model from {} pairs, n_z = {} [{:.2f} s]",
                           setup.art.n_pairs, setup.art.model.n_z(),
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count())
            << std::endl;

  report(1, "EDMD recovers a linear system", edmd_recovery);
  report(2, "shifted Lyapunov identity", [&] { return lyapunov_identity(setup); });
  report(3, "stabilizing-law fixed point", [&] { return fixed_point(setup); });
  report(4, "QP solver matches enumeration", qp_oracle);
  report(5, "explicit control laws", [&] { return explicit_law(setup); });
  report(6, "builders collapse at zero disturbance", [&] { return builders_collapse(setup); });
  std::optional<ClosedLoopRuns> runs;
  auto closed_loop = [&]() -> const ClosedLoopRuns& {
    if (!runs) runs = run_scenario(setup);
    return *runs;
  };
  report(7, "closed-loop offsets", [&] { return closed_loop_offsets(setup, closed_loop()); });
  report(8, "zero-offset condition", [&] { return zero_offset_condition(setup, closed_loop()); });
  report(9, "validation NRMSE", [&] { return validation_nrmse(setup); });
  report(10, "determinism", determinism);

  std::cout << fmt::format("acceptance: {} criteria evaluated, {} passed, {} failed", evaluated,
                           passed, evaluated - passed)
            << std::endl;
  return passed == evaluated ? 0 : 1;
}
