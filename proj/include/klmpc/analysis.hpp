#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "klmpc/mpc.hpp"
#include "klmpc/sim.hpp"

namespace klmpc {

/// One named numerical cross-check.
struct CheckEntry {
  std::string name;
  /// What the check compares, in words.
  std::string description;
  bool pass = true;
  double max_residual = 0.0;
  double tolerance = 0.0;
  int samples = 0;
  /// Samples outside the check's assumptions (counted, not failed).
  int excluded = 0;
  /// Lifted state of the worst sample, for reproduction.
  VectorXd worst_sample;
};

struct TheoryCheckReport {
  std::vector<CheckEntry> entries;

  bool all_pass() const;
  const CheckEntry* find(const std::string& name) const;
  void append(const TheoryCheckReport& other);
};

/// Operating data shared by the checks: a bundle and a steady-state triple
/// (z_bar, u_bar, d_hat) that satisfies the target equalities.
struct CheckContext {
  const ControllerBundle* bundle = nullptr;
  VectorXd z_bar;
  VectorXd u_bar;
  VectorXd d_hat;

  /// Target triple for `y_bar_c` and `d_hat` from the bundle's target problem.
  static CheckContext at_target(const ControllerBundle& bundle, const VectorXd& y_bar_c,
                                const VectorXd& d_hat);
  CondensedOcp ocp(const VectorXd& z_hat) const;
};

/// Sampling of lifted states around the target. Each sample draws a scale
/// uniformly in [min_scale, max_scale] and then
///  kLiftedState:  z = psi(D_x z_bar + delta), delta_i uniform in
///                 +/- scale * ranges_i (states the plant can actually be in);
///  kBasisOffset:  z = z_bar + T delta, delta_i uniform in +/- scale, with T
///                 the model basis (unit-RMS lifted coordinates; ranges unused).
/// Sample i uses its own RNG stream derived from (seed, i).
struct SampleSpec {
  enum class Mode { kLiftedState, kBasisOffset };

  int samples = 200;
  std::uint64_t seed = 7;
  Mode mode = Mode::kLiftedState;
  VectorXd ranges;
  double min_scale = 0.0;
  double max_scale = 1.0;
};

/// Solver-vs-explicit-law comparison. For each sample the hard OCP is solved
/// and classified by its active set: empty (compared with the unconstrained
/// law) or exactly the decrease row (compared with the decrease-active law
/// and its multiplier). Other active sets are excluded.
/// Entries: "explicit_law_unconstrained", "explicit_law_decrease_active",
/// "explicit_law_decrease_dual".
TheoryCheckReport verify_explicit_law(const CheckContext& ctx, const SampleSpec& samples,
                                      double tol_unconstrained = 1e-8,
                                      double tol_active = 1e-7);

/// Solves the OCP at z_hat = z_bar and checks u0 = u_bar, that the decrease
/// row holds with equality and the predicted Lyapunov value is zero, and
/// that the optimal cost is zero.
/// Entries: "equilibrium_input", "equilibrium_decrease_row",
/// "equilibrium_objective".
TheoryCheckReport verify_equilibrium(const CheckContext& ctx, double tol_input = 1e-7,
                                     double tol_decrease = 1e-8,
                                     double tol_objective = 1e-10);

/// u0(z) - u0(z_bar) = K_mpc (z - z_bar) for samples solved on the same
/// branch as z_bar (K_mpc of that branch); samples on another branch are
/// excluded. Entry: "difference_law".
TheoryCheckReport verify_difference_law(const CheckContext& ctx, const SampleSpec& samples,
                                        double tol = 1e-7);

/// Affine fit of z -> u0 over samples that share one active set: residual
/// of the least-squares affine model. Entry: "piecewise_affine".
TheoryCheckReport verify_piecewise_affine(const CheckContext& ctx,
                                          const SampleSpec& samples, double tol = 1e-8);

/// Summed stage cost of U evaluated by forward recursion (no condensing),
/// so it is exact to round-off near zero.
double recursive_cost(const CondensedOcp& ocp, const ControllerBundle& bundle,
                      const VectorXd& U);

/// Zero-offset condition at the end of a closed-loop run, with K_mpc taken
/// from the branch active over the final settling window.
struct SettleCondition {
  /// "holds", "violated" or "indeterminate" (branch alternates, the run
  /// aborted, the final active set is outside both branches, or
  /// I - A - B K_mpc is singular).
  std::string status = "indeterminate";
  std::string branch;
  /// Why the condition could not be evaluated, when it could not.
  std::string note;
  std::optional<ZeroOffsetReport> report;
};

SettleCondition zero_offset_at_settle(const ControllerBundle& bundle,
                                      const ClosedLoopTrace& trace, int window);

}  // namespace klmpc
