#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "klmpc/analysis.hpp"
#include "klmpc/error.hpp"
#include "klmpc/io.hpp"
#include "klmpc/sim.hpp"

namespace klmpc {
namespace {

SimScenario three_segments(ControllerKind kind, double segment = 40.0) {
  SimScenario s;
  s.duration = 3.0 * segment;
  s.dt = 1.0;
  s.schedule = {{0.0, Eigen::Vector2d(0.5, -0.2)},
                {segment, Eigen::Vector2d(0.7, -0.1)},
                {2.0 * segment, Eigen::Vector2d(0.4, 0.0)}};
  s.x0 = Eigen::Vector3d(0.5, -0.2, 0.1);
  s.controller = kind;
  return s;
}

double max_offset(const std::vector<SegmentOffset>& segs) {
  double m = 0.0;
  for (const auto& s : segs) m = std::max(m, s.offset.cwiseAbs().maxCoeff());
  return m;
}

TEST(SimTest, OffsetIsZeroForExactTracking) {
  const SimScenario sc = three_segments(ControllerKind::kOffsetFree);
  const ControlledVariableMap H = ControlledVariableMap::select(3, {0, 1});
  ClosedLoopTrace tr;
  for (int k = 0; k <= sc.steps(); ++k) {
    StepRecord r;
    r.t = k;
    const VectorXd& sp = sc.setpoint_at(r.t);
    r.y_p = Eigen::Vector3d(sp(0), sp(1), 7.0);
    r.d_hat = VectorXd::Zero(1);
    tr.records.push_back(r);
  }
  const auto segs = steady_state_offset(tr, sc, H, 5);
  ASSERT_EQ(segs.size(), 3u);
  EXPECT_EQ(max_offset(segs), 0.0);

  const Eigen::Vector3d b(0.01, -0.3, 5.0);
  for (auto& r : tr.records) r.y_p += b;
  for (const auto& s : steady_state_offset(tr, sc, H, 5)) {
    EXPECT_NEAR(s.offset(0), 0.01, 1e-15);
    EXPECT_NEAR(s.offset(1), -0.3, 1e-15);
  }
}

TEST(SimTest, ShortOrAbortedSegmentsAreErrors) {
  const SimScenario sc = three_segments(ControllerKind::kOffsetFree);
  const ControlledVariableMap H = ControlledVariableMap::select(3, {0, 1});
  ClosedLoopTrace tr;
  for (int k = 0; k < 60; ++k) {
    StepRecord r;
    r.t = k;
    r.y_p = Eigen::Vector3d::Zero();
    r.d_hat = VectorXd::Zero(1);
    tr.records.push_back(r);
  }
  EXPECT_THROW(steady_state_offset(tr, sc, H, 5), ValidationError);
  EXPECT_THROW(steady_state_offset(tr, sc, H, 0), ValidationError);
}

TEST(SimTest, NoMismatchTracksExactly) {
  const ControllerBundle b = testing::small_bundle();
  const LiftedModelPlant plant(b.model, b.lib);
  const SimScenario sc = three_segments(ControllerKind::kOffsetFree);
  const ClosedLoopTrace tr = run_closed_loop(plant, b, sc);
  ASSERT_FALSE(tr.abort_reason.has_value()) << *tr.abort_reason;
  ASSERT_EQ(static_cast<int>(tr.records.size()), sc.steps() + 1);
  EXPECT_LT(max_offset(steady_state_offset(tr, sc, b.H, 5)), 1e-6);
}

TEST(SimTest, OffsetFreeRemovesAnOutputBiasNominalDoesNot) {
  const ControllerBundle b = testing::small_bundle();
  const LiftedModelPlant plant(b.model, b.lib, Eigen::Vector3d(0.05, -0.04, 0.02));
  const SimScenario of = three_segments(ControllerKind::kOffsetFree, 100.0);
  const ClosedLoopTrace t1 = run_closed_loop(plant, b, of);
  ASSERT_FALSE(t1.abort_reason.has_value());
  const auto s1 = steady_state_offset(t1, of, b.H, 5);
  EXPECT_LT(max_offset(s1), 1e-6);
  for (const auto& s : s1) EXPECT_LT(s.d_hat_variation, 1e-6);

  const SimScenario nom = three_segments(ControllerKind::kNominal);
  const ClosedLoopTrace t2 = run_closed_loop(plant, b, nom);
  ASSERT_FALSE(t2.abort_reason.has_value());
  EXPECT_GT(max_offset(steady_state_offset(t2, nom, b.H, 5)), 1e-3);
}

TEST(SimTest, TracesAreDeterministic) {
  const ControllerBundle b = testing::small_bundle();
  const LiftedModelPlant plant(b.model, b.lib, Eigen::Vector3d(0.05, -0.04, 0.02));
  const SimScenario sc = three_segments(ControllerKind::kOffsetFree);
  EXPECT_EQ(trace_csv(run_closed_loop(plant, b, sc), 3),
            trace_csv(run_closed_loop(plant, b, sc), 3));
}

TEST(SimTest, StageFailureAbortsWithStageAndTime) {
  ControllerBundle b = testing::small_bundle();
  b.target.u_bounds = {VectorXd::Constant(2, -1e-4), VectorXd::Constant(2, 1e-4)};
  const LiftedModelPlant plant(b.model, b.lib);
  const ClosedLoopTrace tr = run_closed_loop(plant, b, three_segments(ControllerKind::kOffsetFree));
  ASSERT_TRUE(tr.abort_reason.has_value());
  EXPECT_EQ(tr.abort_reason->rfind("target at t=0", 0), 0u) << *tr.abort_reason;
  EXPECT_TRUE(tr.records.empty());
}

TEST(SimTest, ZeroOffsetConditionCases) {
  const ControllerBundle b = testing::small_bundle();
  const CheckContext ctx =
      CheckContext::at_target(b, Eigen::Vector2d(0.5, -0.2), VectorXd::Zero(3));
  const MatrixXd K = unconstrained_gain(ctx.ocp(ctx.z_bar)).K_mpc;

  // n_d = n_y with nonsingular L_d: trivially satisfied.
  const ZeroOffsetReport full = check_zero_offset_condition(b.gains, b.model, K, b.H);
  EXPECT_TRUE(full.holds);
  EXPECT_EQ(full.null_dim, 0);

  // L_d = 0: the whole output space must be annihilated, which fails.
  EstimatorGains none = b.gains;
  none.L_d.setZero();
  const ZeroOffsetReport zero = check_zero_offset_condition(none, b.model, K, b.H);
  EXPECT_FALSE(zero.holds);
  EXPECT_EQ(zero.null_dim, 3);
  EXPECT_GT(zero.max_violation, 1e-3);

  // K placing an eigenvalue of A + B K at 1.
  const MatrixXd K_sing =
      pseudo_inverse(b.model.B) * (MatrixXd::Identity(4, 4) - b.model.A);
  EXPECT_THROW(check_zero_offset_condition(b.gains, b.model, K_sing, b.H), DomainError);
}

TEST(SimTest, ScenarioValidation) {
  SimScenario s = three_segments(ControllerKind::kOffsetFree);
  s.schedule[2].t_start = 30.0;
  EXPECT_THROW(s.validate(2), ValidationError);
  s = three_segments(ControllerKind::kOffsetFree);
  s.schedule[0].t_start = 1.0;
  EXPECT_THROW(s.validate(2), ValidationError);
  s = three_segments(ControllerKind::kOffsetFree);
  EXPECT_THROW(s.validate(3), DimensionError);
  EXPECT_EQ(controller_kind_from_string("nominal"), ControllerKind::kNominal);
  EXPECT_THROW(controller_kind_from_string("pid"), ValidationError);
}

}  // namespace
}  // namespace klmpc
