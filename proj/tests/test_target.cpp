#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "klmpc/error.hpp"
#include "klmpc/target.hpp"

namespace klmpc {
namespace {

struct TargetFixture {
  LiftedModel model = testing::small_model();
  DisturbanceModel dist = DisturbanceModel::output_disturbance(model);
  ControlledVariableMap H = ControlledVariableMap::select(3, {0, 1});
  TargetSpec spec;

  TargetFixture() {
    spec.y_bar_c = Eigen::Vector2d(0.4, -0.1);
    spec.z_bar_s = VectorXd::Zero(4);
    spec.u_bar_s = VectorXd::Zero(2);
    spec.Q_z_bar = MatrixXd::Identity(4, 4);
    spec.Q_u_bar = 0.1 * MatrixXd::Identity(2, 2);
    spec.u_bounds = {VectorXd::Constant(2, -10.0), VectorXd::Constant(2, 10.0)};
    spec.y_bounds = {VectorXd::Constant(3, -10.0), VectorXd::Constant(3, 10.0)};
  }
};

// Square case: the equalities alone pin (z_bar, u_bar).
TEST(TargetTest, SquareSystemMatchesDirectSolve) {
  TargetFixture f;
  const VectorXd d = Eigen::Vector3d(0.05, -0.02, 0.1);
  const TargetPair t = solve_target(f.model, f.dist, f.H, f.spec, d);
  MatrixXd M = MatrixXd::Zero(6, 6);
  M.topLeftCorner(4, 4) = f.model.A - MatrixXd::Identity(4, 4);
  M.topRightCorner(4, 2) = f.model.B;
  M.bottomLeftCorner(2, 4) = f.H.H * f.model.C;
  VectorXd rhs(6);
  rhs << -f.dist.B_d() * d, f.spec.y_bar_c - f.H.H * f.dist.C_d() * d;
  const VectorXd sol = M.fullPivLu().solve(rhs);
  EXPECT_LT((t.z_bar - sol.head(4)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((t.u_bar - sol.tail(2)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((t.y_bar - (f.model.C * t.z_bar + d)).norm(), 1e-12);
  EXPECT_FALSE(t.softened);
  const TargetResiduals r =
      target_residuals(f.model, f.dist, f.H, f.spec.y_bar_c, d, t.z_bar, t.u_bar);
  EXPECT_LT(r.equilibrium, 1e-10);
  EXPECT_LT(r.setpoint, 1e-10);
}

// Under-determined case: minimum of the weighted objective on the
// equality manifold, checked against the KKT system.
TEST(TargetTest, UnderdeterminedMatchesKktSolve) {
  TargetFixture f;
  f.H = ControlledVariableMap::select(3, {0});
  f.spec.y_bar_c = VectorXd::Constant(1, 0.3);
  f.spec.z_bar_s = Eigen::Vector4d(0.1, 0.2, -0.1, 0.0);
  f.spec.u_bar_s = Eigen::Vector2d(0.05, -0.05);
  const VectorXd d = Eigen::Vector3d(0.02, 0.0, -0.01);
  const TargetPair t = solve_target(f.model, f.dist, f.H, f.spec, d);

  const MatrixXd Qz = f.spec.Q_z_bar + f.spec.tikhonov * MatrixXd::Identity(4, 4);
  MatrixXd Aeq = MatrixXd::Zero(5, 6);
  Aeq.topLeftCorner(4, 4) = f.model.A - MatrixXd::Identity(4, 4);
  Aeq.topRightCorner(4, 2) = f.model.B;
  Aeq.bottomLeftCorner(1, 4) = f.H.H * f.model.C;
  VectorXd beq(5);
  beq << -f.dist.B_d() * d, f.spec.y_bar_c - f.H.H * f.dist.C_d() * d;
  MatrixXd K = MatrixXd::Zero(11, 11);
  K.topLeftCorner(4, 4) = 2.0 * Qz;
  K.block(4, 4, 2, 2) = 2.0 * f.spec.Q_u_bar;
  K.topRightCorner(6, 5) = Aeq.transpose();
  K.bottomLeftCorner(5, 6) = Aeq;
  VectorXd rhs(11);
  rhs << 2.0 * Qz * f.spec.z_bar_s, 2.0 * f.spec.Q_u_bar * f.spec.u_bar_s, beq;
  const VectorXd sol = K.fullPivLu().solve(rhs);
  EXPECT_LT((t.z_bar - sol.head(4)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((t.u_bar - sol.segment(4, 2)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TargetTest, UnreachableInputBoundsAreInfeasible) {
  TargetFixture f;
  f.spec.u_bounds = {VectorXd::Constant(2, -1e-3), VectorXd::Constant(2, 1e-3)};
  EXPECT_THROW(solve_target(f.model, f.dist, f.H, f.spec, VectorXd::Zero(3)),
               InfeasibleError);
}

TEST(TargetTest, OutputBoundsAreSoftened) {
  TargetFixture f;
  f.spec.y_bounds = {VectorXd::Constant(3, -0.05), VectorXd::Constant(3, 0.05)};
  const TargetPair t = solve_target(f.model, f.dist, f.H, f.spec, VectorXd::Zero(3));
  EXPECT_TRUE(t.softened);
  EXPECT_GT(t.max_slack, 0.3);
  f.spec.soft_outputs = false;
  EXPECT_THROW(solve_target(f.model, f.dist, f.H, f.spec, VectorXd::Zero(3)),
               InfeasibleError);
}

TEST(TargetTest, SpecValidation) {
  TargetFixture f;
  EXPECT_NO_THROW(f.spec.validate(f.model, f.H));
  f.spec.y_bar_c = VectorXd::Zero(3);
  EXPECT_THROW(f.spec.validate(f.model, f.H), DimensionError);
  TargetFixture g;
  g.spec.u_bounds.lower(0) = 20.0;
  EXPECT_THROW(g.spec.validate(g.model, g.H), ValidationError);
}

}  // namespace
}  // namespace klmpc
