#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "klmpc/error.hpp"
#include "qp_oracle.hpp"

namespace klmpc {
namespace {

TEST(QpTest, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dn(1, 12);
  int compared = 0;
  for (int t = 0; t < 120; ++t) {
    const int n = dn(rng);
    const int m_eq = std::uniform_int_distribution<int>(0, std::min(2, n - 1))(rng);
    const int m_in = std::uniform_int_distribution<int>(0, 8)(rng);
    const QpProblem p = testing::random_qp(rng, n, m_eq, m_in);
    const auto oracle = testing::enumerate_active_sets(p);
    ASSERT_TRUE(oracle.has_value()) << "trial " << t;
    const QpSolution s = solve(p);
    ASSERT_EQ(s.status, QpStatus::kOptimal) << "trial " << t;
    EXPECT_LT((s.x_star - oracle->x).cwiseAbs().maxCoeff(), 1e-8) << "trial " << t;
    if (m_in > 0) {
      EXPECT_LT((s.duals_ineq - oracle->duals_ineq).cwiseAbs().maxCoeff(), 1e-7)
          << "trial " << t;
    }
    if (m_eq > 0) {
      EXPECT_LT((s.duals_eq - oracle->duals_eq).cwiseAbs().maxCoeff(), 1e-7)
          << "trial " << t;
    }
    const KktResiduals r = kkt_residuals(p, s);
    EXPECT_LT(r.stationarity, 1e-8);
    EXPECT_LT(r.primal, 1e-9);
    EXPECT_LT(r.dual, 1e-12);
    EXPECT_LT(r.complementarity, 1e-9);
    ++compared;
  }
  EXPECT_EQ(compared, 120);
}

TEST(QpTest, UnconstrainedMinimizer) {
  QpProblem p;
  p.Hq = (MatrixXd(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
  p.fq = Eigen::Vector2d(-1.0, 1.0);
  const QpSolution s = solve(p.normalized());
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  const VectorXd x = p.Hq.ldlt().solve(-p.fq);
  EXPECT_LT((s.x_star - x).norm(), 1e-12);
  EXPECT_TRUE(s.active_set.empty());
  EXPECT_NEAR(s.objective, 0.5 * x.dot(p.Hq * x) + p.fq.dot(x), 1e-12);
}

TEST(QpTest, BoxProjection) {
  // min 1/2 |x - c|^2 over a box is the clipped point; multipliers are
  // the clipping distances.
  QpProblem p;
  p.Hq = MatrixXd::Identity(3, 3);
  const Eigen::Vector3d c(2.0, -0.5, -3.0);
  p.fq = -c;
  p.Gineq.resize(6, 3);
  p.Gineq << MatrixXd::Identity(3, 3), -MatrixXd::Identity(3, 3);
  p.gineq = VectorXd::Ones(6);
  const QpSolution s = solve(p.normalized());
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_LT((s.x_star - Eigen::Vector3d(1.0, -0.5, -1.0)).norm(), 1e-12);
  EXPECT_NEAR(s.duals_ineq(0), 1.0, 1e-12);
  EXPECT_NEAR(s.duals_ineq(5), 2.0, 1e-12);
  EXPECT_EQ(s.active_set, (std::vector<int>{0, 5}));
}

TEST(QpTest, DetectsInfeasibility) {
  QpProblem p;
  p.Hq = MatrixXd::Identity(1, 1);
  p.fq = VectorXd::Zero(1);
  p.Gineq = (MatrixXd(2, 1) << 1.0, -1.0).finished();
  p.gineq = Eigen::Vector2d(-1.0, -1.0);  // x <= -1 and x >= 1
  const QpSolution s = solve(p.normalized());
  EXPECT_EQ(s.status, QpStatus::kInfeasible);
  EXPECT_GT(s.infeasibility, 0.0);
}

TEST(QpTest, InconsistentEqualitiesAreInfeasible) {
  QpProblem p;
  p.Hq = MatrixXd::Identity(2, 2);
  p.fq = VectorXd::Zero(2);
  p.Aeq = (MatrixXd(2, 2) << 1.0, 1.0, 2.0, 2.0).finished();
  p.beq = Eigen::Vector2d(1.0, 3.0);
  EXPECT_EQ(solve(p.normalized()).status, QpStatus::kInfeasible);
}

TEST(QpTest, ValidationRejectsBadProblems) {
  QpProblem p;
  p.Hq = (MatrixXd(2, 2) << 1.0, 2.0, 0.0, 1.0).finished();
  p.fq = VectorXd::Zero(2);
  EXPECT_THROW(p.normalized().validate(), ValidationError);
  p.Hq = -MatrixXd::Identity(2, 2);
  EXPECT_THROW(p.normalized().validate(), ValidationError);
  p.Hq = MatrixXd::Identity(2, 2);
  p.fq = VectorXd::Zero(3);
  EXPECT_THROW(p.normalized().validate(), DimensionError);
}

TEST(QpTest, DeterministicSolution) {
  std::mt19937_64 rng(5);
  const QpProblem p = testing::random_qp(rng, 8, 1, 8);
  const QpSolution a = solve(p);
  const QpSolution b = solve(p);
  EXPECT_EQ(a.x_star, b.x_star);
  EXPECT_EQ(a.active_set, b.active_set);
}

TEST(QpTest, TextDumpHasBlockHeaders) {
  std::mt19937_64 rng(6);
  const QpProblem p = testing::random_qp(rng, 3, 1, 2);
  std::ostringstream os;
  write_problem_text(os, p);
  const std::string s = os.str();
  EXPECT_NE(s.find("Hq 3 3"), std::string::npos);
  EXPECT_NE(s.find("Gineq 2 3"), std::string::npos);
}

}  // namespace
}  // namespace klmpc
