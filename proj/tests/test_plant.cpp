#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "klmpc/error.hpp"
#include "klmpc/plant.hpp"

namespace klmpc {
namespace {

// Balances written out independently of the library implementation.
Eigen::Vector3d reference_rate(const Eigen::Vector3d& x, const Eigen::Vector2d& u,
                               const CstrParams& p) {
  const double area = std::numbers::pi * p.r_reac * p.r_reac;
  const double k = p.k0 * std::exp(-p.E / (p.Rgas * x(1)));
  const double heat = -p.dH / (p.rho * p.Cp);
  const double jacket = 2.0 * p.Uh / (p.r_reac * p.rho * p.Cp);
  return {p.F0 * (p.c0 - x(0)) / (area * x(2)) - k * x(0),
          p.F0 * (p.T0 - x(1)) / (area * x(2)) + heat * k * x(0) + jacket * (u(0) - x(1)),
          (p.F0 - u(1)) / area};
}

TEST(PlantTest, DerivativeMatchesBalances) {
  const CstrParams p;
  const Eigen::Vector3d x(0.9, 320.0, 0.7);
  const Eigen::Vector2d u(305.0, 0.11);
  const StateRate r = derivative(PlantState::from(x), PlantInput::from(u), p);
  const Eigen::Vector3d ref = reference_rate(x, u, p);
  EXPECT_NEAR(r.dc, ref(0), 1e-12);
  EXPECT_NEAR(r.dT, ref(1), 1e-10);
  EXPECT_NEAR(r.dh, ref(2), 1e-14);
}

TEST(PlantTest, LevelUpdateIsExactUnderConstantFlow) {
  // dh/dt does not depend on the state, so RK4 integrates it exactly.
  const CstrParams p;
  const PlantState x{0.878, 324.5, 0.659};
  const PlantInput u{300.0, 0.12};
  const PlantState next = step(x, u, 1.0, 10, p);
  const double area = std::numbers::pi * p.r_reac * p.r_reac;
  EXPECT_NEAR(next.h, x.h + (p.F0 - u.F) / area, 1e-13);
}

TEST(PlantTest, SteadyStateAtOperatingPoint) {
  // Operating point of the reactor: c = 0.878, T = 324.5, h = 0.659 with
  // Tc = 300 K and F = 0.1 m^3/min.
  const CstrParams p;
  const SteadyState ss = solve_steady_state(p, 0.878, 324.5);
  const StateRate r = derivative(ss.x, ss.u, p);
  EXPECT_LT(std::abs(r.dc), 1e-12);
  EXPECT_LT(std::abs(r.dT), 1e-10);
  EXPECT_LT(std::abs(r.dh), 1e-14);
  EXPECT_NEAR(ss.u.F, p.F0, 1e-12);
  EXPECT_NEAR(ss.x.h, 0.659, 0.01);
  EXPECT_NEAR(ss.u.Tc, 300.0, 0.5);
}

TEST(PlantTest, SteadyStateIsAFixedPointOfTheStep) {
  const CstrParams p;
  const SteadyState ss = solve_steady_state(p, 0.878, 324.5);
  const PlantState next = step(ss.x, ss.u, 1.0, 10, p);
  EXPECT_NEAR(next.c, ss.x.c, 1e-10);
  EXPECT_NEAR(next.T, ss.x.T, 1e-8);
  EXPECT_NEAR(next.h, ss.x.h, 1e-12);
}

TEST(PlantTest, DrainingTheTankRaisesIntegrationError) {
  const CstrParams p;
  const PlantState x{0.878, 324.5, 0.05};
  const PlantInput u{300.0, 1.0};
  try {
    step(x, u, 1.0, 10, p);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LE(e.time(), 1.0);
  }
}

TEST(PlantTest, RejectsInvalidStepArguments) {
  const CstrParams p;
  EXPECT_THROW(step({0.9, 320.0, 0.6}, {300.0, 0.1}, 0.0, 10, p), ValidationError);
  EXPECT_THROW(step({0.9, 320.0, 0.6}, {300.0, 0.1}, 1.0, 0, p), ValidationError);
}

TEST(PlantTest, ParameterValidation) {
  CstrParams p;
  EXPECT_NO_THROW(p.validate());
  p.dH = 1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = CstrParams{};
  p.rho = -1.0;
  EXPECT_THROW(p.validate(), ValidationError);
}

}  // namespace
}  // namespace klmpc
