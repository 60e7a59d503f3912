#pragma once

#include <array>

#include <Eigen/Dense>

namespace klmpc {

/// CSTR parameters; defaults are the reactor of the numerical study.
struct CstrParams {
  double F0 = 0.1;        ///< inlet flowrate [m^3/min]
  double T0 = 350.0;      ///< inlet temperature [K]
  double c0 = 1.0;        ///< inlet concentration [kmol/m^3]
  double k0 = 7.2e10;     ///< frequency factor [1/min]
  double Cp = 0.239;      ///< specific heat [kJ/(kg K)]
  double E = 7.275e4;     ///< activation energy [kJ/kmol]
  double Rgas = 8.314;    ///< gas constant [kJ/(kmol K)]
  double Uh = 54.94;      ///< heat transfer coefficient [kJ/(min m^2 K)]
  double r_reac = 0.219;  ///< reactor radius [m]
  double rho = 1000.0;    ///< density [kg/m^3]
  double dH = -5.0e4;     ///< heat of reaction [kJ/kmol]

  /// Throws ValidationError unless every field is positive (dH negative).
  void validate() const;
  double cross_section() const;
};

struct PlantState {
  double c = 0.0;  ///< concentration [kmol/m^3]
  double T = 0.0;  ///< temperature [K]
  double h = 0.0;  ///< level [m]

  Eigen::Vector3d vec() const { return {c, T, h}; }
  static PlantState from(const Eigen::Ref<const Eigen::VectorXd>& v);
};

struct PlantInput {
  double Tc = 0.0;  ///< jacket temperature [K]
  double F = 0.0;   ///< outlet flowrate [m^3/min]

  Eigen::Vector2d vec() const { return {Tc, F}; }
  static PlantInput from(const Eigen::Ref<const Eigen::VectorXd>& v);
};

struct StateRate {
  double dc = 0.0;
  double dT = 0.0;
  double dh = 0.0;
};

/// Right-hand side of the CSTR mass, energy and level balances. Throws
/// DomainError when the result is not finite.
StateRate derivative(const PlantState& x, const PlantInput& u,
                     const CstrParams& p);

/// Classical RK4 over `substeps` equal increments of dt with u held constant.
/// Throws IntegrationError (carrying the failing time offset within the
/// step) when c < 0 or h <= 0 is reached.
PlantState step(const PlantState& x, const PlantInput& u, double dt,
                int substeps, const CstrParams& p);

/// Equilibrium pair of the reactor.
struct SteadyState {
  PlantState x;
  PlantInput u;
};

/// Newton solve for the equilibrium with concentration and temperature fixed
/// at (c, T): the unknowns are (h, Tc, F). Level starts from h_guess.
SteadyState solve_steady_state(const CstrParams& p, double c, double T,
                               double h_guess = 0.659, double Tc_guess = 300.0);

/// Sampled plant seen by the closed loop and the validation harness. The
/// internal state may differ from the physical state (e.g. a lifted model
/// standing in for the reactor); measurements are always physical outputs.
class DiscretePlant {
 public:
  virtual ~DiscretePlant() = default;
  virtual Eigen::VectorXd initial_state(
      const Eigen::VectorXd& x_physical) const = 0;
  virtual Eigen::VectorXd advance(const Eigen::VectorXd& state,
                                  const Eigen::VectorXd& u) const = 0;
  virtual Eigen::VectorXd measure(const Eigen::VectorXd& state) const = 0;
};

/// The reactor sampled every dt minutes with RK4.
class CstrPlant final : public DiscretePlant {
 public:
  CstrPlant(CstrParams params, double dt, int substeps = 10)
      : params_(params), dt_(dt), substeps_(substeps) {}

  Eigen::VectorXd initial_state(const Eigen::VectorXd& x) const override {
    return x;
  }
  Eigen::VectorXd advance(const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) const override {
    return step(PlantState::from(x), PlantInput::from(u), dt_, substeps_,
                params_)
        .vec();
  }
  Eigen::VectorXd measure(const Eigen::VectorXd& x) const override {
    return x;
  }

  const CstrParams& params() const { return params_; }

 private:
  CstrParams params_;
  double dt_;
  int substeps_;
};

}  // namespace klmpc
