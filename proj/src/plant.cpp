#include "klmpc/plant.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

void CstrParams::validate() const {
  const std::array<double, 10> positive = {F0, T0, c0, k0,     Cp,
                                           E,  Rgas, Uh, r_reac, rho};
  for (double v : positive) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("CstrParams: all parameters except dH must be positive");
    }
  }
  if (!(dH < 0.0) || !std::isfinite(dH)) {
    throw ValidationError("CstrParams: dH must be negative (exothermic)");
  }
}

double CstrParams::cross_section() const {
  return std::numbers::pi * r_reac * r_reac;
}

PlantState PlantState::from(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return {v(0), v(1), v(2)};
}

PlantInput PlantInput::from(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return {v(0), v(1)};
}

StateRate derivative(const PlantState& x, const PlantInput& u,
                     const CstrParams& p) {
  const double area = p.cross_section();
  const double rate = p.k0 * std::exp(-p.E / (p.Rgas * x.T)) * x.c;
  StateRate out;
  out.dc = p.F0 * (p.c0 - x.c) / (area * x.h) - rate;
  out.dT = p.F0 * (p.T0 - x.T) / (area * x.h) - p.dH / (p.rho * p.Cp) * rate +
           2.0 * p.Uh / (p.r_reac * p.rho * p.Cp) * (u.Tc - x.T);
  out.dh = (p.F0 - u.F) / area;
  if (!std::isfinite(out.dc) || !std::isfinite(out.dT) ||
      !std::isfinite(out.dh)) {
    std::ostringstream os;
    os << "derivative: non-finite rate at state (c=" << x.c << ", T=" << x.T
       << ", h=" << x.h << ")";
    throw DomainError(os.str());
  }
  return out;
}

namespace {

PlantState axpy(const PlantState& x, double a, const StateRate& k) {
  return {x.c + a * k.dc, x.T + a * k.dT, x.h + a * k.dh};
}

}  // namespace

PlantState step(const PlantState& x0, const PlantInput& u, double dt,
                int substeps, const CstrParams& p) {
  if (!(dt > 0.0) || substeps < 1) {
    throw ValidationError("step: dt must be positive and substeps >= 1");
  }
  const double h = dt / substeps;
  PlantState x = x0;
  for (int s = 0; s < substeps; ++s) {
    const StateRate k1 = derivative(x, u, p);
    const StateRate k2 = derivative(axpy(x, 0.5 * h, k1), u, p);
    const StateRate k3 = derivative(axpy(x, 0.5 * h, k2), u, p);
    const StateRate k4 = derivative(axpy(x, h, k3), u, p);
    x.c += h / 6.0 * (k1.dc + 2.0 * k2.dc + 2.0 * k3.dc + k4.dc);
    x.T += h / 6.0 * (k1.dT + 2.0 * k2.dT + 2.0 * k3.dT + k4.dT);
    x.h += h / 6.0 * (k1.dh + 2.0 * k2.dh + 2.0 * k3.dh + k4.dh);
    if (!(x.c >= 0.0) || !(x.h > 0.0) || !std::isfinite(x.T)) {
      const double t_fail = (s + 1) * h;
      std::ostringstream os;
      os << "step: state left validity region at t+" << t_fail
         << " (c=" << x.c << ", T=" << x.T << ", h=" << x.h << ")";
      throw IntegrationError(os.str(), t_fail);
    }
  }
  return x;
}

SteadyState solve_steady_state(const CstrParams& p, double c, double T,
                               double h_guess, double Tc_guess) {
  // Unknowns v = (h, Tc, F); residual is the full rate vector.
  Eigen::Vector3d v(h_guess, Tc_guess, p.F0);
  auto residual = [&](const Eigen::Vector3d& w) {
    const StateRate r = derivative({c, T, w(0)}, {w(1), w(2)}, p);
    return Eigen::Vector3d(r.dc, r.dT, r.dh);
  };
  for (int it = 0; it < 100; ++it) {
    const Eigen::Vector3d r = residual(v);
    if (r.cwiseAbs().maxCoeff() < 1e-13) break;
    Eigen::Matrix3d J;
    for (int j = 0; j < 3; ++j) {
      const double step = 1e-7 * std::max(1.0, std::abs(v(j)));
      Eigen::Vector3d vp = v;
      Eigen::Vector3d vm = v;
      vp(j) += step;
      vm(j) -= step;
      J.col(j) = (residual(vp) - residual(vm)) / (2.0 * step);
    }
    v -= J.partialPivLu().solve(r);
    if (!(v(0) > 0.0)) {
      throw DomainError("solve_steady_state: Newton iterate left h > 0");
    }
  }
  if (residual(v).cwiseAbs().maxCoeff() > 1e-10) {
    throw DomainError("solve_steady_state: Newton did not converge");
  }
  return {{c, T, v(0)}, {v(1), v(2)}};
}

}  // namespace klmpc
