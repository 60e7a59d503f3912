#pragma once

#include <random>

#include "klmpc/sim.hpp"

namespace klmpc::testing {

/// [x1, x2, x3, V] with V = |x - x_s|^2 around x_s = (0.5, -0.2, 0.1).
inline ObservableLibrary small_library() {
  using K = Observable::Kind;
  return ObservableLibrary(
      3, {{K::kState, 0, 0}, {K::kState, 1, 0}, {K::kState, 2, 0}, {K::kLyapunov, 0, 0}},
      Eigen::Vector3d(0.5, -0.2, 0.1), MatrixXd::Identity(3, 3));
}

/// Well-conditioned stable 4-state, 2-input predictor on small_library().
inline LiftedModel small_model() {
  LiftedModel m;
  m.A.resize(4, 4);
  m.A << 0.80, 0.10, 0.00, 0.05,
         0.00, 0.70, 0.10, 0.00,
         0.05, 0.00, 0.60, 0.00,
         0.10, 0.00, 0.00, 0.50;
  m.B.resize(4, 2);
  m.B << 1.0, 0.0,
         0.0, 1.0,
         0.5, 0.5,
         0.2, -0.1;
  m.C = MatrixXd::Zero(3, 4);
  m.C.leftCols(3).setIdentity();
  return m;
}

/// Bundle around small_model(): output disturbance on all outputs, (c, T)
/// analogues y1, y2 controlled, N = 5, wide bounds.
inline ControllerBundle small_bundle(double r = 50.0, int N = 5) {
  const LiftedModel model = small_model();
  const ObservableLibrary lib = small_library();
  const DisturbanceModel dist = DisturbanceModel::output_disturbance(model);
  const ControlledVariableMap H = ControlledVariableMap::select(3, {0, 1});
  const EstimatorGains gains = design_gains(model, dist, EstimatorDesign{1e-2, 1e-1, 1e-2});
  const LyapunovSpec spec = LyapunovSpec::from_library(lib, r);
  const StabilizingLaw law = design_law(model, dist, spec);

  MpcConfig mc;
  mc.N = N;
  mc.Q_z = spec.lifted_weight() + 1e-6 * MatrixXd::Identity(4, 4);
  mc.Q_u = 0.1 * MatrixXd::Identity(2, 2);
  mc.u_bounds = {VectorXd::Constant(2, -10.0), VectorXd::Constant(2, 10.0)};
  mc.y_bounds = {VectorXd::Constant(3, -10.0), VectorXd::Constant(3, 10.0)};

  TargetSpec ts;
  ts.y_bar_c = Eigen::Vector2d(0.5, -0.2);
  ts.z_bar_s = spec.z_bar_s;
  ts.u_bar_s = VectorXd::Zero(2);
  ts.Q_z_bar = mc.Q_z;
  ts.Q_u_bar = mc.Q_u;
  ts.u_bounds = mc.u_bounds;
  ts.y_bounds = mc.y_bounds;

  ControllerBundle b{model, lib, dist, H, gains, law, spec, mc, ts};
  b.validate();
  return b;
}

inline VectorXd random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline MatrixXd random_matrix(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace klmpc::testing
