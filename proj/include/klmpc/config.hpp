#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klmpc/edmd.hpp"
#include "klmpc/estimator.hpp"
#include "klmpc/lyapunov.hpp"
#include "klmpc/plant.hpp"
#include "klmpc/sim.hpp"

namespace klmpc {

inline constexpr int kConfigVersion = 1;

/// Operating point the library, Lyapunov function and input defaults are
/// centred on. The level and the steady inputs follow from the steady-state
/// solve at (c, T).
struct OperatingPointConfig {
  double c = 0.878;
  double T = 324.5;
  double h_guess = 0.659;
};

struct LibraryConfig {
  std::vector<std::string> observables = {"x1",   "x2",    "x3",
                                          "x1^2", "x2^2",  "x1*x2",
                                          "x1*exp(-1/x2)", "V"};
  /// Q_v = diag(1 / range^2).
  Eigen::Vector3d v_ranges{0.11, 10.0, 0.8};
  /// Sublevel r as a quantile of V over the identification data, unless r is
  /// given explicitly.
  double r_quantile = 0.95;
  std::optional<double> r;
};

struct DisturbanceConfig {
  /// Measurement channels carrying an integrating output disturbance.
  std::vector<int> channels = {0, 1, 2};
};

struct LqrConfig {
  /// Q = D_x' Q_v D_x + q_regularization I, R = r_scale I.
  double q_regularization = 1e-6;
  double r_scale = 1.0;
};

struct MpcSettings {
  int N = 10;
  /// Q_z = D_x' diag(1 / state_ranges^2) D_x + q_regularization I.
  Eigen::Vector3d state_ranges{0.11, 10.0, 0.8};
  double q_regularization = 1e-6;
  /// Q_u = input_weight diag(1 / input_ranges^2).
  Eigen::Vector2d input_ranges{25.0, 0.12};
  double input_weight = 1e-2;
  Eigen::Vector2d u_min{290.0, 0.04};
  Eigen::Vector2d u_max{315.0, 0.16};
  Eigen::Vector3d y_min{0.81, 320.0, 0.4};
  Eigen::Vector3d y_max{0.92, 330.0, 1.2};
  DecreaseForm decrease_form = DecreaseForm::kLifted;
  double soft_weight = 1e4;
};

struct TargetSettings {
  double tikhonov = 1e-8;
  bool soft_outputs = true;
  double soft_weight = 1e4;
};

struct ScheduleEntry {
  double t = 0.0;
  Eigen::Vector2d setpoint;
};

struct ScenarioConfig {
  double duration = 200.0;
  double dt = 1.0;
  std::vector<ScheduleEntry> schedule;
  /// Initial plant state; the operating-point steady state when absent.
  std::optional<Eigen::Vector3d> x0;
  int settle_window = 5;
  int substeps = 10;

  /// 0.878, 0.85, 0.90, 0.87 repeated every 25 min, T at 324.5.
  static std::vector<ScheduleEntry> default_schedule();
};

struct ValidationConfig {
  int windows = 6;
  int window_len = 15;
};

/// Whole-pipeline configuration. Every section is optional in the JSON
/// document; absent keys keep their defaults, unknown keys are rejected.
struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 42;
  std::string output_dir = "out";
  CstrParams plant;
  OperatingPointConfig operating_point;
  DataGenConfig data;
  IdentifyOptions identification;
  LibraryConfig library;
  DisturbanceConfig disturbance;
  std::vector<int> controlled = {0, 1};
  EstimatorDesign estimator;
  LqrConfig lqr;
  MpcSettings mpc;
  TargetSettings target;
  ScenarioConfig scenario;
  ValidationConfig validation;

  RunConfig();
  /// Cross-field checks (ranges, dimensions, schedule ordering, dt match).
  void validate() const;
};

/// Parses and validates; throws ValidationError naming the offending key.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace klmpc
