#include "klmpc/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

using nlohmann::json;

namespace {

/// Strict reader of one JSON object: every key must be consumed by a get()
/// call before finish(), so misspelled or stale keys are reported instead of
/// silently ignored.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, join(key), out);
  }

  template <class F>
  void section(const char* key, F&& fn) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    ObjectReader sub(*it, join(key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(join(key), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ValidationError("config: " + path + ": " + msg);
  }

 private:
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  static void read(const json& v, const std::string& p, double& out) {
    if (!v.is_number()) fail(p, "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(p, "not finite");
  }
  static void read(const json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) fail(p, "expected an integer");
    out = v.get<int>();
  }
  static void read(const json& v, const std::string& p, std::uint64_t& out) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(p, "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) fail(p, "expected a boolean");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) fail(p, "expected a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, const std::string& p, std::optional<double>& out) {
    if (v.is_null()) {
      out.reset();
      return;
    }
    double x = 0.0;
    read(v, p, x);
    out = x;
  }
  static void read(const json& v, const std::string& p, std::vector<int>& out) {
    if (!v.is_array()) fail(p, "expected an array of integers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      int x = 0;
      read(v[i], p + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }
  static void read(const json& v, const std::string& p, std::vector<std::string>& out) {
    if (!v.is_array()) fail(p, "expected an array of strings");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::string s;
      read(v[i], p + "[" + std::to_string(i) + "]", s);
      out.push_back(s);
    }
  }
  template <int N>
  static void read(const json& v, const std::string& p, Eigen::Matrix<double, N, 1>& out) {
    if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
      fail(p, "expected an array of " + std::to_string(N) + " numbers");
    }
    for (int i = 0; i < N; ++i) read(v[i], p + "[" + std::to_string(i) + "]", out(i));
  }
  template <int N>
  static void read(const json& v, const std::string& p,
                   std::optional<Eigen::Matrix<double, N, 1>>& out) {
    if (v.is_null()) {
      out.reset();
      return;
    }
    Eigen::Matrix<double, N, 1> x;
    read(v, p, x);
    out = x;
  }
  static void read(const json& v, const std::string& p, DecreaseForm& out) {
    std::string s;
    read(v, p, s);
    try {
      out = decrease_form_from_string(s);
    } catch (const Error& e) {
      fail(p, e.what());
    }
  }
  static void read(const json& v, const std::string& p, std::vector<ScheduleEntry>& out) {
    if (!v.is_array()) fail(p, "expected an array of {t, setpoint} objects");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      ObjectReader r(v[i], p + "[" + std::to_string(i) + "]");
      ScheduleEntry e;
      e.setpoint.setConstant(std::nan(""));
      r.get("t", e.t);
      r.get("setpoint", e.setpoint);
      r.finish();
      if (!e.setpoint.allFinite()) fail(r.path_, "missing setpoint");
      out.push_back(e);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class V>
json vec_json(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError("config: " + msg);
}

}  // namespace

std::vector<ScheduleEntry> ScenarioConfig::default_schedule() {
  const double c[] = {0.878, 0.85, 0.90, 0.87};
  std::vector<ScheduleEntry> s;
  for (int i = 0; i < 8; ++i) s.push_back({25.0 * i, Eigen::Vector2d(c[i % 4], 324.5)});
  return s;
}

RunConfig::RunConfig() {
  scenario.schedule = ScenarioConfig::default_schedule();
  data.seed = seed;
}

void RunConfig::validate() const {
  check(version == kConfigVersion,
        "unsupported version " + std::to_string(version) + " (expected " +
            std::to_string(kConfigVersion) + ")");
  plant.validate();
  data.validate();
  check(identification.ridge >= 0.0, "identification.ridge must be >= 0");
  check(!library.observables.empty(), "library.observables is empty");
  check((library.v_ranges.array() > 0.0).all(), "library.v_ranges must be positive");
  check(library.r_quantile > 0.0 && library.r_quantile <= 1.0,
        "library.r_quantile must lie in (0, 1]");
  check(!library.r || *library.r > 0.0, "library.r must be positive");
  check(!disturbance.channels.empty(), "disturbance.channels is empty");
  for (int ch : disturbance.channels) {
    check(ch >= 0 && ch < 3, "disturbance.channels entries must be in 0..2");
  }
  check(controlled.size() == 2, "controlled must list two measurement channels");
  for (int ch : controlled) check(ch >= 0 && ch < 3, "controlled entries must be in 0..2");
  estimator.validate();
  check(lqr.q_regularization > 0.0 && lqr.r_scale > 0.0,
        "lqr weights must be positive");
  check(mpc.N >= 1, "mpc.N must be >= 1");
  check((mpc.state_ranges.array() > 0.0).all() && (mpc.input_ranges.array() > 0.0).all(),
        "mpc ranges must be positive");
  check(mpc.q_regularization >= 0.0 && mpc.input_weight > 0.0,
        "mpc weights must be positive");
  check((mpc.u_min.array() < mpc.u_max.array()).all(), "mpc.u_min must be below mpc.u_max");
  check((mpc.y_min.array() < mpc.y_max.array()).all(), "mpc.y_min must be below mpc.y_max");
  check(mpc.soft_weight > 0.0 && target.soft_weight > 0.0, "soft weights must be positive");
  check(target.tikhonov >= 0.0, "target.tikhonov must be >= 0");
  check(scenario.duration > 0.0, "scenario.duration must be positive");
  check(scenario.dt == data.dt, "scenario.dt must equal data.dt (the model's sampling)");
  check(scenario.substeps >= 1, "scenario.substeps must be >= 1");
  check(scenario.settle_window >= 1, "scenario.settle_window must be >= 1");
  check(!scenario.schedule.empty() && scenario.schedule.front().t == 0.0,
        "scenario.schedule must start at t = 0");
  for (std::size_t i = 1; i < scenario.schedule.size(); ++i) {
    check(scenario.schedule[i].t > scenario.schedule[i - 1].t,
          "scenario.schedule times must be strictly increasing");
  }
  check(scenario.schedule.back().t <= scenario.duration,
        "scenario.schedule times must lie within the duration");
  check(validation.windows >= 1 && validation.window_len >= 3,
        "validation.windows >= 1 and validation.window_len >= 3 required");
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  r.get("version", c.version);
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.section("plant", [&](ObjectReader& s) {
    auto& p = c.plant;
    s.get("F0", p.F0);
    s.get("T0", p.T0);
    s.get("c0", p.c0);
    s.get("k0", p.k0);
    s.get("Cp", p.Cp);
    s.get("E", p.E);
    s.get("R", p.Rgas);
    s.get("U", p.Uh);
    s.get("r", p.r_reac);
    s.get("rho", p.rho);
    s.get("dH", p.dH);
  });
  r.section("operating_point", [&](ObjectReader& s) {
    s.get("c", c.operating_point.c);
    s.get("T", c.operating_point.T);
    s.get("h_guess", c.operating_point.h_guess);
  });
  r.section("data", [&](ObjectReader& s) {
    auto& d = c.data;
    s.get("n_traj", d.n_traj);
    s.get("horizon", d.T_horizon);
    s.get("dt", d.dt);
    s.get("substeps", d.substeps);
    s.get("x0_center", d.x0_center);
    s.get("x0_spread", d.x0_spread);
    s.get("u_min", d.u_min);
    s.get("u_max", d.u_max);
    s.get("hold_steps", d.hold_steps);
    s.get("level_gain", d.level_gain);
    s.get("level_ref_min", d.level_ref_min);
    s.get("level_ref_max", d.level_ref_max);
    s.get("flow_dither", d.flow_dither);
    s.get("jacket_nominal", d.jacket_nominal);
    s.get("temp_gain", d.temp_gain);
    s.get("temp_ref_min", d.temp_ref_min);
    s.get("temp_ref_max", d.temp_ref_max);
    s.get("jacket_dither", d.jacket_dither);
    s.get("threads", d.threads);
  });
  r.section("identification", [&](ObjectReader& s) {
    s.get("ridge", c.identification.ridge);
    s.get("scale_columns", c.identification.scale_columns);
  });
  r.section("library", [&](ObjectReader& s) {
    s.get("observables", c.library.observables);
    s.get("v_ranges", c.library.v_ranges);
    s.get("r_quantile", c.library.r_quantile);
    s.get("r", c.library.r);
  });
  r.section("disturbance", [&](ObjectReader& s) {
    s.get("channels", c.disturbance.channels);
  });
  r.get("controlled", c.controlled);
  r.section("estimator", [&](ObjectReader& s) {
    s.get("q_z", c.estimator.q_z);
    s.get("q_d", c.estimator.q_d);
    s.get("r_y", c.estimator.r_y);
  });
  r.section("lqr", [&](ObjectReader& s) {
    s.get("q_regularization", c.lqr.q_regularization);
    s.get("r_scale", c.lqr.r_scale);
  });
  r.section("mpc", [&](ObjectReader& s) {
    auto& m = c.mpc;
    s.get("N", m.N);
    s.get("state_ranges", m.state_ranges);
    s.get("q_regularization", m.q_regularization);
    s.get("input_ranges", m.input_ranges);
    s.get("input_weight", m.input_weight);
    s.get("u_min", m.u_min);
    s.get("u_max", m.u_max);
    s.get("y_min", m.y_min);
    s.get("y_max", m.y_max);
    s.get("decrease_form", m.decrease_form);
    s.get("soft_weight", m.soft_weight);
  });
  r.section("target", [&](ObjectReader& s) {
    s.get("tikhonov", c.target.tikhonov);
    s.get("soft_outputs", c.target.soft_outputs);
    s.get("soft_weight", c.target.soft_weight);
  });
  r.section("scenario", [&](ObjectReader& s) {
    auto& sc = c.scenario;
    s.get("duration", sc.duration);
    s.get("dt", sc.dt);
    s.get("schedule", sc.schedule);
    s.get("x0", sc.x0);
    s.get("settle_window", sc.settle_window);
    s.get("substeps", sc.substeps);
  });
  r.section("validation", [&](ObjectReader& s) {
    s.get("windows", c.validation.windows);
    s.get("window_len", c.validation.window_len);
  });
  r.finish();
  c.data.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config '" + path + "': " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  const auto& p = c.plant;
  j["plant"] = {{"F0", p.F0}, {"T0", p.T0}, {"c0", p.c0},  {"k0", p.k0},
                {"Cp", p.Cp}, {"E", p.E},   {"R", p.Rgas}, {"U", p.Uh},
                {"r", p.r_reac}, {"rho", p.rho}, {"dH", p.dH}};
  j["operating_point"] = {{"c", c.operating_point.c},
                          {"T", c.operating_point.T},
                          {"h_guess", c.operating_point.h_guess}};
  const auto& d = c.data;
  j["data"] = {{"n_traj", d.n_traj},
               {"horizon", d.T_horizon},
               {"dt", d.dt},
               {"substeps", d.substeps},
               {"x0_center", vec_json(d.x0_center)},
               {"x0_spread", vec_json(d.x0_spread)},
               {"u_min", vec_json(d.u_min)},
               {"u_max", vec_json(d.u_max)},
               {"hold_steps", d.hold_steps},
               {"level_gain", d.level_gain},
               {"level_ref_min", d.level_ref_min},
               {"level_ref_max", d.level_ref_max},
               {"flow_dither", d.flow_dither},
               {"jacket_nominal", d.jacket_nominal},
               {"temp_gain", d.temp_gain},
               {"temp_ref_min", d.temp_ref_min},
               {"temp_ref_max", d.temp_ref_max},
               {"jacket_dither", d.jacket_dither},
               {"threads", d.threads}};
  j["identification"] = {{"ridge", c.identification.ridge},
                         {"scale_columns", c.identification.scale_columns}};
  j["library"] = {{"observables", c.library.observables},
                  {"v_ranges", vec_json(c.library.v_ranges)},
                  {"r_quantile", c.library.r_quantile},
                  {"r", c.library.r ? json(*c.library.r) : json(nullptr)}};
  j["disturbance"] = {{"channels", c.disturbance.channels}};
  j["controlled"] = c.controlled;
  j["estimator"] = {{"q_z", c.estimator.q_z},
                    {"q_d", c.estimator.q_d},
                    {"r_y", c.estimator.r_y}};
  j["lqr"] = {{"q_regularization", c.lqr.q_regularization}, {"r_scale", c.lqr.r_scale}};
  const auto& m = c.mpc;
  j["mpc"] = {{"N", m.N},
              {"state_ranges", vec_json(m.state_ranges)},
              {"q_regularization", m.q_regularization},
              {"input_ranges", vec_json(m.input_ranges)},
              {"input_weight", m.input_weight},
              {"u_min", vec_json(m.u_min)},
              {"u_max", vec_json(m.u_max)},
              {"y_min", vec_json(m.y_min)},
              {"y_max", vec_json(m.y_max)},
              {"decrease_form", to_string(m.decrease_form)},
              {"soft_weight", m.soft_weight}};
  j["target"] = {{"tikhonov", c.target.tikhonov},
                 {"soft_outputs", c.target.soft_outputs},
                 {"soft_weight", c.target.soft_weight}};
  json sched = json::array();
  for (const auto& e : c.scenario.schedule) {
    sched.push_back({{"t", e.t}, {"setpoint", vec_json(e.setpoint)}});
  }
  j["scenario"] = {{"duration", c.scenario.duration},
                   {"dt", c.scenario.dt},
                   {"schedule", sched},
                   {"x0", c.scenario.x0 ? vec_json(*c.scenario.x0) : json(nullptr)},
                   {"settle_window", c.scenario.settle_window},
                   {"substeps", c.scenario.substeps}};
  j["validation"] = {{"windows", c.validation.windows},
                     {"window_len", c.validation.window_len}};
  return j;
}

}  // namespace klmpc
