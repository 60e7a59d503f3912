// klmpc: data generation, identification, validation and closed-loop
// simulation of offset-free Koopman Lyapunov-based MPC on the CSTR.
//
// Exit codes: 0 success, 1 numerical failure, 2 usage/validation, 3 I/O.

#include <cstdlib>
#include <future>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "klmpc/analysis.hpp"
#include "klmpc/config.hpp"
#include "klmpc/error.hpp"
#include "klmpc/io.hpp"
#include "klmpc/pipeline.hpp"

namespace {

using namespace klmpc;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitNumerical = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string model;
  std::string controller = "both";
  bool check_theorem5 = false;
};

/// Usage-class failure raised by the driver itself (bad flag combination,
/// unusable output directory).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("klmpc");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("KLMPC_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw UsageError("KLMPC_LOG must be one of error, info, debug (got '" + level + "')");
  }
}

RunConfig load(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.data.seed = *o.seed;
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

std::string prepare_output(const RunConfig& cfg) {
  try {
    ensure_directory(cfg.output_dir);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
  return cfg.output_dir;
}

std::string in_dir(const std::string& dir, const std::string& file) { return dir + "/" + file; }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int cmd_gen_data(const Options& o) {
  const RunConfig cfg = load(o);
  const std::string dir = prepare_output(cfg);
  spdlog::info("generating {} trajectories of {} samples (seed {})", cfg.data.n_traj,
               cfg.data.samples_per_traj(), cfg.data.seed);
  const SnapshotSet data = generate(cfg.plant, cfg.data);
  write_file_atomic(in_dir(dir, "data.csv"), snapshots_csv(data));
  write_file_atomic(in_dir(dir, "data.meta.json"), dump(to_json(data.meta)));
  std::cout << "pairs " << data.size() << "\n"
            << "discarded_trajectories " << data.meta.discarded << "\n";
  return kExitOk;
}

SnapshotSet load_snapshots(const std::string& csv_path) {
  std::string meta_path = csv_path;
  if (meta_path.size() > 4 && meta_path.substr(meta_path.size() - 4) == ".csv") {
    meta_path.resize(meta_path.size() - 4);
  }
  meta_path += ".meta.json";
  const SnapshotMeta meta = snapshot_meta_from_json(read_json(meta_path));
  return parse_snapshots_csv(read_file(csv_path), meta);
}

int cmd_identify(const Options& o) {
  const RunConfig cfg = load(o);
  const std::string dir = prepare_output(cfg);
  const std::string data_path = o.data.empty() ? in_dir(dir, "data.csv") : o.data;
  const SnapshotSet data = load_snapshots(data_path);
  if (data.meta.dt != cfg.data.dt) {
    throw ValidationError("identify: data sampled at dt = " + std::to_string(data.meta.dt) +
                          " but the config expects " + std::to_string(cfg.data.dt));
  }
  spdlog::info("identifying from {} pairs", data.size());
  const ModelArtifact art = identify_artifact(data, cfg);
  write_file_atomic(in_dir(dir, "model.json"), dump(to_json(art)));
  std::cout << "pairs " << art.n_pairs << "\n"
            << "lifted_objective " << format_double(art.objective) << "\n"
            << "lyapunov_level " << format_double(art.lyapunov_level) << "\n";
  const auto names = art.lib.names();
  for (int i = 0; i < art.model.n_z(); ++i) {
    std::cout << "residual_rms " << names[i] << " " << format_double(art.residual_rms(i))
              << "\n";
  }
  return kExitOk;
}

ModelArtifact load_model(const Options& o, const std::string& dir) {
  return model_from_json(read_json(o.model.empty() ? in_dir(dir, "model.json") : o.model));
}

int cmd_validate(const Options& o) {
  const RunConfig cfg = load(o);
  const std::string dir = prepare_output(cfg);
  const ModelArtifact art = load_model(o, dir);
  const SteadyState ss = operating_steady_state(cfg);
  const MatrixXd inputs = step_pulse_validation_inputs(ss.u.vec(), cfg.validation.windows,
                                                       cfg.validation.window_len);
  const NrmseReport rep = nrmse(art.model, art.lib, make_plant(cfg), ss.x.vec(), inputs);
  write_file_atomic(in_dir(dir, "validation.csv"), validation_csv(rep));
  write_file_atomic(in_dir(dir, "validation.json"), dump(to_json(rep)));
  const char* labels[] = {"c", "T", "h"};
  for (Eigen::Index i = 0; i < rep.nrmse.size(); ++i) {
    std::cout << "nrmse " << (i < 3 ? labels[i] : "y") << " " << format_double(rep.nrmse(i))
              << "\n";
  }
  return kExitOk;
}

json run_one(const RunConfig& cfg, const ControllerBundle& bundle, const SteadyState& ss,
             ControllerKind kind, bool check, const std::string& dir) {
  const SimScenario sc = make_scenario(cfg, ss, kind);
  const ClosedLoopTrace trace = run_closed_loop(make_plant(cfg), bundle, sc);
  write_file_atomic(in_dir(dir, std::string("trace_") + to_string(kind) + ".csv"),
                    trace_csv(trace, bundle.dist.n_d()));

  json out;
  out["controller"] = to_string(kind);
  out["records"] = trace.records.size();
  out["aborted"] = trace.abort_reason.has_value();
  if (trace.abort_reason) {
    out["abort_reason"] = *trace.abort_reason;
    spdlog::error("{} run aborted: {}", to_string(kind), *trace.abort_reason);
  }
  int softened = 0;
  for (const auto& r : trace.records) softened += (r.ocp_softened || r.target_softened) ? 1 : 0;
  out["softened_steps"] = softened;
  json segs = json::array();
  VectorXd worst = VectorXd::Zero(bundle.H.H.rows());
  try {
    for (const auto& s : steady_state_offset(trace, sc, bundle.H, sc.settle_window)) {
      segs.push_back(to_json(s));
      worst = worst.cwiseMax(s.offset.cwiseAbs());
    }
    out["max_abs_offset"] = vector_json(worst);
  } catch (const ValidationError& e) {
    out["max_abs_offset"] = nullptr;
    out["offset_error"] = e.what();
  }
  out["segments"] = segs;

  if (check && kind == ControllerKind::kOffsetFree) {
    out["zero_offset_condition"] = to_json(zero_offset_at_settle(bundle, trace, sc.settle_window));
    if (!trace.abort_reason && !trace.records.empty()) {
      const StepRecord& last = trace.records.back();
      const CheckContext ctx = CheckContext::at_target(bundle, last.y_bar_c, last.d_hat);
      SampleSpec samples;
      samples.seed = cfg.seed;
      samples.ranges = cfg.mpc.state_ranges;
      samples.max_scale = 0.25;
      TheoryCheckReport rep = verify_explicit_law(ctx, samples);
      rep.append(verify_equilibrium(ctx));
      SampleSpec near = samples;
      near.mode = SampleSpec::Mode::kBasisOffset;
      near.max_scale = 1e-3;
      rep.append(verify_difference_law(ctx, near));
      out["theory_checks"] = to_json(rep);
    }
  }
  return out;
}

int cmd_simulate(const Options& o) {
  const RunConfig cfg = load(o);
  const std::string dir = prepare_output(cfg);
  const ModelArtifact art = load_model(o, dir);
  if (art.dt != cfg.scenario.dt) {
    throw ValidationError("simulate: model sampled at dt = " + std::to_string(art.dt) +
                          " but the scenario uses dt = " + std::to_string(cfg.scenario.dt));
  }
  std::vector<ControllerKind> kinds;
  if (o.controller == "both") {
    kinds = {ControllerKind::kOffsetFree, ControllerKind::kNominal};
  } else {
    kinds = {controller_kind_from_string(o.controller)};
  }
  const SteadyState ss = operating_steady_state(cfg);
  const ControllerBundle bundle = assemble_bundle(cfg, art, ss);
  write_file_atomic(in_dir(dir, "controller.json"), dump(controller_json(bundle)));

  // The runs are independent; each writes only its own trace file.
  std::vector<std::future<json>> runs;
  for (ControllerKind k : kinds) {
    runs.push_back(std::async(std::launch::async, run_one, std::cref(cfg), std::cref(bundle),
                              std::cref(ss), k, o.check_theorem5, std::cref(dir)));
  }
  json summary;
  summary["schema_version"] = kTraceSchemaVersion;
  summary["seed"] = cfg.seed;
  summary["runs"] = json::array();
  bool aborted = false;
  for (auto& f : runs) {
    json r = f.get();
    aborted = aborted || r["aborted"].get<bool>();
    summary["runs"].push_back(std::move(r));
  }
  if (kinds.size() == 2 && !summary["runs"][0]["max_abs_offset"].is_null() &&
      !summary["runs"][1]["max_abs_offset"].is_null()) {
    const VectorXd of = vector_from_json(summary["runs"][0]["max_abs_offset"], "offset");
    const VectorXd nom = vector_from_json(summary["runs"][1]["max_abs_offset"], "offset");
    summary["nominal_to_offset_free_ratio"] = vector_json(nom.cwiseQuotient(of));
  }
  write_file_atomic(in_dir(dir, "summary.json"), dump(summary));
  for (const auto& r : summary["runs"]) {
    std::cout << r["controller"].get<std::string>() << " max_abs_offset "
              << r["max_abs_offset"].dump() << "\n";
  }
  return aborted ? kExitNumerical : kExitOk;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::kNumerical:
      return kExitNumerical;
    case Error::Category::kValidation:
      return kExitUsage;
    case Error::Category::kIo:
      return kExitIo;
  }
  return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offset-free Koopman Lyapunov-based MPC of a CSTR"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "RunConfig JSON (defaults when omitted)");
    sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory (overrides the config)");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "Generate identification snapshots");
  add_common(gen);
  CLI::App* ident = app.add_subcommand("identify", "Fit the lifted model");
  add_common(ident);
  ident->add_option("--data", o.data, "Snapshot CSV (default <out>/data.csv)");
  CLI::App* val = app.add_subcommand("validate", "Open-loop NRMSE validation");
  add_common(val);
  val->add_option("--model", o.model, "Model JSON (default <out>/model.json)");
  CLI::App* sim = app.add_subcommand("simulate", "Closed-loop simulation");
  add_common(sim);
  sim->add_option("--model", o.model, "Model JSON (default <out>/model.json)");
  sim->add_option("--controller", o.controller, "offset-free, nominal or both")
      ->check(CLI::IsMember({"offset-free", "nominal", "both"}));
  sim->add_flag("--check-theorem5", o.check_theorem5,
                "Embed the zero-offset condition and explicit-law checks in the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    configure_logging();
    if (*gen) return cmd_gen_data(o);
    if (*ident) return cmd_identify(o);
    if (*val) return cmd_validate(o);
    return cmd_simulate(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
