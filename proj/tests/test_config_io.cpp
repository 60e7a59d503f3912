#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "klmpc/config.hpp"
#include "klmpc/error.hpp"
#include "klmpc/io.hpp"

namespace klmpc {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("klmpc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(ConfigTest, EmptyDocumentGivesDefaults) {
  const RunConfig cfg = parse_config(nlohmann::json::object());
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.mpc.N, 10);
  EXPECT_EQ(cfg.disturbance.channels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(cfg.scenario.schedule.size(), 8u);
  EXPECT_DOUBLE_EQ(cfg.scenario.duration, 200.0);
}

TEST(ConfigTest, RoundTripsThroughJson) {
  RunConfig cfg;
  cfg.seed = 7;
  cfg.mpc.N = 6;
  cfg.library.r = 0.5;
  const RunConfig back = parse_config(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(ConfigTest, UnknownKeysAreRejectedWithTheirPath) {
  try {
    parse_config(nlohmann::json{{"mpc", {{"horizon", 5}}}});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("mpc.horizon"), std::string::npos) << e.what();
  }
}

TEST(ConfigTest, CrossFieldChecks) {
  EXPECT_THROW(parse_config(nlohmann::json{{"mpc", {{"N", 0}}}}), ValidationError);
  EXPECT_THROW(parse_config(nlohmann::json{{"scenario", {{"dt", 2.0}}}}), ValidationError);
  EXPECT_THROW(parse_config(nlohmann::json{{"version", 99}}), ValidationError);
  EXPECT_THROW(parse_config(nlohmann::json{{"seed", "abc"}}), ValidationError);
}

TEST(ConfigTest, LoadErrors) {
  EXPECT_THROW(load_config("/nonexistent/klmpc.json"), IoError);
  const fs::path dir = scratch_dir("cfg");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config((dir / "bad.json").string()), ValidationError);
}

SnapshotSet small_snapshots() {
  SnapshotSet s;
  s.X = (MatrixXd(2, 3) << 0.878, 324.5, 0.659, 0.1 / 3.0, 1e-17, 123.456).finished();
  s.U = (MatrixXd(2, 2) << 300.0, 0.1, 301.5, 0.09).finished();
  s.X_next = (MatrixXd(2, 3) << 0.88, 324.0, 0.66, 1.0, 2.0, 3.0).finished();
  s.traj_id = {0, 1};
  s.k = {0, 0};
  s.meta.n_traj = 2;
  s.meta.samples_per_traj = 1;
  return s;
}

TEST(IoTest, SnapshotCsvRoundTripIsExact) {
  const SnapshotSet s = small_snapshots();
  const std::string csv = snapshots_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "traj,k,x1,x2,x3,u1,u2,x1_next,x2_next,x3_next");
  const SnapshotSet back = parse_snapshots_csv(csv, s.meta);
  EXPECT_EQ(back.X, s.X);
  EXPECT_EQ(back.U, s.U);
  EXPECT_EQ(back.X_next, s.X_next);
  EXPECT_EQ(back.traj_id, s.traj_id);
  EXPECT_EQ(snapshots_csv(back), csv);
}

TEST(IoTest, CorruptCsvLineIsNamed) {
  std::string csv = snapshots_csv(small_snapshots());
  csv.replace(csv.rfind("1.0"), 3, "x.y");
  try {
    parse_snapshots_csv(csv, {});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_snapshots_csv("a,b\n", {}), ValidationError);
}

TEST(IoTest, ModelJsonRoundTrip) {
  ModelArtifact a{testing::small_model(), testing::small_library()};
  a.model.basis = 2.0 * MatrixXd::Identity(4, 4);
  a.lyapunov_level = 0.66;
  a.residual_rms = VectorXd::Constant(4, 1e-3);
  a.output_residual_rms = VectorXd::Zero(3);
  a.n_pairs = 10;
  const ModelArtifact b = model_from_json(nlohmann::json::parse(to_json(a).dump()));
  EXPECT_EQ(b.model.A, a.model.A);
  EXPECT_EQ(b.model.B, a.model.B);
  EXPECT_EQ(b.model.basis, a.model.basis);
  EXPECT_EQ(b.lib.names(), a.lib.names());
  EXPECT_EQ(b.lyapunov_level, 0.66);

  nlohmann::json j = to_json(a);
  j["A"] = matrix_json(MatrixXd::Identity(3, 3));
  EXPECT_THROW(model_from_json(j), Error);
  j = to_json(a);
  j.erase("B");
  EXPECT_THROW(model_from_json(j), ValidationError);
}

TEST(IoTest, AtomicWriteReplacesAndFailsCleanly) {
  const fs::path dir = scratch_dir("atomic");
  const std::string path = (dir / "out.txt").string();
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  EXPECT_EQ(read_file(path), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 1);
  EXPECT_THROW(write_file_atomic((dir / "missing" / "x.txt").string(), "x"), IoError);
  EXPECT_THROW(read_file((dir / "nope").string()), IoError);
}

TEST(IoTest, DoublesKeepFullPrecision) {
  const double v = 0.1 / 3.0;
  EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(IoTest, TraceCsvLayout) {
  ClosedLoopTrace tr;
  StepRecord r;
  r.t = 0.0;
  r.x = Eigen::Vector3d(0.9, 324.0, 0.6);
  r.y_bar_c = Eigen::Vector2d(0.878, 324.5);
  r.u = Eigen::Vector2d(300.0, 0.1);
  r.d_hat = Eigen::Vector3d(0.0, 0.1, 0.2);
  r.branch = Branch::kLyapunovActive;
  tr.records.push_back(r);
  const std::string csv = trace_csv(tr, 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,x_c,x_T,x_h,yc_sp_c,yc_sp_T,u_Tc,u_F,dhat_1,dhat_2,dhat_3,branch,objective");
  EXPECT_NE(csv.find("lyapunov_active"), std::string::npos);
}

}  // namespace
}  // namespace klmpc
