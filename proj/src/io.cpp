#include "klmpc/io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <unistd.h>

#include "klmpc/error.hpp"

namespace klmpc {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double v) { return fmt::format("{:.16e}", v); }

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    std::error_code ignore;
    fs::remove(tmp, ignore);
    throw IoError("cannot rename into '" + path + "': " + ec.message());
  }
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "'" +
                  (ec ? ": " + ec.message() : ""));
  }
  if (::access(dir.c_str(), W_OK) != 0) {
    throw IoError("output directory '" + dir + "' is not writable");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "': " + e.what());
  }
}

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array of rows");
  if (j.empty()) return MatrixXd();
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  MatrixXd m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ValidationError(what + ": row " + std::to_string(i) + " has the wrong length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw ValidationError(what + ": non-numeric entry");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

json vector_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + ": non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

namespace {

constexpr const char* kSnapshotHeader = "traj,k,x1,x2,x3,u1,u2,x1_next,x2_next,x3_next";

const json& field(const json& j, const char* key, const std::string& what) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(what + ": missing '" + key + "'");
  return *it;
}

}  // namespace

std::string snapshots_csv(const SnapshotSet& data) {
  data.validate();
  std::string out = std::string(kSnapshotHeader) + "\n";
  out.reserve(static_cast<std::size_t>(data.size()) * 200);
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    out += std::to_string(data.traj_id[r]);
    out += ',';
    out += std::to_string(data.k[r]);
    for (const MatrixXd* m : {&data.X, &data.U, &data.X_next}) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        out += ',';
        out += format_double((*m)(r, c));
      }
    }
    out += '\n';
  }
  return out;
}

SnapshotSet parse_snapshots_csv(const std::string& text, const SnapshotMeta& meta) {
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    line = std::string_view(text).substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return true;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw ValidationError("snapshot CSV line " + std::to_string(line_no) + ": " + msg);
  };

  std::string_view line;
  if (!next_line(line) || line != kSnapshotHeader) {
    fail(std::string("expected header '") + kSnapshotHeader + "'");
  }
  std::vector<int> traj;
  std::vector<int> ks;
  std::vector<double> vals;
  while (next_line(line)) {
    if (line.empty()) {
      if (pos >= text.size()) break;
      fail("empty line");
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int c = 0; c < 10; ++c) {
      if (c > 0) {
        if (p >= end || *p != ',') fail("expected 10 comma-separated fields");
        ++p;
      }
      if (c < 2) {
        int v = 0;
        const auto r = std::from_chars(p, end, v);
        if (r.ec != std::errc()) fail("malformed integer in column " + std::to_string(c + 1));
        (c == 0 ? traj : ks).push_back(v);
        p = r.ptr;
      } else {
        double v = 0.0;
        const auto r = std::from_chars(p, end, v);
        if (r.ec != std::errc() || !std::isfinite(v)) {
          fail("malformed number in column " + std::to_string(c + 1));
        }
        vals.push_back(v);
        p = r.ptr;
      }
    }
    if (p != end) fail("trailing characters");
  }
  const auto n = static_cast<Eigen::Index>(traj.size());
  if (n == 0) fail("no data rows");
  SnapshotSet s;
  s.traj_id = std::move(traj);
  s.k = std::move(ks);
  s.X.resize(n, 3);
  s.U.resize(n, 2);
  s.X_next.resize(n, 3);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* v = vals.data() + r * 8;
    s.X.row(r) << v[0], v[1], v[2];
    s.U.row(r) << v[3], v[4];
    s.X_next.row(r) << v[5], v[6], v[7];
  }
  s.meta = meta;
  s.validate();
  return s;
}

json to_json(const SnapshotMeta& m) {
  return {{"seed", m.seed},
          {"n_traj", m.n_traj},
          {"samples_per_traj", m.samples_per_traj},
          {"dt", m.dt},
          {"discarded", m.discarded}};
}

SnapshotMeta snapshot_meta_from_json(const json& j) {
  const std::string what = "snapshot metadata";
  SnapshotMeta m;
  try {
    m.seed = field(j, "seed", what).get<std::uint64_t>();
    m.n_traj = field(j, "n_traj", what).get<int>();
    m.samples_per_traj = field(j, "samples_per_traj", what).get<int>();
    m.dt = field(j, "dt", what).get<double>();
    m.discarded = field(j, "discarded", what).get<int>();
  } catch (const json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
  return m;
}

json to_json(const ModelArtifact& a) {
  json lib;
  lib["observables"] = a.lib.names();
  lib["x_bar_s"] = vector_json(a.lib.x_bar_s());
  lib["Q_v"] = matrix_json(a.lib.Q_v());
  return {{"schema_version", kModelSchemaVersion},
          {"dt", a.dt},
          {"library", lib},
          {"lyapunov_level", a.lyapunov_level},
          {"A", matrix_json(a.model.A)},
          {"B", matrix_json(a.model.B)},
          {"C", matrix_json(a.model.C)},
          {"basis", matrix_json(a.model.basis)},
          {"fit",
           {{"objective", a.objective},
            {"n_pairs", a.n_pairs},
            {"residual_rms", vector_json(a.residual_rms)},
            {"output_residual_rms", vector_json(a.output_residual_rms)}}}};
}

ModelArtifact model_from_json(const json& j) {
  const std::string what = "model";
  try {
    if (field(j, "schema_version", what).get<int>() != kModelSchemaVersion) {
      throw ValidationError("model: unsupported schema_version");
    }
    const json& lj = field(j, "library", what);
    std::vector<Observable> entries;
    for (const auto& name : field(lj, "observables", "model.library")) {
      entries.push_back(Observable::parse(name.get<std::string>()));
    }
    const VectorXd x_bar_s = vector_from_json(field(lj, "x_bar_s", "model.library"),
                                              "model.library.x_bar_s");
    ObservableLibrary lib(static_cast<int>(x_bar_s.size()), std::move(entries), x_bar_s,
                          matrix_from_json(field(lj, "Q_v", "model.library"),
                                           "model.library.Q_v"));
    LiftedModel m{matrix_from_json(field(j, "A", what), "model.A"),
                  matrix_from_json(field(j, "B", what), "model.B"),
                  matrix_from_json(field(j, "C", what), "model.C"),
                  matrix_from_json(field(j, "basis", what), "model.basis")};
    m.validate();
    if (m.n_z() != lib.n_z() || m.n_y() != lib.n_x()) {
      throw DimensionError("model: matrices have n_z = " + std::to_string(m.n_z()) +
                           ", n_y = " + std::to_string(m.n_y()) + " but the library has " +
                           std::to_string(lib.n_z()) + " observables over " +
                           std::to_string(lib.n_x()) + " states");
    }
    const json& fit = field(j, "fit", what);
    ModelArtifact a{std::move(m),
                    std::move(lib),
                    field(j, "lyapunov_level", what).get<double>(),
                    field(j, "dt", what).get<double>(),
                    field(fit, "objective", "model.fit").get<double>(),
                    vector_from_json(field(fit, "residual_rms", "model.fit"), "residual_rms"),
                    vector_from_json(field(fit, "output_residual_rms", "model.fit"),
                                     "output_residual_rms"),
                    field(fit, "n_pairs", "model.fit").get<Eigen::Index>()};
    return a;
  } catch (const json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

json controller_json(const ControllerBundle& b) {
  return {{"A", matrix_json(b.model.A)},
          {"B", matrix_json(b.model.B)},
          {"C", matrix_json(b.model.C)},
          {"B_d", matrix_json(b.dist.B_d())},
          {"C_d", matrix_json(b.dist.C_d())},
          {"H", matrix_json(b.H.H)},
          {"L_z", matrix_json(b.gains.L_z)},
          {"L_d", matrix_json(b.gains.L_d)},
          {"K_z", matrix_json(b.law.K_z)},
          {"N_bar", matrix_json(b.law.N_bar)},
          {"K_d", matrix_json(b.law.K_d)},
          {"lyapunov_level", b.spec.r},
          {"Q_z", matrix_json(b.mpc.Q_z)},
          {"Q_u", matrix_json(b.mpc.Q_u)},
          {"N", b.mpc.N}};
}

std::string trace_csv(const ClosedLoopTrace& trace, int n_d) {
  std::string out = "t,x_c,x_T,x_h,yc_sp_c,yc_sp_T,u_Tc,u_F";
  for (int i = 1; i <= n_d; ++i) out += ",dhat_" + std::to_string(i);
  out += ",branch,objective\n";
  for (const StepRecord& r : trace.records) {
    out += format_double(r.t);
    for (const VectorXd* v : {&r.y_p, &r.y_bar_c, &r.u}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) out += "," + format_double((*v)(i));
    }
    for (int i = 0; i < n_d; ++i) {
      out += "," + format_double(i < r.d_hat.size() ? r.d_hat(i) : 0.0);
    }
    out += ",";
    out += to_string(r.branch);
    out += "," + format_double(r.objective) + "\n";
  }
  return out;
}

json to_json(const SegmentOffset& s) {
  return {{"t_start", s.t_start},
          {"t_end", s.t_end},
          {"setpoint", vector_json(s.y_bar_c)},
          {"offset", vector_json(s.offset)},
          {"d_hat_variation", s.d_hat_variation},
          {"settle_branch", s.settle_branch}};
}

json to_json(const TheoryCheckReport& r) {
  json out = json::object();
  for (const auto& e : r.entries) {
    out[e.name] = {{"description", e.description},
                   {"pass", e.pass},
                   {"max_residual", e.max_residual},
                   {"tolerance", e.tolerance},
                   {"samples", e.samples},
                   {"excluded", e.excluded},
                   {"worst_sample", e.pass ? json(nullptr) : vector_json(e.worst_sample)}};
  }
  return out;
}

json to_json(const SettleCondition& s) {
  json out = {{"status", s.status}, {"branch", s.branch}};
  if (!s.note.empty()) out["note"] = s.note;
  if (s.report) {
    out["null_space_dim"] = s.report->null_dim;
    out["max_violation"] = s.report->max_violation;
  }
  return out;
}

json to_json(const NrmseReport& r) {
  return {{"nrmse", vector_json(r.nrmse)}, {"rmse", vector_json(r.rmse)}};
}

std::string validation_csv(const NrmseReport& r) {
  std::string out = "k";
  for (Eigen::Index i = 0; i < r.plant_outputs.cols(); ++i) {
    out += ",plant_y" + std::to_string(i + 1);
  }
  for (Eigen::Index i = 0; i < r.model_outputs.cols(); ++i) {
    out += ",model_y" + std::to_string(i + 1);
  }
  out += "\n";
  for (Eigen::Index k = 0; k < r.plant_outputs.rows(); ++k) {
    out += std::to_string(k);
    for (Eigen::Index i = 0; i < r.plant_outputs.cols(); ++i) {
      out += "," + format_double(r.plant_outputs(k, i));
    }
    for (Eigen::Index i = 0; i < r.model_outputs.cols(); ++i) {
      out += "," + format_double(r.model_outputs(k, i));
    }
    out += "\n";
  }
  return out;
}

}  // namespace klmpc
