#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klmpc/analysis.hpp"
#include "klmpc/edmd.hpp"
#include "klmpc/pipeline.hpp"
#include "klmpc/sim.hpp"

namespace klmpc {

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr int kModelSchemaVersion = 1;

/// Full-precision scientific notation (17 significant digits).
std::string format_double(double v);

/// Writes `content` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file. Throws IoError (and
/// leaves nothing behind) on failure.
void write_file_atomic(const std::string& path, const std::string& content);

/// Creates `dir` (and parents); throws IoError when it cannot be created or
/// is not writable.
void ensure_directory(const std::string& dir);

std::string read_file(const std::string& path);
nlohmann::json read_json(const std::string& path);

/// Snapshot CSV: header "traj,k,x1,x2,x3,u1,u2,x1_next,x2_next,x3_next".
std::string snapshots_csv(const SnapshotSet& data);
/// Throws ValidationError naming the offending line on malformed input.
SnapshotSet parse_snapshots_csv(const std::string& text, const SnapshotMeta& meta);
nlohmann::json to_json(const SnapshotMeta& meta);
SnapshotMeta snapshot_meta_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ModelArtifact& art);
/// Throws ValidationError on a malformed document or inconsistent dimensions
/// between the matrices and the library.
ModelArtifact model_from_json(const nlohmann::json& j);

/// Model, disturbance model, controlled-variable map and the designed gains.
nlohmann::json controller_json(const ControllerBundle& bundle);

/// Trace CSV columns: t, x_c, x_T, x_h, yc_sp_c, yc_sp_T, u_Tc, u_F,
/// dhat_1..dhat_nd, branch, objective.
std::string trace_csv(const ClosedLoopTrace& trace, int n_d);

nlohmann::json to_json(const SegmentOffset& s);
nlohmann::json to_json(const TheoryCheckReport& r);
nlohmann::json to_json(const SettleCondition& s);
nlohmann::json to_json(const NrmseReport& r);

/// Open-loop comparison CSV: sample index k, plant outputs, model outputs.
std::string validation_csv(const NrmseReport& r);

nlohmann::json matrix_json(const MatrixXd& m);
MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json vector_json(const VectorXd& v);
VectorXd vector_from_json(const nlohmann::json& j, const std::string& what);

}  // namespace klmpc
