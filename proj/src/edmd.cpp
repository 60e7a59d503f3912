#include "klmpc/edmd.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "klmpc/error.hpp"

namespace klmpc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Trajectory {
  MatrixXd X;
  MatrixXd U;
  MatrixXd X_next;
};

// nullopt when the plant leaves the validity region.
std::optional<Trajectory> simulate_trajectory(const CstrParams& params,
                                              const DataGenConfig& cfg,
                                              int index) {
  std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(
                                                static_cast<std::uint64_t>(index))));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const int n = cfg.samples_per_traj();
  Trajectory tr{MatrixXd(n, 3), MatrixXd(n, 2), MatrixXd(n, 3)};
  PlantState x;
  x.c = cfg.x0_center(0) * uniform(1.0 - cfg.x0_spread(0), 1.0 + cfg.x0_spread(0));
  x.T = cfg.x0_center(1) * uniform(1.0 - cfg.x0_spread(1), 1.0 + cfg.x0_spread(1));
  x.h = cfg.x0_center(2) * uniform(1.0 - cfg.x0_spread(2), 1.0 + cfg.x0_spread(2));

  double T_ref = 0.0;
  double Tc_dither = 0.0;
  double h_ref = 0.0;
  double dither = 0.0;
  try {
    for (int k = 0; k < n; ++k) {
      if (k % cfg.hold_steps == 0) {
        T_ref = uniform(cfg.temp_ref_min, cfg.temp_ref_max);
        Tc_dither = uniform(-cfg.jacket_dither, cfg.jacket_dither);
        h_ref = uniform(cfg.level_ref_min, cfg.level_ref_max);
        dither = uniform(-cfg.flow_dither, cfg.flow_dither);
      }
      const double Tc = std::clamp(
          cfg.jacket_nominal + cfg.temp_gain * (T_ref - x.T) + Tc_dither,
          cfg.u_min(0), cfg.u_max(0));
      const double F = std::clamp(
          params.F0 + cfg.level_gain * (x.h - h_ref) + dither, cfg.u_min(1),
          cfg.u_max(1));
      const PlantInput u{Tc, F};
      const PlantState next = step(x, u, cfg.dt, cfg.substeps, params);
      tr.X.row(k) = x.vec().transpose();
      tr.U.row(k) = u.vec().transpose();
      tr.X_next.row(k) = next.vec().transpose();
      x = next;
    }
  } catch (const IntegrationError& e) {
    spdlog::info("gen-data: trajectory {} discarded: {}", index, e.what());
    return std::nullopt;
  } catch (const DomainError& e) {
    spdlog::info("gen-data: trajectory {} discarded: {}", index, e.what());
    return std::nullopt;
  }
  return tr;
}

}  // namespace

int DataGenConfig::samples_per_traj() const {
  return static_cast<int>(std::lround(T_horizon / dt));
}

void DataGenConfig::validate() const {
  if (n_traj < 1 || !(T_horizon > 0.0) || !(dt > 0.0) || substeps < 1 ||
      hold_steps < 1 || samples_per_traj() < 1) {
    throw ValidationError("DataGenConfig: counts and durations must be positive");
  }
  if ((u_min.array() > u_max.array()).any()) {
    throw ValidationError("DataGenConfig: empty input bounds");
  }
  if ((x0_spread.array() < 0.0).any() || (x0_spread.array() >= 1.0).any()) {
    throw ValidationError("DataGenConfig: x0_spread must lie in [0, 1)");
  }
  if (!(level_ref_min > 0.0) || level_ref_min > level_ref_max ||
      level_gain < 0.0 || flow_dither < 0.0) {
    throw ValidationError("DataGenConfig: invalid level excitation settings");
  }
  if (!(temp_ref_min > 0.0) || temp_ref_min > temp_ref_max ||
      temp_gain < 0.0 || jacket_dither < 0.0) {
    throw ValidationError("DataGenConfig: invalid temperature excitation settings");
  }
}

void SnapshotSet::validate() const {
  const Eigen::Index n = X.rows();
  if (U.rows() != n || X_next.rows() != n || X_next.cols() != X.cols() ||
      static_cast<Eigen::Index>(traj_id.size()) != n ||
      static_cast<Eigen::Index>(k.size()) != n) {
    throw ValidationError("SnapshotSet: inconsistent shapes");
  }
  if (!X.allFinite() || !U.allFinite() || !X_next.allFinite()) {
    throw ValidationError("SnapshotSet: non-finite entries");
  }
}

SnapshotSet generate(const CstrParams& params, const DataGenConfig& cfg) {
  params.validate();
  cfg.validate();
  std::vector<std::optional<Trajectory>> results(cfg.n_traj);

  int threads = cfg.threads > 0
                    ? cfg.threads
                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, cfg.n_traj);
  if (threads <= 1) {
    for (int i = 0; i < cfg.n_traj; ++i) {
      results[i] = simulate_trajectory(params, cfg, i);
    }
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (int i = t; i < cfg.n_traj; i += threads) {
          results[i] = simulate_trajectory(params, cfg, i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  int discarded = 0;
  for (const auto& r : results) discarded += r ? 0 : 1;
  if (discarded * 10 > cfg.n_traj) {
    std::ostringstream os;
    os << "generate: " << discarded << " of " << cfg.n_traj
       << " trajectories left the validity region (more than 10%)";
    throw IdentificationError(os.str());
  }

  const int per = cfg.samples_per_traj();
  const Eigen::Index total =
      static_cast<Eigen::Index>(cfg.n_traj - discarded) * per;
  SnapshotSet out;
  out.X.resize(total, 3);
  out.U.resize(total, 2);
  out.X_next.resize(total, 3);
  out.traj_id.reserve(total);
  out.k.reserve(total);
  Eigen::Index row = 0;
  for (int i = 0; i < cfg.n_traj; ++i) {
    if (!results[i]) continue;
    out.X.middleRows(row, per) = results[i]->X;
    out.U.middleRows(row, per) = results[i]->U;
    out.X_next.middleRows(row, per) = results[i]->X_next;
    for (int k = 0; k < per; ++k) {
      out.traj_id.push_back(i);
      out.k.push_back(k);
    }
    row += per;
  }
  out.meta = {cfg.seed, cfg.n_traj, per, cfg.dt, discarded};
  if (discarded > 0) {
    spdlog::warn("gen-data: {} trajectories discarded", discarded);
  }
  return out;
}

namespace {

// Least squares Y ~ R * Theta with optional column scaling and ridge.
// Returns Theta (p x q).
MatrixXd solve_least_squares(const MatrixXd& R, const MatrixXd& Y,
                             const IdentifyOptions& opts,
                             const std::string& what) {
  const Eigen::Index p = R.cols();
  VectorXd scale = VectorXd::Ones(p);
  if (opts.scale_columns) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double rms = std::sqrt(R.col(j).squaredNorm() /
                                   static_cast<double>(R.rows()));
      scale(j) = rms > 0.0 ? rms : 1.0;
    }
  }
  const Eigen::Index extra = opts.ridge > 0.0 ? p : 0;
  MatrixXd Rs(R.rows() + extra, p);
  Rs.topRows(R.rows()) = R * scale.cwiseInverse().asDiagonal();
  MatrixXd Ys = MatrixXd::Zero(Y.rows() + extra, Y.cols());
  Ys.topRows(Y.rows()) = Y;
  if (extra > 0) {
    Rs.bottomRows(p) = std::sqrt(opts.ridge) * MatrixXd::Identity(p, p);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Rs);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < p) {
    std::ostringstream os;
    os << what << ": rank-deficient regressor (rank " << qr.rank() << " of "
       << p << ", deficient by " << p - qr.rank() << "); enable ridge";
    throw IdentificationError(os.str());
  }
  const MatrixXd theta_s = qr.solve(Ys);
  return scale.cwiseInverse().asDiagonal() * theta_s;
}

}  // namespace

double lifted_objective(const SnapshotSet& data, const ObservableLibrary& lib,
                        const MatrixXd& A, const MatrixXd& B) {
  const MatrixXd Z = lib.lift_rows(data.X);
  const MatrixXd Zn = lib.lift_rows(data.X_next);
  return (Zn - Z * A.transpose() - data.U * B.transpose()).squaredNorm();
}

IdentificationResult identify(const SnapshotSet& data,
                              const ObservableLibrary& lib,
                              const IdentifyOptions& opts) {
  data.validate();
  if (data.n_x() != lib.n_x()) {
    throw DimensionError("identify: snapshot state dimension does not match library");
  }
  const int nz = lib.n_z();
  const int nu = data.n_u();
  if (data.size() < nz + nu) {
    std::ostringstream os;
    os << "identify: need at least n_z + n_u = " << nz + nu
       << " snapshot pairs, got " << data.size();
    throw IdentificationError(os.str());
  }
  const MatrixXd Z = lib.lift_rows(data.X);
  const MatrixXd Zn = lib.lift_rows(data.X_next);
  MatrixXd R(data.size(), nz + nu);
  R << Z, data.U;

  const MatrixXd theta = solve_least_squares(R, Zn, opts, "identify (A, B)");
  IdentificationResult res;
  res.model.A = theta.topRows(nz).transpose();
  res.model.B = theta.bottomRows(nu).transpose();
  // Full-state measurement y = x.
  const MatrixXd gamma = solve_least_squares(Z, data.X, opts, "identify (C)");
  res.model.C = gamma.transpose();
  const MatrixXd moment = Z.transpose() * Z / static_cast<double>(data.size());
  const Eigen::LLT<MatrixXd> llt(moment);
  if (llt.info() == Eigen::Success) res.model.basis = llt.matrixL();
  res.model.validate();

  const MatrixXd resid = Zn - R * theta;
  res.objective = resid.squaredNorm();
  const double n = static_cast<double>(data.size());
  res.residual_rms = (resid.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  const MatrixXd out_resid = data.X - Z * gamma;
  res.output_residual_rms =
      (out_resid.colwise().squaredNorm() / n).cwiseSqrt().transpose();
  res.n_pairs = data.size();
  return res;
}

NrmseReport nrmse(const LiftedModel& model, const ObservableLibrary& lib,
                  const DiscretePlant& plant, const VectorXd& x0,
                  const MatrixXd& inputs) {
  model.validate();
  if (lib.n_z() != model.n_z()) {
    throw DimensionError("nrmse: library size does not match model dimension");
  }
  if (inputs.cols() != model.n_u()) {
    throw DimensionError("nrmse: input columns do not match model inputs");
  }
  const Eigen::Index K = inputs.rows();
  NrmseReport rep;
  rep.plant_outputs.resize(K + 1, model.n_y());
  rep.model_outputs.resize(K + 1, model.n_y());
  VectorXd xp = plant.initial_state(x0);
  VectorXd z = lib.lift(x0);
  for (Eigen::Index k = 0; k <= K; ++k) {
    rep.plant_outputs.row(k) = plant.measure(xp).transpose();
    rep.model_outputs.row(k) = (model.C * z).transpose();
    if (k == K) break;
    const VectorXd u = inputs.row(k).transpose();
    xp = plant.advance(xp, u);
    z = model.A * z + model.B * u;
  }
  const MatrixXd err = rep.model_outputs - rep.plant_outputs;
  rep.rmse = (err.colwise().squaredNorm() / static_cast<double>(K + 1))
                 .cwiseSqrt()
                 .transpose();
  const VectorXd range = (rep.plant_outputs.colwise().maxCoeff() -
                          rep.plant_outputs.colwise().minCoeff())
                             .transpose();
  rep.nrmse.resize(range.size());
  for (Eigen::Index i = 0; i < range.size(); ++i) {
    if (!(range(i) > 0.0)) {
      std::ostringstream os;
      os << "nrmse: plant output " << i + 1
         << " has zero range; NRMSE undefined";
      throw DomainError(os.str());
    }
    rep.nrmse(i) = rep.rmse(i) / range(i);
  }
  return rep;
}

MatrixXd step_pulse_validation_inputs(const Eigen::Vector2d& u_ss, int windows,
                                      int window_len) {
  static const double kTcOffsets[] = {0.0, -3.0, 2.0, -2.0, 1.0, 0.0};
  static const double kPulse[] = {0.0, 0.005, -0.005, 0.005, -0.005, 0.0};
  constexpr int kPulseLen = 2;
  MatrixXd U(static_cast<Eigen::Index>(windows) * window_len, 2);
  for (int w = 0; w < windows; ++w) {
    for (int k = 0; k < window_len; ++k) {
      const Eigen::Index row = static_cast<Eigen::Index>(w) * window_len + k;
      U(row, 0) = u_ss(0) + kTcOffsets[w % 6];
      U(row, 1) = u_ss(1) + (k < kPulseLen ? kPulse[w % 6] : 0.0);
    }
  }
  return U;
}

}  // namespace klmpc
