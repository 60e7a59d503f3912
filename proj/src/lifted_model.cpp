#include "klmpc/lifted_model.hpp"

#include <set>
#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

void LiftedModel::validate() const {
  require_shape(A, A.rows(), A.rows(), "LiftedModel: A must be square");
  require_shape(B, A.rows(), B.cols(), "LiftedModel: B");
  require_shape(C, C.rows(), A.rows(), "LiftedModel: C");
  if (!A.allFinite() || !B.allFinite() || !C.allFinite()) {
    throw DomainError("LiftedModel: non-finite entries");
  }
  if (basis.size() > 0) {
    require_shape(basis, A.rows(), A.rows(), "LiftedModel: basis");
    if (!basis.allFinite() || !Eigen::FullPivLU<MatrixXd>(basis).isInvertible()) {
      throw DomainError("LiftedModel: basis must be finite and invertible");
    }
  }
}

MatrixXd LiftedModel::basis_or_identity() const {
  return basis.size() > 0 ? basis : MatrixXd::Identity(n_z(), n_z());
}

namespace {

// (T^-1 A T, C T, T^-1 B_d): the same system in the model's rank-test basis.
struct Conditioned {
  MatrixXd A;
  MatrixXd C;
  MatrixXd B_d;
};

Conditioned conditioned(const LiftedModel& model, const MatrixXd& B_d) {
  const MatrixXd T = model.basis_or_identity();
  const Eigen::PartialPivLU<MatrixXd> lu(T);
  return {lu.solve(model.A * T), model.C * T, lu.solve(B_d)};
}

}  // namespace

DisturbanceModel DisturbanceModel::create(const LiftedModel& model,
                                          MatrixXd B_d, MatrixXd C_d) {
  model.validate();
  const RankReport rep = check_augmented(model, B_d, C_d);
  if (!rep.ok) {
    std::ostringstream os;
    os << "DisturbanceModel: augmented system not observable (rank "
       << rep.rank << " of " << rep.required << ")";
    throw StructuralError(os.str());
  }
  return DisturbanceModel(std::move(B_d), std::move(C_d));
}

DisturbanceModel DisturbanceModel::output_disturbance(
    const LiftedModel& model) {
  return create(model, MatrixXd::Zero(model.n_z(), model.n_y()),
                MatrixXd::Identity(model.n_y(), model.n_y()));
}

DisturbanceModel DisturbanceModel::output_disturbance(
    const LiftedModel& model, const std::vector<int>& channels) {
  const MatrixXd C_d = ControlledVariableMap::select(model.n_y(), channels).H.transpose();
  return create(model, MatrixXd::Zero(model.n_z(), C_d.cols()), C_d);
}

DisturbanceModel DisturbanceModel::unchecked(MatrixXd B_d, MatrixXd C_d) {
  return DisturbanceModel(std::move(B_d), std::move(C_d));
}

ControlledVariableMap ControlledVariableMap::select(
    int n_y, const std::vector<int>& rows) {
  ControlledVariableMap map;
  map.H = MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n_y);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= n_y) {
      throw ValidationError("ControlledVariableMap: row index out of range");
    }
    map.H(static_cast<Eigen::Index>(k), rows[k]) = 1.0;
  }
  map.validate(n_y);
  return map;
}

void ControlledVariableMap::validate(int n_y) const {
  if (H.cols() != n_y || H.rows() > n_y) {
    throw DimensionError("ControlledVariableMap: H must be n_yc x n_y, n_yc <= n_y");
  }
  std::set<Eigen::Index> seen;
  for (Eigen::Index r = 0; r < H.rows(); ++r) {
    Eigen::Index col = -1;
    for (Eigen::Index c = 0; c < H.cols(); ++c) {
      if (H(r, c) == 1.0 && col < 0) {
        col = c;
      } else if (H(r, c) != 0.0) {
        col = -2;
        break;
      }
    }
    if (col < 0 || !seen.insert(col).second) {
      throw ValidationError("ControlledVariableMap: rows must be distinct unit rows");
    }
  }
}

Prediction predict(const LiftedModel& model, const DisturbanceModel& dist,
                   const VectorXd& z, const VectorXd& u, const VectorXd& d) {
  require_size(z, model.n_z(), "predict: z");
  require_size(u, model.n_u(), "predict: u");
  require_size(d, dist.n_d(), "predict: d");
  return {model.A * z + model.B * u + dist.B_d() * d,
          model.C * z + dist.C_d() * d};
}

RankReport check_observability(const LiftedModel& model, double rel_tol) {
  const int n = model.n_z();
  const int p = model.n_y();
  const Conditioned sys = conditioned(model, MatrixXd::Zero(n, 0));
  MatrixXd O(static_cast<Eigen::Index>(n) * p, n);
  MatrixXd CAk = sys.C;
  for (int k = 0; k < n; ++k) {
    O.middleRows(static_cast<Eigen::Index>(k) * p, p) = CAk;
    CAk = CAk * sys.A;
  }
  RankReport rep;
  rep.required = n;
  rep.rank = equilibrated_rank(O, rel_tol);
  rep.ok = rep.rank == n;
  return rep;
}

RankReport check_augmented(const LiftedModel& model, const MatrixXd& B_d,
                           const MatrixXd& C_d, double rel_tol) {
  const int n = model.n_z();
  const int p = model.n_y();
  const auto nd = static_cast<int>(B_d.cols());
  if (nd > p) {
    std::ostringstream os;
    os << "disturbance dimension n_d = " << nd
       << " exceeds the number of measurements n_y = " << p
       << " (augmented system cannot be observable)";
    throw StructuralError(os.str());
  }
  require_shape(B_d, n, nd, "check_augmented: B_d");
  require_shape(C_d, p, nd, "check_augmented: C_d");
  const Conditioned sys = conditioned(model, B_d);
  MatrixXd M(n + p, n + nd);
  M.topLeftCorner(n, n) = MatrixXd::Identity(n, n) - sys.A;
  M.topRightCorner(n, nd) = -sys.B_d;
  M.bottomLeftCorner(p, n) = sys.C;
  M.bottomRightCorner(p, nd) = C_d;
  RankReport rep;
  rep.required = n + nd;
  rep.rank = equilibrated_rank(M, rel_tol);
  rep.ok = rep.rank == rep.required && check_observability(model, rel_tol).ok;
  return rep;
}

}  // namespace klmpc
