#pragma once

#include "klmpc/linalg.hpp"
#include "klmpc/observables.hpp"
#include "klmpc/plant.hpp"

namespace klmpc {

/// Lifted linear predictor z+ = A z + B u, y = C z.
///
/// `basis` is an optional invertible n_z x n_z matrix T (empty = identity)
/// describing well-conditioned coordinates z = T w for rank tests. Observables
/// such as c and c*exp(-1/T) are nearly collinear over the operating region,
/// so A is badly non-normal in raw coordinates and SVD ranks taken there are
/// meaningless; identify() sets T to the Cholesky factor of the lifted data's
/// second moment.
struct LiftedModel {
  MatrixXd A;
  MatrixXd B;
  MatrixXd C;
  MatrixXd basis;

  int n_z() const { return static_cast<int>(A.rows()); }
  int n_u() const { return static_cast<int>(B.cols()); }
  int n_y() const { return static_cast<int>(C.rows()); }

  /// Throws DimensionError / DomainError on inconsistent or non-finite data.
  void validate() const;
  /// T, or the identity when no basis is set.
  MatrixXd basis_or_identity() const;
};

/// Integrating disturbance entering the lifted dynamics (B_d) and the
/// output (C_d). Only constructible when the augmented system is observable.
class DisturbanceModel {
 public:
  /// Throws StructuralError when n_d > n_y or the augmented pair fails the
  /// observability rank test.
  static DisturbanceModel create(const LiftedModel& model, MatrixXd B_d,
                                 MatrixXd C_d);
  /// Pure output disturbance: n_d = n_y, B_d = 0, C_d = I.
  static DisturbanceModel output_disturbance(const LiftedModel& model);
  /// Output disturbance on the listed measurement channels only: B_d = 0,
  /// C_d = the identity columns of `channels`.
  static DisturbanceModel output_disturbance(const LiftedModel& model,
                                             const std::vector<int>& channels);
  /// Skips the structural checks; for tests and negative controls.
  static DisturbanceModel unchecked(MatrixXd B_d, MatrixXd C_d);

  const MatrixXd& B_d() const { return B_d_; }
  const MatrixXd& C_d() const { return C_d_; }
  int n_d() const { return static_cast<int>(B_d_.cols()); }

 private:
  DisturbanceModel(MatrixXd B_d, MatrixXd C_d)
      : B_d_(std::move(B_d)), C_d_(std::move(C_d)) {}
  MatrixXd B_d_;
  MatrixXd C_d_;
};

/// Controlled variables y_c = H y; H stacks distinct unit rows.
struct ControlledVariableMap {
  MatrixXd H;

  static ControlledVariableMap select(int n_y, const std::vector<int>& rows);
  void validate(int n_y) const;
};

struct Prediction {
  VectorXd z_next;
  VectorXd y;
};

Prediction predict(const LiftedModel& model, const DisturbanceModel& dist,
                   const VectorXd& z, const VectorXd& u, const VectorXd& d);

struct RankReport {
  bool ok = false;
  int rank = 0;
  int required = 0;
};

/// Rank of [C; CA; ...; CA^{n_z-1}] against n_z, evaluated in the model's
/// basis (ranks are invariant under the change of coordinates).
RankReport check_observability(const LiftedModel& model,
                               double rel_tol = kRankTolerance);

/// Augmented observability: (C, A) observable and
/// rank [I - A, -B_d; C, C_d] = n_z + n_d. Throws StructuralError if
/// n_d > n_y.
RankReport check_augmented(const LiftedModel& model, const MatrixXd& B_d,
                           const MatrixXd& C_d,
                           double rel_tol = kRankTolerance);

/// The lifted model used as a plant: internal state z, output C z plus an
/// optional constant output bias. The physical initial state is lifted with
/// the library.
class LiftedModelPlant final : public DiscretePlant {
 public:
  LiftedModelPlant(LiftedModel model, ObservableLibrary lib, VectorXd output_bias = {})
      : model_(std::move(model)), lib_(std::move(lib)), bias_(std::move(output_bias)) {
    if (bias_.size() == 0) bias_ = VectorXd::Zero(model_.n_y());
  }

  VectorXd initial_state(const VectorXd& x) const override {
    return lib_.lift(x);
  }
  VectorXd advance(const VectorXd& z, const VectorXd& u) const override {
    return model_.A * z + model_.B * u;
  }
  VectorXd measure(const VectorXd& z) const override { return model_.C * z + bias_; }

 private:
  LiftedModel model_;
  ObservableLibrary lib_;
  VectorXd bias_;
};

}  // namespace klmpc
