#pragma once

#include <optional>
#include <string>
#include <vector>

#include "klmpc/linalg.hpp"

namespace klmpc {

/// One scalar observable of the state. Indices are 0-based internally; names
/// use 1-based state labels ("x1", "x1*x2", ...).
struct Observable {
  enum class Kind {
    kState,      ///< x_i
    kSquare,     ///< x_i^2
    kCross,      ///< x_i * x_j
    kArrhenius,  ///< x_i * exp(-1 / x_j)
    kLyapunov,   ///< (x - x_bar_s)' Q_v (x - x_bar_s)
  };

  Kind kind = Kind::kState;
  int i = 0;
  int j = 0;

  std::string name() const;
  /// Parses the names produced by name(); throws ValidationError otherwise.
  static Observable parse(const std::string& name);
};

/// Ordered observable library psi. The first n_x entries are the state
/// coordinates, so the state selector is a left truncation.
class ObservableLibrary {
 public:
  /// Validates the layout: entries 0..n_x-1 must be the states in order, at
  /// most one Lyapunov entry, Q_v symmetric positive definite.
  ObservableLibrary(int n_x, std::vector<Observable> entries,
                    VectorXd x_bar_s, MatrixXd Q_v);

  /// The eight-entry CSTR library:
  /// [x1, x2, x3, x1^2, x2^2, x1*x2, x1*exp(-1/x2), V].
  static ObservableLibrary cstr_default(const VectorXd& x_bar_s,
                                        const MatrixXd& Q_v);
  /// State coordinates only (no Lyapunov observable).
  static ObservableLibrary state_only(int n_x);

  VectorXd lift(const VectorXd& x) const;
  /// Lifts each row of X (N x n_x) into a row of the result (N x n_z).
  MatrixXd lift_rows(const MatrixXd& X) const;

  int n_x() const { return n_x_; }
  int n_z() const { return static_cast<int>(entries_.size()); }
  /// 0-based index of the Lyapunov observable, if present.
  std::optional<int> lyapunov_index() const { return j_v_; }
  const std::vector<Observable>& entries() const { return entries_; }
  const VectorXd& x_bar_s() const { return x_bar_s_; }
  const MatrixXd& Q_v() const { return Q_v_; }
  std::vector<std::string> names() const;

  /// n_x x n_z selector with D_x psi(x) = x.
  MatrixXd state_selector() const;
  /// 1 x n_z unit row picking the Lyapunov observable.
  RowVectorXd lyapunov_selector() const;

 private:
  int n_x_;
  std::vector<Observable> entries_;
  VectorXd x_bar_s_;
  MatrixXd Q_v_;
  std::optional<int> j_v_;
};

/// Quadratic Lyapunov function data in lifted coordinates.
struct LyapunovSpec {
  MatrixXd Q_v;
  VectorXd z_bar_s;
  double r = 1.0;
  MatrixXd D_x;
  RowVectorXd D_v;

  /// Requires a library with a Lyapunov observable and n_z >= n_x + 1.
  static LyapunovSpec from_library(const ObservableLibrary& lib, double r);

  int n_x() const { return static_cast<int>(D_x.rows()); }
  int n_z() const { return static_cast<int>(D_x.cols()); }
  /// D_x' Q_v D_x.
  MatrixXd lifted_weight() const { return D_x.transpose() * Q_v * D_x; }
};

/// V(x - x_bar) = (x - x_bar)' Q_v (x - x_bar).
double lyapunov_value(const LyapunovSpec& spec, const VectorXd& x,
                      const VectorXd& x_bar);

/// Linear-in-z form of the Lyapunov function re-centred at x_bar = D_x z_bar:
/// V(x - x_bar) = F_v psi(x) + c_shift.
struct ShiftedLyapunov {
  RowVectorXd F_v;
  double c_shift = 0.0;
};

ShiftedLyapunov shifted_coeffs(const LyapunovSpec& spec, const VectorXd& z_bar);

/// Empirical quantile of D_v z over lifted snapshot rows (N x n_z).
double lyapunov_level_from_data(const LyapunovSpec& spec,
                                const MatrixXd& lifted_rows,
                                double quantile = 0.95);

}  // namespace klmpc
