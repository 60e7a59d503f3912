#pragma once

#include <iosfwd>
#include <vector>

#include "klmpc/linalg.hpp"

namespace klmpc {

/// minimize 1/2 x'Hq x + fq'x  subject to  Aeq x = beq,  Gineq x <= gineq.
struct QpProblem {
  MatrixXd Hq;
  VectorXd fq;
  MatrixXd Aeq;
  VectorXd beq;
  MatrixXd Gineq;
  VectorXd gineq;

  int n() const { return static_cast<int>(Hq.rows()); }
  /// Throws DimensionError on inconsistent shapes and ValidationError when
  /// Hq is not symmetric (1e-12 relative) or not positive semidefinite
  /// (smallest eigenvalue below -1e-10 ||Hq||). Empty Aeq/Gineq with zero
  /// rows are accepted; 0 x n shapes are filled in by normalized().
  void validate() const;
  /// Copy with empty constraint blocks given their proper 0 x n shapes.
  QpProblem normalized() const;
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIter };

const char* to_string(QpStatus s);

struct QpSolution {
  QpStatus status = QpStatus::kInfeasible;
  VectorXd x_star;
  /// Multipliers of Aeq x = beq and Gineq x <= gineq, defined by
  /// Hq x + fq + Aeq' duals_eq + Gineq' duals_ineq = 0.
  VectorXd duals_eq;
  VectorXd duals_ineq;
  /// Sorted indices of the inequalities in the final working set.
  std::vector<int> active_set;
  int iterations = 0;
  /// Ridge added to Hq when its Cholesky factorization failed (0 otherwise).
  double ridge = 0.0;
  /// For kInfeasible: violation of the constraint that could not be added
  /// (or the equality residual when the equalities are inconsistent).
  double infeasibility = 0.0;
  double objective = 0.0;
};

struct QpOptions {
  int max_iter = 0;  ///< 0 = 50 (n + m_ineq) + 100
  /// Violation threshold on unit-normalized inequality rows, relative to
  /// max(1, |g_i| / ||G_i||).
  double feas_tol = 1e-11;
};

/// Dense dual active-set solve (Goldfarb-Idnani) after eliminating the
/// equalities through a null-space parameterization. Strictly convex
/// problems return the unique minimizer; deterministic given the problem.
QpSolution solve(const QpProblem& p, const QpOptions& opts = {});

/// KKT residuals of a candidate pair, in the norms used by the tests.
struct KktResiduals {
  double stationarity = 0.0;   ///< ||Hx + f + Aeq'l + G'v||_inf
  double primal = 0.0;         ///< max(|Aeq x - beq|, (Gx - g)_+)
  double dual = 0.0;           ///< max(-v)_+
  double complementarity = 0.0;  ///< max |v_i (Gx - g)_i|
};
KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s);

/// Plain-text dump: for each block a header "name rows cols" followed by the
/// row-major values at 17 significant digits.
void write_problem_text(std::ostream& os, const QpProblem& p);

}  // namespace klmpc
