#pragma once

#include <string>

#include <Eigen/Dense>

namespace klmpc {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Singular values below kRankTolerance * sigma_max count as zero.
inline constexpr double kRankTolerance = 1e-9;

/// Throws DimensionError with `what` unless rows/cols match.
void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what);
void require_size(const VectorXd& v, Eigen::Index size,
                  const std::string& what);

/// Numerical rank from the SVD with a relative singular-value cutoff.
int numerical_rank(const MatrixXd& m, double rel_tol = kRankTolerance);

/// Same as numerical_rank, after equilibrating rows and columns to unit
/// infinity norm. Rank is invariant under the scaling, but mixed-unit lifted
/// coordinates otherwise swamp the relative cutoff.
int equilibrated_rank(const MatrixXd& m, double rel_tol = kRankTolerance);

/// Moore-Penrose pseudo-inverse via SVD.
MatrixXd pseudo_inverse(const MatrixXd& m, double rel_tol = kRankTolerance);

/// Orthonormal basis (columns) of the null space of m.
MatrixXd null_space(const MatrixXd& m, double rel_tol = kRankTolerance);

double spectral_radius(const MatrixXd& m);

/// Stabilizing solution X of the discrete algebraic Riccati equation
///   X = A'XA - A'XB (R + B'XB)^{-1} B'XA + Q
/// computed with the structure-preserving doubling algorithm. Throws
/// DesignError when the iteration does not converge within max_iter or the
/// final residual is too large.
MatrixXd solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                    const MatrixXd& R, int max_iter = 200);

/// Relative residual of the DARE at X.
double dare_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& X);

/// Infinite-horizon discrete LQR gain K (u = -K x).
MatrixXd dlqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                   const MatrixXd& R);

/// Block diagonal assembly of two matrices.
MatrixXd block_diag(const MatrixXd& a, const MatrixXd& b);

}  // namespace klmpc
