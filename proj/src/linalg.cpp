#include "klmpc/linalg.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "klmpc/error.hpp"

namespace klmpc {

void require_shape(const MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected " << rows << "x" << cols << ", got " << m.rows()
       << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

void require_size(const VectorXd& v, Eigen::Index size,
                  const std::string& what) {
  if (v.size() != size) {
    std::ostringstream os;
    os << what << ": expected length " << size << ", got " << v.size();
    throw DimensionError(os.str());
  }
}

int numerical_rank(const MatrixXd& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++rank;
  }
  return rank;
}

int equilibrated_rank(const MatrixXd& m, double rel_tol) {
  MatrixXd scaled = m;
  // A few sweeps of alternating row/column scaling.
  for (int sweep = 0; sweep < 10; ++sweep) {
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
      const double n = scaled.row(i).cwiseAbs().maxCoeff();
      if (n > 0.0) scaled.row(i) /= n;
    }
    for (Eigen::Index j = 0; j < scaled.cols(); ++j) {
      const double n = scaled.col(j).cwiseAbs().maxCoeff();
      if (n > 0.0) scaled.col(j) /= n;
    }
  }
  return numerical_rank(scaled, rel_tol);
}

MatrixXd pseudo_inverse(const MatrixXd& m, double rel_tol) {
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  VectorXd inv = VectorXd::Zero(s.size());
  if (s.size() > 0 && s(0) > 0.0) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > rel_tol * s(0)) inv(i) = 1.0 / s(i);
    }
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

MatrixXd null_space(const MatrixXd& m, double rel_tol) {
  if (m.rows() == 0) return MatrixXd::Identity(m.cols(), m.cols());
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  int rank = 0;
  if (s.size() > 0 && s(0) > 0.0) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (s(i) > rel_tol * s(0)) ++rank;
    }
  }
  return svd.matrixV().rightCols(m.cols() - rank);
}

double spectral_radius(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double dare_residual(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                     const MatrixXd& R, const MatrixXd& X) {
  const MatrixXd BtX = B.transpose() * X;
  const MatrixXd gain = (R + BtX * B).ldlt().solve(BtX * A);
  const MatrixXd res =
      A.transpose() * X * A - A.transpose() * X * B * gain + Q - X;
  return res.norm() / std::max(1.0, X.norm());
}

MatrixXd solve_dare(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                    const MatrixXd& R, int max_iter) {
  const Eigen::Index n = A.rows();
  require_shape(A, n, n, "solve_dare: A");
  require_shape(B, n, B.cols(), "solve_dare: B");
  require_shape(Q, n, n, "solve_dare: Q");
  require_shape(R, B.cols(), B.cols(), "solve_dare: R");
  Eigen::LLT<MatrixXd> r_llt(R);
  if (r_llt.info() != Eigen::Success) {
    throw DesignError("solve_dare: R is not positive definite");
  }

  // Structure-preserving doubling: A_k -> 0, H_k -> X.
  MatrixXd Ak = A;
  MatrixXd Gk = B * r_llt.solve(B.transpose());
  MatrixXd Hk = Q;
  const MatrixXd I = MatrixXd::Identity(n, n);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::PartialPivLU<MatrixXd> W(I + Gk * Hk);
    const MatrixXd WA = W.solve(Ak);
    const MatrixXd WG = W.solve(Gk);
    const MatrixXd Hnext = Hk + Ak.transpose() * Hk * WA;
    const MatrixXd Gnext = Gk + Ak * WG * Ak.transpose();
    const MatrixXd Anext = Ak * WA;
    const double change = (Hnext - Hk).norm() / std::max(1.0, Hnext.norm());
    Hk = 0.5 * (Hnext + Hnext.transpose());
    Gk = 0.5 * (Gnext + Gnext.transpose());
    Ak = Anext;
    if (!Hk.allFinite()) break;
    if (change < 1e-15 || Ak.norm() < 1e-300) {
      const double res = dare_residual(A, B, Q, R, Hk);
      if (res < 1e-8) return Hk;
    }
  }
  if (Hk.allFinite()) {
    const double res = dare_residual(A, B, Q, R, Hk);
    if (res < 1e-8) return Hk;
    std::ostringstream os;
    os << "solve_dare: no convergence after " << max_iter
       << " doubling steps, relative residual " << res;
    throw DesignError(os.str());
  }
  throw DesignError("solve_dare: iteration diverged (pair not stabilizable?)");
}

MatrixXd dlqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Q,
                   const MatrixXd& R) {
  const MatrixXd X = solve_dare(A, B, Q, R);
  const MatrixXd BtX = B.transpose() * X;
  return (R + BtX * B).ldlt().solve(BtX * A);
}

MatrixXd block_diag(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out = MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace klmpc
