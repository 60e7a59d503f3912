#include "klmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MatrixXd fill_rows(const MatrixXd& m, int n) {
  return m.size() == 0 ? MatrixXd(0, n) : m;
}

struct ReducedResult {
  QpStatus status = QpStatus::kInfeasible;
  VectorXd x;
  VectorXd u;  // multipliers of the unit-normalized rows
  std::vector<int> active;
  int iterations = 0;
  double infeasibility = 0.0;
};

// Goldfarb-Idnani dual active-set method for
//   min 1/2 x'Hx + f'x  s.t.  G x <= g
// with unit-norm rows of G. The working set is kept as constraints in the
// ">=" form n_i'x >= b_i with n_i = -G_i', b_i = -g_i.
ReducedResult dual_active_set(const Eigen::LLT<MatrixXd>& llt,
                              const VectorXd& f, const MatrixXd& G,
                              const VectorXd& g, const std::vector<bool>& skip,
                              const QpOptions& opts) {
  const Eigen::Index n = f.size();
  const Eigen::Index m = G.rows();
  const MatrixXd L = llt.matrixL();
  const auto Lsolve = [&](const MatrixXd& v) -> MatrixXd {
    return L.triangularView<Eigen::Lower>().solve(v);
  };
  const auto Ltsolve = [&](const VectorXd& v) -> VectorXd {
    return L.transpose().triangularView<Eigen::Upper>().solve(v);
  };
  const int max_iter =
      opts.max_iter > 0 ? opts.max_iter : 50 * static_cast<int>(n + m) + 100;

  ReducedResult res;
  res.x = -llt.solve(f);
  res.u = VectorXd::Zero(m);
  std::vector<int> active;
  std::vector<double> u;

  while (true) {
    // Most violated constraint; ties go to the lowest index.
    int p = -1;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (skip[i]) continue;
      const double slack = g(i) - G.row(i).dot(res.x);
      const double tol = opts.feas_tol * std::max(1.0, std::abs(g(i)));
      if (slack < -tol && slack < worst) {
        worst = slack;
        p = static_cast<int>(i);
      }
    }
    if (p < 0) {
      res.status = QpStatus::kOptimal;
      break;
    }

    double u_p = 0.0;
    bool added = false;
    while (!added) {
      if (++res.iterations > max_iter) {
        res.status = QpStatus::kMaxIter;
        res.active = active;
        for (std::size_t j = 0; j < active.size(); ++j) res.u(active[j]) = u[j];
        return res;
      }
      const auto q = static_cast<Eigen::Index>(active.size());
      const VectorXd c = Lsolve(-G.row(p).transpose());
      VectorXd r(q);
      VectorXd w = c;
      if (q > 0) {
        MatrixXd N(n, q);
        for (Eigen::Index j = 0; j < q; ++j) N.col(j) = -G.row(active[j]).transpose();
        const MatrixXd Bm = Lsolve(N);
        const Eigen::HouseholderQR<MatrixXd> qr(Bm);
        const MatrixXd Q1 = qr.householderQ() * MatrixXd::Identity(n, q);
        const MatrixXd R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
        const VectorXd qc = Q1.transpose() * c;
        r = R.triangularView<Eigen::Upper>().solve(qc);
        w = c - Q1 * qc;
      }
      const VectorXd z = Ltsolve(w);
      const bool dependent = w.norm() <= 1e-12 * std::max(c.norm(), 1e-300);

      // Dual step length (a working-set multiplier reaches zero).
      double t1 = kInf;
      Eigen::Index k = -1;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (r(j) > 0.0) {
          const double ratio = u[j] / r(j);
          if (ratio < t1 || (ratio == t1 && k >= 0 && active[j] < active[k])) {
            t1 = ratio;
            k = j;
          }
        }
      }
      // Primal step length (constraint p becomes satisfied).
      const double slack = g(p) - G.row(p).dot(res.x);
      const double t2 = dependent ? kInf : -slack / w.squaredNorm();

      if (t1 == kInf && t2 == kInf) {
        res.status = QpStatus::kInfeasible;
        res.infeasibility = -slack;
        res.active = active;
        return res;
      }
      const double t = std::min(t1, t2);
      if (!dependent) res.x += t * z;
      for (Eigen::Index j = 0; j < q; ++j) u[j] = std::max(0.0, u[j] - t * r(j));
      u_p += t;
      if (t2 <= t1) {
        active.push_back(p);
        u.push_back(u_p);
        added = true;
      } else {
        active.erase(active.begin() + k);
        u.erase(u.begin() + k);
      }
    }
  }
  res.active = active;
  for (std::size_t j = 0; j < active.size(); ++j) res.u(active[j]) = u[j];
  return res;
}

}  // namespace

QpProblem QpProblem::normalized() const {
  QpProblem p = *this;
  p.Aeq = fill_rows(Aeq, n());
  p.Gineq = fill_rows(Gineq, n());
  if (beq.size() == 0) p.beq = VectorXd(0);
  if (gineq.size() == 0) p.gineq = VectorXd(0);
  return p;
}

void QpProblem::validate() const {
  const int nn = n();
  require_shape(Hq, nn, nn, "QpProblem: Hq must be square");
  require_size(fq, nn, "QpProblem: fq");
  const QpProblem p = normalized();
  require_shape(p.Aeq, p.Aeq.rows(), nn, "QpProblem: Aeq");
  require_size(p.beq, p.Aeq.rows(), "QpProblem: beq");
  require_shape(p.Gineq, p.Gineq.rows(), nn, "QpProblem: Gineq");
  require_size(p.gineq, p.Gineq.rows(), "QpProblem: gineq");
  if (!Hq.allFinite() || !fq.allFinite() || !p.Aeq.allFinite() ||
      !p.beq.allFinite() || !p.Gineq.allFinite() || !p.gineq.allFinite()) {
    throw ValidationError("QpProblem: non-finite data");
  }
  if (nn == 0) return;
  const double scale = Hq.cwiseAbs().maxCoeff();
  if ((Hq - Hq.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale)) {
    throw ValidationError("QpProblem: Hq is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(Hq, Eigen::EigenvaluesOnly);
  const VectorXd& ev = es.eigenvalues();
  const double norm = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  if (ev(0) < -1e-10 * norm) {
    throw ValidationError("QpProblem: Hq is not positive semidefinite");
  }
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal:
      return "optimal";
    case QpStatus::kInfeasible:
      return "infeasible";
    case QpStatus::kMaxIter:
      return "max_iter";
  }
  return "?";
}

QpSolution solve(const QpProblem& problem, const QpOptions& opts) {
  problem.validate();
  const QpProblem p = problem.normalized();
  const Eigen::Index n = p.n();
  const Eigen::Index meq = p.Aeq.rows();
  const Eigen::Index m = p.Gineq.rows();

  QpSolution sol;
  sol.duals_eq = VectorXd::Zero(meq);
  sol.duals_ineq = VectorXd::Zero(m);

  // Equality elimination: x = x_p + Z y.
  VectorXd x_p = VectorXd::Zero(n);
  MatrixXd Z = MatrixXd::Identity(n, n);
  if (meq > 0) {
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(p.Aeq);
    x_p = cod.solve(p.beq);
    const double resid = (p.Aeq * x_p - p.beq).cwiseAbs().maxCoeff();
    const double scale =
        std::max({1.0, p.beq.cwiseAbs().maxCoeff(),
                  p.Aeq.cwiseAbs().maxCoeff() * x_p.cwiseAbs().maxCoeff()});
    if (resid > 1e-9 * scale) {
      sol.status = QpStatus::kInfeasible;
      sol.infeasibility = resid;
      sol.x_star = x_p;
      return sol;
    }
    Z = null_space(p.Aeq);
  }
  const Eigen::Index nr = Z.cols();

  MatrixXd Hr = Z.transpose() * p.Hq * Z;
  Hr = 0.5 * (Hr + Hr.transpose());
  const VectorXd fr = Z.transpose() * (p.Hq * x_p + p.fq);
  MatrixXd Gr = p.Gineq * Z;
  VectorXd gr = p.gineq - p.Gineq * x_p;

  // Unit-normalize the rows; rows that vanish in the reduced space are
  // either always satisfied or certify infeasibility.
  VectorXd row_norm = VectorXd::Ones(m);
  std::vector<bool> skip(static_cast<std::size_t>(m), false);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double nrm = Gr.row(i).norm();
    const double orig = p.Gineq.row(i).norm();
    if (nrm <= 1e-14 * std::max(orig, 1e-300) || nr == 0) {
      skip[i] = true;
      if (gr(i) < -opts.feas_tol * std::max(1.0, std::abs(p.gineq(i)))) {
        sol.status = QpStatus::kInfeasible;
        sol.infeasibility = -gr(i);
        sol.x_star = x_p;
        return sol;
      }
      continue;
    }
    row_norm(i) = nrm;
    Gr.row(i) /= nrm;
    gr(i) /= nrm;
  }

  VectorXd y = VectorXd::Zero(nr);
  VectorXd u_norm = VectorXd::Zero(m);
  if (nr > 0) {
    Eigen::LLT<MatrixXd> llt(Hr);
    if (llt.info() != Eigen::Success) {
      double ridge = 1e-10 * std::max(Hr.trace() / static_cast<double>(nr), 1e-300);
      for (int attempt = 0; attempt < 12; ++attempt, ridge *= 10.0) {
        llt.compute(Hr + ridge * MatrixXd::Identity(nr, nr));
        if (llt.info() == Eigen::Success) {
          sol.ridge = ridge;
          break;
        }
      }
      if (llt.info() != Eigen::Success) {
        throw DomainError("qp solve: reduced Hessian could not be factorized");
      }
    }
    const ReducedResult rr = dual_active_set(llt, fr, Gr, gr, skip, opts);
    sol.status = rr.status;
    sol.iterations = rr.iterations;
    sol.infeasibility = rr.infeasibility;
    sol.active_set = rr.active;
    y = rr.x;
    u_norm = rr.u;
  } else {
    sol.status = QpStatus::kOptimal;
  }
  std::sort(sol.active_set.begin(), sol.active_set.end());

  sol.x_star = x_p + Z * y;
  for (Eigen::Index i = 0; i < m; ++i) {
    sol.duals_ineq(i) = skip[i] ? 0.0 : u_norm(i) / row_norm(i);
  }
  if (meq > 0) {
    const VectorXd rhs = -(p.Hq * sol.x_star + p.fq + p.Gineq.transpose() * sol.duals_ineq);
    sol.duals_eq = p.Aeq.transpose().completeOrthogonalDecomposition().solve(rhs);
  }
  sol.objective = 0.5 * sol.x_star.dot(p.Hq * sol.x_star) + p.fq.dot(sol.x_star);
  return sol;
}

KktResiduals kkt_residuals(const QpProblem& problem, const QpSolution& s) {
  const QpProblem p = problem.normalized();
  KktResiduals k;
  const VectorXd& x = s.x_star;
  VectorXd grad = p.Hq * x + p.fq;
  if (p.Aeq.rows() > 0) grad += p.Aeq.transpose() * s.duals_eq;
  if (p.Gineq.rows() > 0) grad += p.Gineq.transpose() * s.duals_ineq;
  k.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (p.Aeq.rows() > 0) {
    k.primal = (p.Aeq * x - p.beq).cwiseAbs().maxCoeff();
  }
  if (p.Gineq.rows() > 0) {
    const VectorXd viol = p.Gineq * x - p.gineq;
    k.primal = std::max(k.primal, viol.maxCoeff());
    k.dual = std::max(0.0, -s.duals_ineq.minCoeff());
    k.complementarity = (s.duals_ineq.array() * viol.array()).abs().maxCoeff();
  }
  k.primal = std::max(0.0, k.primal);
  return k;
}

void write_problem_text(std::ostream& os, const QpProblem& problem) {
  const QpProblem p = problem.normalized();
  const auto block = [&os](const char* name, const MatrixXd& m) {
    os << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    os << std::setprecision(17) << std::scientific;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        os << (c > 0 ? " " : "") << m(r, c);
      }
      os << '\n';
    }
    os << std::defaultfloat;
  };
  block("Hq", p.Hq);
  block("fq", p.fq);
  block("Aeq", p.Aeq);
  block("beq", p.beq);
  block("Gineq", p.Gineq);
  block("gineq", p.gineq);
}

}  // namespace klmpc
