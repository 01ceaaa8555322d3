#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rpmdp/linmdp.hpp"

namespace rpmdp {

// Primal-dual interior-point solver for small convex programs of the form
//   minimize    f'x
//   subject to  A_eq x = b_eq
//               G x <= h
//               ||x[start..start+len)||_2 <= radius   (per ball)
// Balls enter as smooth constraints 0.5(||seg||^2 - r^2) <= 0. The start
// point must satisfy every inequality strictly; equalities may be violated
// (infeasible-start Newton drives them to zero).
struct BallConstraint {
  int start = 0;
  int len = 0;
  double radius = 0.0;
};

struct QcqpProblem {
  Vec f;
  Mat A_eq;  // 0 x n allowed
  Vec b_eq;
  Mat G;  // 0 x n allowed
  Vec h;
  std::vector<BallConstraint> balls;
};

struct QcqpOptions {
  int max_iter = 200;
  double tol = 1e-8;  // duality-gap surrogate and residual tolerance
  double mu = 10.0;
  double armijo = 0.01;
  double backtrack = 0.5;
};

struct QcqpResult {
  Vec x;
  int iterations = 0;
  double gap = 0.0;
  double primal_residual = 0.0;
};

namespace detail {

// Keep a maximal independent subset of equality rows (callers can emit
// duplicates, e.g. revisited support states); reject inconsistent systems.
inline void reduce_equalities(Mat& A, Vec& b) {
  if (A.rows() == 0) return;
  Eigen::ColPivHouseholderQR<Mat> qr(A.transpose());
  const int rank = int(qr.rank());
  if (rank == A.rows()) return;
  Vec ls = A.colPivHouseholderQr().solve(b);
  if ((A * ls - b).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + b.cwiseAbs().maxCoeff()))
    throw SolverError("equality constraints are inconsistent");
  const auto perm = qr.colsPermutation().indices();
  Mat A2(rank, A.cols());
  Vec b2(rank);
  for (int i = 0; i < rank; ++i) {
    A2.row(i) = A.row(perm(i));
    b2(i) = b(perm(i));
  }
  A = std::move(A2);
  b = std::move(b2);
}

}  // namespace detail

inline QcqpResult solve_qcqp(QcqpProblem prob, const Vec& x0,
                             const QcqpOptions& opt = QcqpOptions{}) {
  const int n = int(x0.size());
  if (prob.f.size() != n) throw SolverError("qcqp: objective dimension mismatch");
  const int m_lin = int(prob.G.rows());
  const int m_ball = int(prob.balls.size());
  const int m = m_lin + m_ball;
  if (m == 0) throw SolverError("qcqp: no inequality constraints (unbounded program)");
  detail::reduce_equalities(prob.A_eq, prob.b_eq);
  const int p = int(prob.A_eq.rows());

  auto eval_f = [&](const Vec& x, Vec& fv) {
    if (m_lin > 0) fv.head(m_lin) = prob.G * x - prob.h;
    for (int k = 0; k < m_ball; ++k) {
      const auto& bc = prob.balls[k];
      fv(m_lin + k) =
          0.5 * (x.segment(bc.start, bc.len).squaredNorm() - bc.radius * bc.radius);
    }
  };
  auto eval_Df = [&](const Vec& x, Mat& Df) {
    if (m_lin > 0) Df.topRows(m_lin) = prob.G;
    for (int k = 0; k < m_ball; ++k) {
      const auto& bc = prob.balls[k];
      Df.row(m_lin + k).setZero();
      Df.row(m_lin + k).segment(bc.start, bc.len) =
          x.segment(bc.start, bc.len).transpose();
    }
  };

  Vec x = x0, fv(m);
  eval_f(x, fv);
  if (fv.maxCoeff() >= 0.0)
    throw SolverError("qcqp: start point is not strictly feasible for inequalities");
  Vec lam = (-fv).cwiseInverse();  // positive
  Vec nu = Vec::Zero(p);

  Mat Df(m, n);
  auto residual_norm = [&](const Vec& xx, const Vec& ll, const Vec& nn, const Vec& ff,
                           const Mat& DD, double inv_t) {
    Vec rd = prob.f + DD.transpose() * ll;
    if (p > 0) rd += prob.A_eq.transpose() * nn;
    Vec rc = -(ll.array() * ff.array()).matrix() - Vec::Constant(m, inv_t);
    double rp2 = 0.0;
    if (p > 0) rp2 = (prob.A_eq * xx - prob.b_eq).squaredNorm();
    return std::sqrt(rd.squaredNorm() + rc.squaredNorm() + rp2);
  };

  QcqpResult out;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    eval_f(x, fv);
    eval_Df(x, Df);
    const double eta = -fv.dot(lam);  // surrogate duality gap
    const double inv_t = eta / (opt.mu * m);

    Vec r_dual = prob.f + Df.transpose() * lam;
    if (p > 0) r_dual += prob.A_eq.transpose() * nu;
    Vec r_cent = -(lam.array() * fv.array()).matrix() - Vec::Constant(m, inv_t);
    Vec r_pri = p > 0 ? Vec(prob.A_eq * x - prob.b_eq) : Vec();

    const double pri_norm = p > 0 ? r_pri.norm() : 0.0;
    out.gap = eta;
    out.primal_residual = pri_norm;
    out.iterations = iter;
    if (eta <= opt.tol && r_dual.norm() <= opt.tol && pri_norm <= opt.tol) {
      out.x = x;
      return out;
    }

    // Reduced KKT: M dx + A' dnu = rhs_top, A dx = -r_pri.
    Mat M = Mat::Zero(n, n);
    for (int k = 0; k < m_ball; ++k) {
      const auto& bc = prob.balls[k];
      for (int i = 0; i < bc.len; ++i) M(bc.start + i, bc.start + i) += lam(m_lin + k);
    }
    const Vec scale = (-lam.array() / fv.array()).matrix();  // positive
    M.noalias() += Df.transpose() * scale.asDiagonal() * Df;
    Vec rhs_top = -r_dual - Df.transpose() * (r_cent.array() / fv.array()).matrix();

    Mat K = Mat::Zero(n + p, n + p);
    K.topLeftCorner(n, n) = M + 1e-12 * Mat::Identity(n, n);
    if (p > 0) {
      K.topRightCorner(n, p) = prob.A_eq.transpose();
      K.bottomLeftCorner(p, n) = prob.A_eq;
      K.bottomRightCorner(p, p) = -1e-12 * Mat::Identity(p, p);
    }
    Vec rhs(n + p);
    rhs.head(n) = rhs_top;
    if (p > 0) rhs.tail(p) = -r_pri;
    const Vec sol = Eigen::FullPivLU<Mat>(K).solve(rhs);
    const Vec dx = sol.head(n);
    const Vec dnu = p > 0 ? Vec(sol.tail(p)) : Vec();
    Vec dlam(m);
    const Vec Dfdx = Df * dx;
    for (int i = 0; i < m; ++i) dlam(i) = (r_cent(i) - lam(i) * Dfdx(i)) / fv(i);

    double alpha = 1.0;
    for (int i = 0; i < m; ++i)
      if (dlam(i) < 0.0) alpha = std::min(alpha, -lam(i) / dlam(i));
    alpha = std::min(1.0, 0.99 * alpha);

    const double base_norm = residual_norm(x, lam, nu, fv, Df, inv_t);
    Vec x_new(n), lam_new(m), nu_new(p), f_new(m);
    Mat Df_new(m, n);
    int bt = 0;
    for (; bt < 64; ++bt) {
      x_new = x + alpha * dx;
      lam_new = lam + alpha * dlam;
      if (p > 0) nu_new = nu + alpha * dnu;
      eval_f(x_new, f_new);
      if (f_new.maxCoeff() < 0.0) {
        eval_Df(x_new, Df_new);
        if (residual_norm(x_new, lam_new, nu_new, f_new, Df_new, inv_t) <=
            (1.0 - opt.armijo * alpha) * base_norm)
          break;
      }
      alpha *= opt.backtrack;
    }
    if (bt == 64) throw SolverError("qcqp: line search failed to make progress");
    x = x_new;
    lam = lam_new;
    if (p > 0) nu = nu_new;
  }
  throw SolverError("qcqp: no convergence within iteration limit");
}

}  // namespace rpmdp
