#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "smpc/linalg.hpp"

namespace smpc::qp {

/// min 0.5 x'Hx + f'x + c0  s.t.  A x <= b, with H symmetric positive definite.
struct DenseQp {
  Mat hessian;
  Vec linear;
  double constant = 0.0;
  Mat ineq;
  Vec ineq_rhs;

  Eigen::Index dim() const { return linear.size(); }
  Eigen::Index rows() const { return ineq_rhs.size(); }

  double objective(const Vec& x) const {
    return 0.5 * x.dot(hessian * x) + linear.dot(x) + constant;
  }

  double max_violation(const Vec& x) const {
    if (rows() == 0) return 0.0;
    return (ineq * x - ineq_rhs).maxCoeff();
  }
};

enum class QpStatus : int { optimal = 0, infeasible = 1, numerical_failure = 2 };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::numerical_failure: return "numerical-failure";
  }
  return "?";
}

struct QpResult {
  QpStatus status = QpStatus::numerical_failure;
  Vec x;
  Vec dual;  // one multiplier per inequality row, >= 0
  double objective = std::numeric_limits<double>::quiet_NaN();
  double max_violation = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

namespace detail {

inline double hypot2(double a, double b) { return std::hypot(a, b); }

/// Givens sweep appending the normal (held in d = J' n_p) to the active-set
/// factorization: zeroes d below row iq and keeps J consistent.
inline void add_constraint_rotation(Mat& j_mat, Vec& d, int iq) {
  const int n = static_cast<int>(d.size());
  for (int j = n - 1; j >= iq + 1; --j) {
    double cc = d(j - 1);
    double ss = d(j);
    const double h = hypot2(cc, ss);
    if (h == 0.0) continue;
    d(j) = 0.0;
    ss = ss / h;
    cc = cc / h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d(j - 1) = -h;
    } else {
      d(j - 1) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      const double t1 = j_mat(k, j - 1);
      const double t2 = j_mat(k, j);
      j_mat(k, j - 1) = t1 * cc + t2 * ss;
      j_mat(k, j) = xny * (t1 + j_mat(k, j - 1)) - t2;
    }
  }
}

/// Removes active constraint at position qq and re-triangularizes R.
inline void delete_constraint_rotation(Mat& j_mat, Mat& r_mat, std::vector<int>& active, Vec& u,
                                       int& iq, int qq) {
  const int n = static_cast<int>(j_mat.rows());
  for (int i = qq; i < iq - 1; ++i) {
    active[static_cast<std::size_t>(i)] = active[static_cast<std::size_t>(i + 1)];
    u(i) = u(i + 1);
    r_mat.col(i) = r_mat.col(i + 1);
  }
  u(iq - 1) = 0.0;
  active.pop_back();
  --iq;
  if (iq == 0) return;
  for (int j = qq; j < iq; ++j) {
    double cc = r_mat(j, j);
    double ss = r_mat(j + 1, j);
    const double h = hypot2(cc, ss);
    if (h == 0.0) continue;
    cc = cc / h;
    ss = ss / h;
    r_mat(j + 1, j) = 0.0;
    if (cc < 0.0) {
      r_mat(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      r_mat(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq; ++k) {
      const double t1 = r_mat(j, k);
      const double t2 = r_mat(j + 1, k);
      r_mat(j, k) = t1 * cc + t2 * ss;
      r_mat(j + 1, k) = xny * (t1 + r_mat(j, k)) - t2;
    }
    for (int k = 0; k < n; ++k) {
      const double t1 = j_mat(k, j);
      const double t2 = j_mat(k, j + 1);
      j_mat(k, j) = t1 * cc + t2 * ss;
      j_mat(k, j + 1) = xny * (j_mat(k, j) + t1) - t2;
    }
  }
}

}  // namespace detail

/// Goldfarb-Idnani dual active-set method for strictly convex QPs. Starts
/// from the unconstrained minimizer and adds violated constraints one at a
/// time, so every iterate is dual feasible and infeasibility surfaces as an
/// unbounded dual step.
inline QpResult solve_qp(const DenseQp& qp, int max_iterations = 0) {
  const int n = static_cast<int>(qp.dim());
  const int m = static_cast<int>(qp.rows());
  QpResult res;
  res.dual = Vec::Zero(m);
  if (max_iterations <= 0) max_iterations = 100 + 20 * (m + n + 1);

  Eigen::LLT<Mat> llt(qp.hessian);
  if (llt.info() != Eigen::Success) {
    // tiny ridge for borderline semidefinite cost, then give up
    Mat ridged = qp.hessian;
    ridged.diagonal().array() += 1e-12 * std::max(1.0, qp.hessian.diagonal().maxCoeff());
    llt.compute(ridged);
    if (llt.info() != Eigen::Success) return res;  // numerical_failure
  }

  Mat j_mat = llt.matrixU().solve(Mat::Identity(n, n));  // J = L^{-T}
  Vec x = llt.solve(-qp.linear);
  Mat r_mat = Mat::Zero(n, n);
  std::vector<int> active;
  Vec u = Vec::Zero(n + 1);
  int iq = 0;

  const double rhs_scale = 1.0 + (m > 0 ? qp.ineq_rhs.cwiseAbs().maxCoeff() : 0.0);
  const double tol_violation = 1e-10 * rhs_scale;

  Vec np(n), d(n), z(n), r(n);
  int ip = -1;
  double u_entering = 0.0;
  bool selecting = true;

  for (int iter = 0; iter < max_iterations; ++iter) {
    res.iterations = iter + 1;
    if (selecting) {
      // pick the most violated inactive constraint
      ip = -1;
      double worst = tol_violation;
      for (int i = 0; i < m; ++i) {
        bool is_active = false;
        for (int idx : active)
          if (idx == i) {
            is_active = true;
            break;
          }
        if (is_active) continue;
        const double s = qp.ineq.row(i).dot(x) - qp.ineq_rhs(i);
        if (s > worst) {
          worst = s;
          ip = i;
        }
      }
      if (ip < 0) {
        res.status = QpStatus::optimal;
        break;
      }
      np = -qp.ineq.row(ip).transpose();  // GI works with n'x >= b
      u_entering = 0.0;
      selecting = false;
    }

    d.noalias() = j_mat.transpose() * np;
    if (iq < n)
      z.noalias() = j_mat.rightCols(n - iq) * d.tail(n - iq);
    else
      z.setZero();
    if (iq > 0)
      r.head(iq) = r_mat.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));

    double t1 = std::numeric_limits<double>::infinity();
    int k_drop = -1;
    for (int j = 0; j < iq; ++j) {
      if (r(j) > 0.0) {
        const double ratio = u(j) / r(j);
        if (ratio < t1) {
          t1 = ratio;
          k_drop = j;
        }
      }
    }

    const double s_gi = np.dot(x) + qp.ineq_rhs(ip);  // np'x - b with b = -rhs
    const double ztnp = z.dot(np);
    const double z_scale = 1e-12 * (1.0 + d.cwiseAbs().maxCoeff());
    const bool z_nonzero = z.cwiseAbs().maxCoeff() > z_scale && ztnp > 0.0;
    const double t2 = z_nonzero ? -s_gi / ztnp : std::numeric_limits<double>::infinity();
    const double t = std::min(t1, t2);

    if (!std::isfinite(t)) {
      res.status = QpStatus::infeasible;
      break;
    }

    if (!std::isfinite(t2)) {
      // dual-only step: drop the blocking constraint and retry
      for (int j = 0; j < iq; ++j) u(j) -= t * r(j);
      u_entering += t;
      detail::delete_constraint_rotation(j_mat, r_mat, active, u, iq, k_drop);
      continue;
    }

    x += t * z;
    for (int j = 0; j < iq; ++j) u(j) -= t * r(j);
    u_entering += t;

    if (t >= t2 * (1.0 - 1e-12)) {
      // full step: the entering constraint becomes active
      detail::add_constraint_rotation(j_mat, d, iq);
      if (std::abs(d(iq)) < 1e-14 * (1.0 + d.head(iq + 1).cwiseAbs().maxCoeff())) {
        res.status = QpStatus::numerical_failure;
        break;
      }
      r_mat.col(iq).head(iq + 1) = d.head(iq + 1);
      active.push_back(ip);
      u(iq) = u_entering;
      ++iq;
      selecting = true;
      continue;
    }

    // partial step: drop the blocking constraint, keep chasing ip
    detail::delete_constraint_rotation(j_mat, r_mat, active, u, iq, k_drop);
  }

  if (res.status == QpStatus::optimal) {
    res.x = x;
    for (int j = 0; j < iq; ++j) res.dual(active[static_cast<std::size_t>(j)]) = u(j);
    res.objective = qp.objective(x);
    res.max_violation = qp.max_violation(x);
    Vec station = qp.hessian * x + qp.linear;
    if (m > 0) station += qp.ineq.transpose() * res.dual;
    res.kkt_residual = station.cwiseAbs().maxCoeff() / (1.0 + qp.linear.cwiseAbs().maxCoeff());
    const double tol_check = 1e-8 * rhs_scale;
    if (res.max_violation > tol_check || res.kkt_residual > 1e-8) res.status = QpStatus::numerical_failure;
  } else if (res.status != QpStatus::infeasible && res.iterations >= max_iterations) {
    res.status = QpStatus::numerical_failure;
  }
  return res;
}

/// solve_qp plus one retry on an equilibrated copy (rows of A scaled to
/// unit max-norm) when the first pass fails numerically.
inline QpResult solve_qp_with_retry(const DenseQp& qp, int max_iterations = 0) {
  QpResult first = solve_qp(qp, max_iterations);
  if (first.status != QpStatus::numerical_failure) return first;
  DenseQp scaled = qp;
  Vec row_scale = Vec::Ones(qp.rows());
  for (Eigen::Index i = 0; i < qp.rows(); ++i) {
    const double nrm = qp.ineq.row(i).cwiseAbs().maxCoeff();
    if (nrm > 0.0) {
      row_scale(i) = 1.0 / nrm;
      scaled.ineq.row(i) *= row_scale(i);
      scaled.ineq_rhs(i) *= row_scale(i);
    }
  }
  QpResult second = solve_qp(scaled, max_iterations);
  if (second.status == QpStatus::optimal) {
    second.dual = second.dual.cwiseProduct(row_scale);
    second.max_violation = qp.max_violation(second.x);
    second.objective = qp.objective(second.x);
  }
  return second;
}

}  // namespace smpc::qp
