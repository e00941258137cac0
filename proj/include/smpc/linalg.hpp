#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "smpc/errors.hpp"

namespace smpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

inline double spectral_radius(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Axis-aligned bounded disturbance support.
struct BoxSupport {
  Vec lower;
  Vec upper;

  Eigen::Index dim() const { return lower.size(); }
  Vec center() const { return 0.5 * (lower + upper); }
  Vec halfwidth() const { return 0.5 * (upper - lower); }
  bool contains(const Vec& w, double tol = 0.0) const {
    return (w.array() >= lower.array() - tol).all() && (w.array() <= upper.array() + tol).all();
  }
};

/// max_{w in box} c'w, exact for boxes: sum of c_j * center_j + |c_j| * halfwidth_j.
inline double box_support_max(const RowVec& c, const BoxSupport& box) {
  return c.dot(box.center()) + c.cwiseAbs().dot(box.halfwidth());
}

inline double box_support_min(const RowVec& c, const BoxSupport& box) {
  return c.dot(box.center()) - c.cwiseAbs().dot(box.halfwidth());
}

/// Precomputed powers of the closed-loop matrix A_cl = A + BK, shared
/// read-only by the offline, adaptive and MPC stages.
///
/// decay_index is the smallest t with max-abs entry of A_cl^t below
/// decay_tol; past it the propagated disturbance terms are treated as
/// settled (saturation of the gamma recursion, clamped long-range sums).
class AclPowerCache {
public:
  static constexpr double kDefaultDecayTol = 1e-10;

  AclPowerCache(Mat a_cl, int t_max, double decay_tol = kDefaultDecayTol)
      : a_cl_(std::move(a_cl)), decay_tol_(decay_tol) {
    if (a_cl_.rows() != a_cl_.cols()) throw ConfigError("AclPowerCache: A_cl must be square");
    if (t_max < 0) throw ConfigError("AclPowerCache: t_max must be >= 0");
    const Eigen::Index n = a_cl_.rows();
    powers_.reserve(static_cast<std::size_t>(t_max) + 1);
    powers_.push_back(Mat::Identity(n, n));
    decay_index_ = t_max;
    bool decayed = false;
    for (int k = 1; k <= t_max; ++k) {
      powers_.push_back(a_cl_ * powers_.back());
      if (!decayed && powers_.back().cwiseAbs().maxCoeff() < decay_tol_) {
        decay_index_ = k;
        decayed = true;
      }
    }
  }

  const Mat& a_cl() const { return a_cl_; }
  int t_max() const { return static_cast<int>(powers_.size()) - 1; }
  int decay_index() const { return decay_index_; }
  double decay_tol() const { return decay_tol_; }

  const Mat& power(int k) const {
    if (k < 0 || k > t_max())
      throw std::out_of_range("AclPowerCache: power index " + std::to_string(k) +
                              " outside cached range [0, " + std::to_string(t_max()) + "]");
    return powers_[static_cast<std::size_t>(k)];
  }

private:
  Mat a_cl_;
  double decay_tol_;
  std::vector<Mat> powers_;
  int decay_index_;
};

/// Infinite-horizon LQR solution: cost-to-go P and gain K with u = Kx.
struct LqrSolution {
  Mat p;
  Mat k_lqr;
};

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// (cap 10000, relative tolerance 1e-12) and returns P together with
/// K = -(R + B'PB)^{-1} B'PA.
inline LqrSolution solve_dare(const Mat& a, const Mat& b, const Mat& q, const Mat& r,
                              int max_iter = 10000, double rel_tol = 1e-12) {
  if (a.rows() != a.cols()) throw ConfigError("solve_dare: A must be square");
  if (b.rows() != a.rows()) throw ConfigError("solve_dare: B row count must match A");
  Mat p = q;
  for (int it = 0; it < max_iter; ++it) {
    // closed-loop (Joseph) form of the Riccati map; algebraically identical
    // to the textbook update but propagates roundoff through the stable
    // A+BK instead of an unstable open-loop A
    const Mat btpb = r + b.transpose() * p * b;
    const Mat k = -btpb.ldlt().solve(b.transpose() * p * a);
    const Mat a_cl = a + b * k;
    Mat p_next = a_cl.transpose() * p * a_cl + k.transpose() * r * k + q;
    p_next = 0.5 * (p_next + p_next.transpose());
    const double delta = (p_next - p).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
    p = p_next;
    if (delta <= rel_tol * scale) {
      LqrSolution sol;
      sol.p = p;
      sol.k_lqr = -(r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
      return sol;
    }
  }
  throw SolverFailure("solve_dare: no convergence after iteration cap (pair may not be stabilizable)");
}

/// Max-abs residual of the DARE fixed point at P; below 1e-9 for a valid solution.
inline double dare_residual(const Mat& a, const Mat& b, const Mat& q, const Mat& r, const Mat& p) {
  const Mat btpa = b.transpose() * p * a;
  const Mat rhs = a.transpose() * p * a - btpa.transpose() * (r + b.transpose() * p * b).ldlt().solve(btpa) + q;
  return (p - rhs).cwiseAbs().maxCoeff();
}

/// Exact bounds of h_row * sum_{j=0}^{steps-1} A_cl^j w_j over w_j in box.
///
/// The disturbances enter independently, so the extremum separates into a
/// sum of per-step box support functions of h_row * A_cl^j.
struct WindowBounds {
  double max;  // M: maximum of the admissible accumulated disturbances
  double min;  // m: minimum of the admissible accumulated disturbances
};

inline WindowBounds accumulated_support(const RowVec& h_row, const AclPowerCache& cache, int steps,
                                        const BoxSupport& box) {
  if (steps < 0) throw ConfigError("accumulated_support: steps must be >= 0");
  WindowBounds out{0.0, 0.0};
  for (int j = 0; j < steps; ++j) {
    const RowVec c = h_row * cache.power(j);
    out.max += box_support_max(c, box);
    out.min += box_support_min(c, box);
  }
  return out;
}

}  // namespace smpc
