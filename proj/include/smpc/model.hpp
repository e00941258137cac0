#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "smpc/linalg.hpp"
#include "smpc/rng.hpp"

namespace smpc {

/// Plant x_{t+1} = A x_t + B u_t + w_t with the pre-stabilizing feedback
/// gain K (u = Kx + v). All types in this header are immutable after
/// construction and safe to share across workers.
struct LtiSystem {
  Mat a;
  Mat b;
  Mat k;

  Eigen::Index n() const { return a.rows(); }
  Eigen::Index m() const { return b.cols(); }
  Mat a_cl() const { return a + b * k; }
};

/// State polytope {x : Hx <= h}, input polytope {u : H_u u <= h_u} and the
/// per-row violation level alpha for the chance constraints.
struct ConstraintSpec {
  Mat h_mat;
  Vec h;
  Mat hu_mat;
  Vec hu;
  double alpha = 0.1;

  Eigen::Index p() const { return h_mat.rows(); }
  Eigen::Index q() const { return hu_mat.rows(); }
  RowVec state_row(Eigen::Index i) const { return h_mat.row(i); }
  RowVec input_row(Eigen::Index j) const { return hu_mat.row(j); }
};

struct UniformBoxGenerator {};

struct TruncatedGaussianGenerator {
  Vec mean;
  Mat covariance;
};

struct DiscreteLatticeGenerator {
  std::vector<Vec> points;
  std::vector<double> probabilities;
};

using GeneratorSpec = std::variant<UniformBoxGenerator, TruncatedGaussianGenerator, DiscreteLatticeGenerator>;

/// Stand-in for the unknown disturbance distribution: a known bounded
/// support plus one of several generators used to produce samples from it.
struct DisturbanceModel {
  BoxSupport support;
  GeneratorSpec generator = UniformBoxGenerator{};
  std::uint64_t seed = 0;

  bool zero_width() const { return (support.upper - support.lower).cwiseAbs().maxCoeff() == 0.0; }
};

/// Sampler bound to one RNG stream. Truncated-gaussian draws outside the
/// support are rejected and redrawn (no clipping, to avoid boundary atoms).
class DisturbanceSampler {
public:
  DisturbanceSampler(const DisturbanceModel& model, std::uint64_t seed)
      : model_(&model), rng_(seed), chol_() {
    if (const auto* g = std::get_if<TruncatedGaussianGenerator>(&model.generator)) {
      Eigen::LLT<Mat> llt(g->covariance);
      if (llt.info() != Eigen::Success)
        throw ConfigError("truncated-gaussian covariance is not positive definite");
      chol_ = llt.matrixL();
    }
  }

  Vec draw() {
    const BoxSupport& box = model_->support;
    const Eigen::Index n = box.dim();
    if (std::holds_alternative<UniformBoxGenerator>(model_->generator)) {
      Vec w(n);
      for (Eigen::Index j = 0; j < n; ++j) w(j) = rng_.uniform(box.lower(j), box.upper(j));
      return w;
    }
    if (const auto* g = std::get_if<TruncatedGaussianGenerator>(&model_->generator)) {
      constexpr int kMaxRejects = 100000;
      for (int attempt = 0; attempt < kMaxRejects; ++attempt) {
        Vec z(n);
        for (Eigen::Index j = 0; j < n; ++j) z(j) = rng_.normal();
        Vec w = g->mean + chol_ * z;
        if (box.contains(w)) return w;
      }
      throw ConfigError("truncated-gaussian rejection sampling failed; support too small for the given moments");
    }
    const auto& g = std::get<DiscreteLatticeGenerator>(model_->generator);
    const double u = rng_.uniform01();
    double acc = 0.0;
    for (std::size_t idx = 0; idx < g.points.size(); ++idx) {
      acc += g.probabilities[idx];
      if (u < acc) return g.points[idx];
    }
    return g.points.back();
  }

private:
  const DisturbanceModel* model_;
  Rng rng_;
  Mat chol_;
};

/// Horizon lengths, initial state and quadratic cost data.
struct TaskSpec {
  int horizon_task = 15;  // T
  int horizon_mpc = 6;    // N
  Vec x_start;
  Mat q;
  Mat q_f;
  Mat r;
  Vec x_ref;
};

namespace detail {

inline bool symmetric(const Mat& m, double tol = 1e-9) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

inline bool psd(const Mat& m, double tol = 1e-9) {
  if (!symmetric(m, tol)) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol;
}

inline bool pd(const Mat& m, double tol = 1e-12) {
  if (!symmetric(m, 1e-9)) return false;
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > tol;
}

}  // namespace detail

/// Checks every model invariant and returns one message per violation;
/// an empty report means the configuration is usable.
inline std::vector<std::string> validate(const LtiSystem& system, const ConstraintSpec& constraints,
                                         const DisturbanceModel& dist, const TaskSpec& task) {
  std::vector<std::string> report;
  const auto bad = [&report](const std::string& msg) { report.push_back(msg); };

  const Eigen::Index n = system.a.rows();
  const Eigen::Index m = system.b.cols();
  if (system.a.rows() != system.a.cols()) bad("system: A must be square");
  if (system.b.rows() != n) bad("system: B must have n rows");
  if (system.k.rows() != m || system.k.cols() != n) bad("system: K must be m x n");
  if (report.empty()) {
    const double rho = spectral_radius(system.a_cl());
    if (!(rho < 1.0)) bad("system: spectral radius >= 1 for A+BK (rho = " + std::to_string(rho) + ")");
  }

  if (constraints.p() < 1) bad("constraints: state polytope needs p >= 1 rows");
  if (constraints.q() < 1) bad("constraints: input polytope needs q >= 1 rows");
  if (constraints.h_mat.cols() != n) bad("constraints: H must have n columns");
  if (constraints.hu_mat.cols() != m) bad("constraints: H_u must have m columns");
  if (constraints.h.size() != constraints.p()) bad("constraints: h length must match H rows");
  if (constraints.hu.size() != constraints.q()) bad("constraints: h_u length must match H_u rows");
  if (!constraints.h.allFinite() || !constraints.hu.allFinite()) bad("constraints: h, h_u must be finite");
  if (!(constraints.alpha > 0.0 && constraints.alpha < 1.0)) bad("constraints: alpha must lie in (0,1)");
  if (constraints.h.size() == constraints.p() && (constraints.h.array() <= 0.0).any())
    bad("constraints: state polytope must contain the origin in its interior (h > 0)");
  if (constraints.hu.size() == constraints.q() && (constraints.hu.array() <= 0.0).any())
    bad("constraints: input polytope must contain the origin in its interior (h_u > 0)");

  if (dist.support.dim() != n) bad("disturbance: support dimension must equal n");
  if (!dist.support.lower.allFinite() || !dist.support.upper.allFinite())
    bad("disturbance: support bounds must be finite");
  if ((dist.support.lower.array() > dist.support.upper.array()).any())
    bad("disturbance: support lower > upper");
  if (const auto* g = std::get_if<TruncatedGaussianGenerator>(&dist.generator)) {
    if (g->mean.size() != n) bad("disturbance: gaussian mean dimension must equal n");
    if (!detail::psd(g->covariance)) bad("disturbance: gaussian covariance must be symmetric PSD");
  }
  if (const auto* g = std::get_if<DiscreteLatticeGenerator>(&dist.generator)) {
    if (g->points.empty()) bad("disturbance: lattice needs at least one point");
    if (g->points.size() != g->probabilities.size())
      bad("disturbance: lattice points/probabilities length mismatch");
    double total = 0.0;
    bool inside = true;
    for (std::size_t idx = 0; idx < g->points.size(); ++idx) {
      total += g->probabilities[idx];
      if (g->points[idx].size() != n || !dist.support.contains(g->points[idx])) inside = false;
    }
    if (!g->points.empty() && std::abs(total - 1.0) > 1e-12)
      bad("disturbance: lattice probabilities must sum to 1 within 1e-12");
    if (!inside) bad("disturbance: every lattice point must lie inside the support");
  }

  if (task.horizon_task < 1) bad("task: T must be positive");
  if (task.horizon_mpc < 1) bad("task: N must be positive");
  if (task.horizon_mpc >= task.horizon_task) bad("task: N < T required");
  if (task.x_start.size() != n) bad("task: x_S dimension must equal n");
  if (!task.x_start.allFinite()) bad("task: x_S must be finite");
  if (task.x_ref.size() != n) bad("task: x_ref dimension must equal n");
  if (!detail::psd(task.q)) bad("task: Q must be symmetric PSD");
  if (!detail::psd(task.q_f)) bad("task: Q_F must be symmetric PSD");
  if (!detail::pd(task.r)) bad("task: R must be symmetric PD");

  return report;
}

/// Offline sampling settings: sample count, optional confidence target for
/// the quantile rank, and the first time index handed to the conservative
/// recursion (0 disables the fast path).
struct OfflineOptions {
  int n_samples = 500;
  std::optional<double> beta_target;
  int conservative_from = 0;
};

/// Experiment-scale settings consumed by the Monte Carlo and ROA drivers.
struct RunOptions {
  int trials = 10;
  int draws = 100;
  int n_hat = 0;  // terminal-set truncation; <= 0 selects the automatic rule
};

/// One fully specified experiment: plant, constraints, disturbance, task
/// plus offline/run settings (mirrors the config file layout).
struct Config {
  LtiSystem system;
  ConstraintSpec constraints;
  DisturbanceModel disturbance;
  TaskSpec task;
  OfflineOptions offline;
  RunOptions run;
};

/// Built-in benchmark setups E1, E2, E3. All share H = [I; -I], W = [-1,1]^2,
/// alpha = 0.1 per row, T = 15, N = 6, Q = Q_F = I, R = 1, x_ref = 0 and
/// K equal to the LQR gain for (A, B, Q, R).
inline Config builtin_example(const std::string& id) {
  Mat a(2, 2), b(2, 1);
  Vec h(4), hu(2);
  Vec x_start = Vec::Zero(2);
  if (id == "E1") {
    a << 1.2, 1.5, 0.0, 1.3;
    b << 0.0, 1.0;
    h = Vec::Constant(4, 20.0);
    hu = Vec::Constant(2, 6.0);
  } else if (id == "E2") {
    a << 1.0, 0.0, 1.0, 1.0;
    b << 1.0, 2.0;
    h = Vec::Constant(4, 20.0);
    hu = Vec::Constant(2, 2.0);
    x_start << -5.0, 19.0;
  } else if (id == "E3") {
    a << 1.6, 1.1, -0.7, 1.2;
    b << 1.0, 1.0;
    h = Vec::Constant(4, 10.0);
    hu = Vec::Constant(2, 10.0);
  } else {
    throw ConfigError("unknown built-in example id '" + id + "' (expected E1, E2 or E3)");
  }

  Config cfg;
  cfg.task.horizon_task = 15;
  cfg.task.horizon_mpc = 6;
  cfg.task.q = Mat::Identity(2, 2);
  cfg.task.q_f = Mat::Identity(2, 2);
  cfg.task.r = Mat::Identity(1, 1);
  cfg.task.x_ref = Vec::Zero(2);
  cfg.task.x_start = x_start;

  cfg.system.a = a;
  cfg.system.b = b;
  cfg.system.k = solve_dare(a, b, cfg.task.q, cfg.task.r).k_lqr;

  Mat h_mat(4, 2);
  h_mat << 1, 0, -1, 0, 0, 1, 0, -1;
  Mat hu_mat(2, 1);
  hu_mat << 1, -1;
  cfg.constraints = ConstraintSpec{h_mat, h, hu_mat, hu, 0.1};

  cfg.disturbance.support = BoxSupport{Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)};
  cfg.disturbance.generator = UniformBoxGenerator{};
  cfg.disturbance.seed = 1;
  return cfg;
}

}  // namespace smpc
