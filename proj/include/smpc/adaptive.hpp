#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "smpc/linalg.hpp"
#include "smpc/model.hpp"
#include "smpc/offline.hpp"

namespace smpc {

/// Realized disturbance history carried between MPC solves. Keeps the
/// closed-loop accumulator s_{t-1} = sum_{l<t} A_cl^{t-1-l} w(l) so that
/// b_{0,i}^{t-1,k} = [H]_i A_cl^{k-t+1} s_{t-1} is O(1) per query.
class OnlineContext {
public:
  explicit OnlineContext(Eigen::Index n) : accum_(Vec::Zero(n)) {}

  int t() const { return t_; }
  const std::vector<Vec>& history() const { return w_hist_; }
  const Vec& accumulated() const { return accum_; }

  void push(const Mat& a_cl, const Vec& w) {
    accum_ = a_cl * accum_ + w;
    w_hist_.push_back(w);
    ++t_;
  }

private:
  int t_ = 0;
  std::vector<Vec> w_hist_;
  Vec accum_;
};

/// b_{0,i}^{t-1,k}: accumulation of realized disturbances weighted for
/// prediction step k. Zero when no history exists.
inline double compute_b(const OnlineContext& ctx, const RowVec& h_row, const AclPowerCache& cache,
                        int k) {
  const int t = ctx.t();
  if (k < t - 1) throw ConfigError("compute_b: k must be >= t-1");
  if (t == 0) return 0.0;
  return h_row.dot(cache.power(k - t + 1) * ctx.accumulated());
}

/// Reference implementation of b as the explicit sum over the stored
/// history; compute_b must match it to 1e-10.
inline double compute_b_direct(const OnlineContext& ctx, const RowVec& h_row,
                               const AclPowerCache& cache, int k) {
  double b = 0.0;
  for (int l = 0; l < ctx.t(); ++l)
    b += h_row.dot(cache.power(k - l) * ctx.history()[static_cast<std::size_t>(l)]);
  return b;
}

enum class RowStatus : int { full_robust = 0, adaptive = 1, dropped = 2 };

inline const char* to_string(RowStatus s) {
  switch (s) {
    case RowStatus::full_robust: return "full-robust";
    case RowStatus::adaptive: return "adaptive";
    case RowStatus::dropped: return "dropped";
  }
  return "?";
}

/// One state-constraint row of the tightening plan, with the quantities
/// that selected its case (kept for audit dumps).
struct PlanEntry {
  RowStatus status = RowStatus::full_robust;
  double bound = 0.0;  // value subtracted from h_i; meaningless when dropped
  double gamma = 0.0;
  double b = 0.0;
  double window_max = 0.0;  // M_{t,i}^k
  double window_min = 0.0;  // m_{t,i}^k
};

/// Three-case realization-adaptive selection: benign history keeps the
/// full robust margin M, extreme history drops the row (the alpha budget
/// absorbs it), anything between tightens by gamma - b.
inline PlanEntry adaptive_state_bound(double gamma_ki, double b, double window_max,
                                      double window_min) {
  if (window_min > window_max) throw ConfigError("adaptive_state_bound: requires m <= M");
  PlanEntry e;
  e.gamma = gamma_ki;
  e.b = b;
  e.window_max = window_max;
  e.window_min = window_min;
  if (b <= gamma_ki - window_max) {
    e.status = RowStatus::full_robust;
    e.bound = window_max;
  } else if (b > gamma_ki - window_min) {
    e.status = RowStatus::dropped;
    e.bound = 0.0;
  } else {
    e.status = RowStatus::adaptive;
    e.bound = gamma_ki - b;
  }
  return e;
}

/// Robust tightening of the hard input constraints for prediction step k
/// solved at time t (zero for k = t: the first input sees no disturbance).
inline Vec input_tightening(const ConstraintSpec& constraints, const LtiSystem& system,
                            const AclPowerCache& cache, const BoxSupport& box, int t, int k) {
  if (k < t) throw ConfigError("input_tightening: k must be >= t");
  const Eigen::Index q = constraints.q();
  Vec out = Vec::Zero(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const RowVec c = constraints.input_row(j) * system.k;
    out(j) = accumulated_support(c, cache, k - t, box).max;
  }
  return out;
}

/// Fixed-tightening baseline bound for the state row at prediction step
/// k+1: one-step quantile gamma1 for the newest disturbance plus full
/// robustness over the k-t earlier ones. Independent of realized history.
inline Vec baseline_tightening(const Vec& gamma_one_step, const ConstraintSpec& constraints,
                               const AclPowerCache& cache, const BoxSupport& box, int t, int k) {
  if (k < t) throw ConfigError("baseline_tightening: k must be >= t");
  const Eigen::Index p = constraints.p();
  Vec out = gamma_one_step;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (int j = 1; j <= k - t; ++j) {
      const RowVec c = constraints.state_row(i) * cache.power(j);
      out(i) += box_support_max(c, box);
    }
  }
  return out;
}

/// Per-step, per-row tightening quantities for one MPC solve at time t.
/// state[k-t][i] covers the constraint on x_{k+1|t}; input[k-t] holds the
/// robust input tightening for step k.
struct TighteningPlan {
  int t = 0;
  int horizon = 0;  // N
  std::vector<std::vector<PlanEntry>> state;
  std::vector<Vec> input;

  std::vector<std::pair<int, Eigen::Index>> dropped_rows() const {
    std::vector<std::pair<int, Eigen::Index>> out;
    for (std::size_t j = 0; j < state.size(); ++j)
      for (std::size_t i = 0; i < state[j].size(); ++i)
        if (state[j][i].status == RowStatus::dropped)
          out.emplace_back(t + static_cast<int>(j), static_cast<Eigen::Index>(i));
    return out;
  }
};

/// Realization-adaptive plan of the proposed controller.
inline TighteningPlan build_adaptive_plan(const OnlineContext& ctx, const GammaTable& table,
                                          const ConstraintSpec& constraints, const LtiSystem& system,
                                          const AclPowerCache& cache, const BoxSupport& box, int horizon) {
  TighteningPlan plan;
  plan.t = ctx.t();
  plan.horizon = horizon;
  plan.state.resize(static_cast<std::size_t>(horizon));
  plan.input.resize(static_cast<std::size_t>(horizon));
  const Eigen::Index p = constraints.p();
  for (int j = 0; j < horizon; ++j) {
    const int k = plan.t + j;
    auto& entries = plan.state[static_cast<std::size_t>(j)];
    entries.resize(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
      const RowVec h_row = constraints.state_row(i);
      const WindowBounds wb = accumulated_support(h_row, cache, j + 1, box);
      const double b = compute_b(ctx, h_row, cache, k);
      entries[static_cast<std::size_t>(i)] = adaptive_state_bound(table.value(k, i), b, wb.max, wb.min);
    }
    plan.input[static_cast<std::size_t>(j)] = input_tightening(constraints, system, cache, box, plan.t, k);
  }
  return plan;
}

/// History-independent plan of the baseline controller. Entries carry the
/// fixed bound; none are ever dropped.
inline TighteningPlan build_baseline_plan(const Vec& gamma_one_step, const ConstraintSpec& constraints,
                                          const LtiSystem& system, const AclPowerCache& cache,
                                          const BoxSupport& box, int t, int horizon) {
  TighteningPlan plan;
  plan.t = t;
  plan.horizon = horizon;
  plan.state.resize(static_cast<std::size_t>(horizon));
  plan.input.resize(static_cast<std::size_t>(horizon));
  const Eigen::Index p = constraints.p();
  for (int j = 0; j < horizon; ++j) {
    const int k = t + j;
    const Vec bounds = baseline_tightening(gamma_one_step, constraints, cache, box, t, k);
    auto& entries = plan.state[static_cast<std::size_t>(j)];
    entries.resize(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
      PlanEntry e;
      e.status = RowStatus::adaptive;
      e.bound = bounds(i);
      const WindowBounds wb = accumulated_support(constraints.state_row(i), cache, j + 1, box);
      e.window_max = wb.max;
      e.window_min = wb.min;
      e.gamma = bounds(i);
      e.b = 0.0;
      entries[static_cast<std::size_t>(i)] = e;
    }
    plan.input[static_cast<std::size_t>(j)] = input_tightening(constraints, system, cache, box, t, k);
  }
  return plan;
}

/// One half-space [normal] x <= offset of the terminal set, remembering the
/// (l, i) pair that generated it.
struct TerminalRow {
  RowVec normal;
  double offset = 0.0;
  int l = 0;
  Eigen::Index i = 0;
};

/// Time-varying terminal polytope for the nominal horizon-end state.
struct TerminalSet {
  std::vector<TerminalRow> rows;
  int l_count = 0;

  bool empty() const { return rows.empty(); }

  double max_residual(const Vec& x) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& row : rows) worst = std::max(worst, row.normal.dot(x) - row.offset);
    return rows.empty() ? 0.0 : worst;
  }

  bool contains(const Vec& x, double tol = 0.0) const { return max_residual(x) <= tol; }
};

namespace detail {

/// Axis-aligned bounds implied by the rows of {x : Hx <= h} that are
/// (scaled) signed unit vectors; nullopt when some coordinate is unbounded.
inline std::optional<BoxSupport> axis_bounds(const ConstraintSpec& constraints) {
  const Eigen::Index n = constraints.h_mat.cols();
  Vec lo = Vec::Constant(n, -std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(n, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < constraints.p(); ++i) {
    const RowVec row = constraints.state_row(i);
    Eigen::Index nz = -1;
    bool single = true;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (row(c) != 0.0) {
        if (nz >= 0) {
          single = false;
          break;
        }
        nz = c;
      }
    }
    if (!single || nz < 0) continue;
    const double bound = constraints.h(i) / row(nz);
    if (row(nz) > 0.0)
      hi(nz) = std::min(hi(nz), bound);
    else
      lo(nz) = std::max(lo(nz), bound);
  }
  if (!lo.allFinite() || !hi.allFinite() || (lo.array() > hi.array()).any()) return std::nullopt;
  return BoxSupport{lo, hi};
}

/// Box guaranteed to contain every nominal horizon-end state the QP can
/// produce: the state box inflated by the largest possible constraint
/// relaxation (the saturated accumulated-support magnitude per row).
inline std::optional<BoxSupport> terminal_probe_box(const ConstraintSpec& constraints,
                                                    const AclPowerCache& cache, const BoxSupport& box) {
  auto bounds = axis_bounds(constraints);
  if (!bounds) return std::nullopt;
  const int window = std::min(cache.decay_index(), cache.t_max());
  double inflate = 0.0;
  for (Eigen::Index i = 0; i < constraints.p(); ++i) {
    const WindowBounds wb = accumulated_support(constraints.state_row(i), cache, window, box);
    inflate = std::max(inflate, std::max(std::abs(wb.max), std::abs(wb.min)));
  }
  bounds->lower.array() -= inflate;
  bounds->upper.array() += inflate;
  return bounds;
}

}  // namespace detail

/// Terminal set X_F^t: rows [H]_i A_cl^{l+1} x <= h_i - gamma_{N+t+l,i} +
/// (realized-history term), for l = 0..min(n_hat, T-N-t)-1. At t = T-N the
/// l-range is empty and the set imposes nothing (last MPC solve).
///
/// n_hat <= 0 requests the automatic truncation: generation stops at the
/// first l (capped at 50) whose rows are all redundant over a box known to
/// contain the reachable nominal terminal states, and falls back to the
/// exact range T-N-t when no such l exists or no bounding box is available.
inline TerminalSet terminal_set(const OnlineContext& ctx, const GammaTable& table,
                                const ConstraintSpec& constraints, const AclPowerCache& cache,
                                int horizon_mpc, int horizon_task, int n_hat,
                                const BoxSupport& disturbance_box) {
  const int t = ctx.t();
  if (t + horizon_mpc > horizon_task) throw ConfigError("terminal_set: t + N must not exceed T");
  const int l_exact = horizon_task - horizon_mpc - t;

  static constexpr int kAutoCap = 50;
  const bool auto_mode = n_hat <= 0;
  const int l_limit = auto_mode ? l_exact : std::min(n_hat, l_exact);
  std::optional<BoxSupport> probe;
  if (auto_mode && l_exact > kAutoCap)
    probe = detail::terminal_probe_box(constraints, cache, disturbance_box);

  TerminalSet set;
  const Eigen::Index p = constraints.p();
  for (int l = 0; l < l_limit; ++l) {
    std::vector<TerminalRow> generated;
    generated.reserve(static_cast<std::size_t>(p));
    bool all_redundant = probe.has_value() && l >= 1;
    for (Eigen::Index i = 0; i < p; ++i) {
      const RowVec h_row = constraints.state_row(i);
      TerminalRow row;
      row.normal = h_row * cache.power(l + 1);
      row.offset = constraints.h(i) - table.value(horizon_mpc + t + l, i) +
                   compute_b(ctx, h_row, cache, horizon_mpc + t + l);
      row.l = l;
      row.i = i;
      if (all_redundant && box_support_max(row.normal, *probe) > row.offset + 1e-9)
        all_redundant = false;
      generated.push_back(std::move(row));
    }
    if (auto_mode && all_redundant && l <= kAutoCap) break;  // rows from here on are implied
    for (auto& row : generated) set.rows.push_back(std::move(row));
    set.l_count = l + 1;
  }
  return set;
}

}  // namespace smpc
