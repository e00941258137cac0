#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "smpc/adaptive.hpp"
#include "smpc/linalg.hpp"
#include "smpc/log.hpp"
#include "smpc/model.hpp"
#include "smpc/mpc.hpp"
#include "smpc/offline.hpp"
#include "smpc/rng.hpp"
#include "smpc/threading.hpp"

namespace smpc {

enum class Controller : int { proposed = 0, baseline_rr = 1 };

inline const char* to_string(Controller c) {
  return c == Controller::proposed ? "proposed" : "baseline-RR";
}

inline Controller controller_from_string(const std::string& s) {
  if (s == "proposed") return Controller::proposed;
  if (s == "baseline-rr" || s == "baseline-RR") return Controller::baseline_rr;
  throw ConfigError("unknown controller '" + s + "' (expected proposed or baseline-rr)");
}

/// Seed-stream tags: offline sampling and online plant disturbances must
/// never share draws.
inline constexpr std::uint64_t kOfflineStreamTag = 0x0ff11e5eedULL;
inline constexpr std::uint64_t kPlantStreamTag = 0x9a4e701a47ULL;

inline std::uint64_t offline_seed(std::uint64_t base, int trial) {
  return derive_seed(base, kOfflineStreamTag, static_cast<std::uint64_t>(trial));
}

inline std::uint64_t plant_seed(std::uint64_t base, int trial, int draw) {
  const std::uint64_t index =
      (static_cast<std::uint64_t>(trial) << 32) | static_cast<std::uint64_t>(draw);
  return derive_seed(base, kPlantStreamTag, index);
}

/// Plan + terminal set + assembled QP for one solve instant.
struct ProblemBundle {
  QpProblem problem;
  TighteningPlan plan;
  TerminalSet terminal;
};

/// Wires one controller flavor to a configuration and gamma table and
/// builds the per-step MPC problems. Stateless across calls; one instance
/// can serve many rollouts of the same controller.
class ControllerEngine {
public:
  ControllerEngine(const Config& cfg, GammaTable table, Controller kind)
      : cfg_(cfg),
        kind_(kind),
        table_(std::move(table)),
        cache_(cfg.system.a_cl(), cfg.task.horizon_task + cfg.task.horizon_mpc + 2),
        lqr_(solve_dare(cfg.system.a, cfg.system.b, cfg.task.q, cfg.task.r)) {
    const std::uint64_t fp =
        config_fingerprint(cfg.system, cfg.constraints, cfg.disturbance, cfg.task.horizon_task);
    if (table_.fingerprint != 0 && table_.fingerprint != fp)
      throw ConfigError("gamma table does not match the configuration (fingerprint mismatch)");
    if (kind_ == Controller::baseline_rr)
      baseline_table_ =
          baseline_gamma_table(table_, cache_, cfg_.constraints, cfg_.disturbance.support);
  }

  const Config& config() const { return cfg_; }
  Controller kind() const { return kind_; }
  const AclPowerCache& cache() const { return cache_; }
  const LqrSolution& lqr() const { return lqr_; }
  const GammaTable& table() const { return table_; }
  const GammaTable& baseline_table() const { return baseline_table_; }

  ProblemBundle build(int t, const Vec& x, const OnlineContext& ctx) const {
    const int n_mpc = cfg_.task.horizon_mpc;
    ProblemBundle bundle;
    if (kind_ == Controller::proposed) {
      bundle.plan = build_adaptive_plan(ctx, table_, cfg_.constraints, cfg_.system, cache_,
                                        cfg_.disturbance.support, n_mpc);
      bundle.terminal = terminal_set(ctx, table_, cfg_.constraints, cache_, n_mpc,
                                     cfg_.task.horizon_task, cfg_.run.n_hat,
                                     cfg_.disturbance.support);
    } else {
      const Vec gamma_one = table_.gamma.row(0).transpose();
      bundle.plan = build_baseline_plan(gamma_one, cfg_.constraints, cfg_.system, cache_,
                                        cfg_.disturbance.support, t, n_mpc);
      // fixed terminal set: the t = 0 form, independent of realized history
      OnlineContext empty_ctx(cfg_.system.n());
      bundle.terminal = terminal_set(empty_ctx, baseline_table_, cfg_.constraints, cache_, n_mpc,
                                     cfg_.task.horizon_task, cfg_.run.n_hat,
                                     cfg_.disturbance.support);
    }
    bundle.problem = assemble(x, bundle.plan, bundle.terminal, cfg_.task, cfg_.system,
                              cfg_.constraints, cache_, lqr_.p);
    return bundle;
  }

private:
  Config cfg_;
  Controller kind_;
  GammaTable table_;
  GammaTable baseline_table_;
  AclPowerCache cache_;
  LqrSolution lqr_;
};

/// One closed-loop trajectory with everything needed for audits and logs.
struct RolloutRecord {
  Controller controller = Controller::proposed;
  int horizon_task = 0;
  std::vector<Vec> x;                   // 0..T
  std::vector<Vec> u;                   // 0..T-1
  std::vector<Vec> w;                   // 0..T-1, recovered from the plant update
  std::vector<std::string> step_status; // per t = 0..T-1: solved | tail
  std::vector<double> solve_ms;         // per solve step t = 0..T-N
  std::vector<double> objective;        // per solve step
  std::vector<double> candidate_objective;  // per solve step (NaN at t = 0)
  std::vector<std::vector<std::pair<int, Eigen::Index>>> dropped;  // per solve step
  std::vector<std::vector<bool>> violation;  // [t][i], t = 0..T
  std::vector<double> cost_to_date;          // cumulative cost through stage t (t = T adds terminal)
  double cost = std::numeric_limits<double>::quiet_NaN();
  bool completed = false;
  bool infeasible_at_start = false;
  bool online_infeasible = false;  // baseline only; the proposed controller throws instead
  int online_infeasible_t = -1;
  double max_audit_violation = -std::numeric_limits<double>::infinity();
};

inline double stage_cost(const TaskSpec& task, const Vec& x, const Vec& u) {
  const Vec e = x - task.x_ref;
  return e.dot(task.q * e) + u.dot(task.r * u);
}

inline double terminal_stage_cost(const TaskSpec& task, const Vec& x) {
  const Vec e = x - task.x_ref;
  return e.dot(task.q_f * e);
}

/// Runs Algorithm-1 style closed loop: fresh MPC solves for t = 0..T-N,
/// then the stored policy tail. The proposed controller additionally checks
/// the shifted candidate against every next problem and escalates any
/// violation, since online infeasibility would contradict the recursive
/// feasibility guarantee.
inline RolloutRecord rollout(const ControllerEngine& engine, std::uint64_t seed) {
  const Config& cfg = engine.config();
  const int horizon_task = cfg.task.horizon_task;
  const int horizon_mpc = cfg.task.horizon_mpc;
  const Eigen::Index m = cfg.system.m();
  const Mat a_cl = cfg.system.a_cl();

  DisturbanceSampler sampler(cfg.disturbance, seed);
  OnlineContext ctx(cfg.system.n());

  RolloutRecord rec;
  rec.controller = engine.kind();
  rec.horizon_task = horizon_task;
  Vec x = cfg.task.x_start;
  rec.x.push_back(x);

  const auto violation_flags = [&](const Vec& state) {
    std::vector<bool> flags(static_cast<std::size_t>(cfg.constraints.p()));
    for (Eigen::Index i = 0; i < cfg.constraints.p(); ++i)
      flags[static_cast<std::size_t>(i)] = cfg.constraints.state_row(i).dot(state) > cfg.constraints.h(i);
    return flags;
  };
  rec.violation.push_back(violation_flags(x));

  ProblemBundle bundle = engine.build(0, x, ctx);
  MpcSolution last_sol;
  int last_solve_t = 0;
  double cost = 0.0;

  for (int t = 0; t < horizon_task; ++t) {
    Vec u;
    if (t <= horizon_task - horizon_mpc) {
      MpcSolution sol = solve(bundle.problem);
      if (sol.status == SolveStatus::numerical_failure)
        throw SolverFailure("QP solver failed numerically at t=" + std::to_string(t));
      if (sol.status == SolveStatus::infeasible) {
        if (t == 0) {
          rec.infeasible_at_start = true;
          return rec;
        }
        if (engine.kind() == Controller::proposed)
          throw FeasibilityBreach(
              "MPC infeasible at t=" + std::to_string(t) +
              " under the proposed controller although the shifted candidate passed (max audit "
              "violation " +
              std::to_string(rec.max_audit_violation) + ")");
        rec.online_infeasible = true;
        rec.online_infeasible_t = t;
        return rec;
      }
      rec.solve_ms.push_back(sol.solve_ms);
      rec.objective.push_back(sol.objective);
      rec.dropped.push_back(bundle.plan.dropped_rows());
      if (t == 0) rec.candidate_objective.push_back(std::numeric_limits<double>::quiet_NaN());
      last_sol = std::move(sol);
      last_solve_t = t;
      u = last_sol.u_applied;
      rec.step_status.emplace_back("solved");
    } else {
      const int offset = t - last_solve_t;
      u = cfg.system.k * x + last_sol.v.segment(static_cast<Eigen::Index>(offset) * m, m);
      rec.step_status.emplace_back("tail");
    }

    const Vec w_true = sampler.draw();
    const Vec drift = cfg.system.a * x + cfg.system.b * u;
    const Vec x_next = drift + w_true;
    const Vec w_recovered = x_next - drift;

    rec.u.push_back(u);
    rec.w.push_back(w_recovered);
    rec.x.push_back(x_next);
    rec.violation.push_back(violation_flags(x_next));
    cost += stage_cost(cfg.task, x, u);
    rec.cost_to_date.push_back(cost);

    ctx.push(a_cl, w_recovered);
    x = x_next;

    if (t < horizon_task - horizon_mpc) {
      ProblemBundle next_bundle = engine.build(t + 1, x, ctx);
      if (engine.kind() == Controller::proposed) {
        const Vec candidate = shifted_candidate(last_sol, m);
        const AuditResult audit = audit_candidate(next_bundle.problem, candidate);
        rec.max_audit_violation = std::max(rec.max_audit_violation, audit.max_violation);
        rec.candidate_objective.push_back(audit.candidate_objective);
        if (!audit.feasible) throw FeasibilityBreach(format_audit_dump(audit, t + 1));
      }
      bundle = std::move(next_bundle);
    }
  }

  cost += terminal_stage_cost(cfg.task, x);
  rec.cost_to_date.push_back(cost);
  rec.cost = cost;
  rec.completed = true;
  return rec;
}

inline RolloutRecord rollout(const Config& cfg, const GammaTable& table, Controller controller,
                             std::uint64_t seed) {
  const ControllerEngine engine(cfg, table, controller);
  return rollout(engine, seed);
}

/// Empirical violation rate per (t, i): fraction of records whose state
/// strictly violates row i at time t. Records must share the task horizon.
inline Mat violation_stats(const std::vector<RolloutRecord>& records,
                           const ConstraintSpec& constraints) {
  if (records.empty()) throw ConfigError("violation_stats: empty record list");
  const int horizon_task = records.front().horizon_task;
  const Eigen::Index p = constraints.p();
  Mat rate = Mat::Zero(horizon_task + 1, p);
  int counted = 0;
  for (const auto& rec : records) {
    if (!rec.completed) continue;
    if (rec.horizon_task != horizon_task)
      throw ConfigError("violation_stats: records have mixed task horizons");
    ++counted;
    for (int t = 0; t <= horizon_task; ++t)
      for (Eigen::Index i = 0; i < p; ++i)
        if (rec.violation[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]) rate(t, i) += 1.0;
  }
  if (counted > 0) rate /= static_cast<double>(counted);
  return rate;
}

struct MonteCarloSummary {
  Controller controller = Controller::proposed;
  int trials = 0;
  int draws = 0;
  double avg_cost = std::numeric_limits<double>::quiet_NaN();
  double best_trial_avg_cost = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> trial_avg_cost;
  Mat violation_rate;  // (T+1) x p over completed draws
  int infeasible_at_start = 0;
  int online_infeasible = 0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double offline_ms_per_trial = 0.0;
  bool valid = true;
  std::string error;
};

struct MonteCarloResult {
  MonteCarloSummary summary;
  std::vector<RolloutRecord> records;  // ordered by (trial, draw)
};

/// Builds the per-trial gamma table from config.offline settings.
inline GammaTable offline_table_for_trial(const Config& cfg, const AclPowerCache& cache,
                                          std::uint64_t base_seed, int trial) {
  DisturbanceModel dist = cfg.disturbance;
  dist.seed = offline_seed(base_seed, trial);
  const YSamples samples =
      draw_y_samples(dist, cache, cfg.task.horizon_task, cfg.offline.n_samples);
  const QuantileRank qr =
      quantile_rank(cfg.offline.n_samples, cfg.constraints.alpha, cfg.offline.beta_target);
  GammaTable table = compute_gamma(
      samples, cfg.constraints, qr.rank, cache, dist.seed,
      config_fingerprint(cfg.system, cfg.constraints, cfg.disturbance, cfg.task.horizon_task));
  if (cfg.offline.conservative_from >= 1 && cfg.offline.conservative_from < cfg.task.horizon_task)
    table = conservative_extend(table, cache, cfg.constraints, cfg.offline.conservative_from,
                                cfg.disturbance.support);
  return table;
}

/// Monte Carlo study: each trial regenerates the gamma table from fresh
/// offline samples, then runs `draws` independent rollouts. Offline and
/// plant randomness use separate streams derived from base_seed, so the
/// whole result is a deterministic function of (config, base_seed).
inline MonteCarloResult monte_carlo(const Config& cfg, Controller controller, int trials, int draws,
                                    std::uint64_t base_seed, int threads = 1) {
  if (trials < 1 || draws < 1) throw ConfigError("monte_carlo: trials and draws must be >= 1");
  MonteCarloResult result;
  auto& summary = result.summary;
  summary.controller = controller;
  summary.trials = trials;
  summary.draws = draws;

  AclPowerCache cache(cfg.system.a_cl(), cfg.task.horizon_task + cfg.task.horizon_mpc + 2);

  std::vector<ControllerEngine> engines;
  engines.reserve(static_cast<std::size_t>(trials));
  double offline_ms = 0.0;
  for (int r = 0; r < trials; ++r) {
    const auto start = std::chrono::steady_clock::now();
    GammaTable table = offline_table_for_trial(cfg, cache, base_seed, r);
    offline_ms +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    engines.emplace_back(cfg, std::move(table), controller);
  }
  summary.offline_ms_per_trial = offline_ms / trials;

  const std::size_t total = static_cast<std::size_t>(trials) * static_cast<std::size_t>(draws);
  result.records.resize(total);
  try {
    parallel_for(total, threads, [&](std::size_t idx) {
      const int r = static_cast<int>(idx) / draws;
      const int d = static_cast<int>(idx) % draws;
      result.records[idx] = rollout(engines[static_cast<std::size_t>(r)], plant_seed(base_seed, r, d));
    });
  } catch (const FeasibilityBreach& e) {
    summary.valid = false;
    summary.error = e.what();
    summary.online_infeasible += 1;
    return result;
  }

  summary.trial_avg_cost.assign(static_cast<std::size_t>(trials), 0.0);
  std::vector<int> trial_completed(static_cast<std::size_t>(trials), 0);
  double ms_sum = 0.0;
  long ms_count = 0;
  for (int r = 0; r < trials; ++r) {
    for (int d = 0; d < draws; ++d) {
      const RolloutRecord& rec = result.records[static_cast<std::size_t>(r) * draws + d];
      if (rec.infeasible_at_start) summary.infeasible_at_start += 1;
      if (rec.online_infeasible) summary.online_infeasible += 1;
      if (rec.completed) {
        summary.trial_avg_cost[static_cast<std::size_t>(r)] += rec.cost;
        trial_completed[static_cast<std::size_t>(r)] += 1;
      }
      for (double ms : rec.solve_ms) {
        ms_sum += ms;
        ++ms_count;
        summary.max_solve_ms = std::max(summary.max_solve_ms, ms);
      }
    }
  }
  summary.mean_solve_ms = ms_count > 0 ? ms_sum / static_cast<double>(ms_count) : 0.0;

  double avg_sum = 0.0;
  int avg_trials = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < trials; ++r) {
    if (trial_completed[static_cast<std::size_t>(r)] == 0) {
      summary.trial_avg_cost[static_cast<std::size_t>(r)] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    summary.trial_avg_cost[static_cast<std::size_t>(r)] /= trial_completed[static_cast<std::size_t>(r)];
    avg_sum += summary.trial_avg_cost[static_cast<std::size_t>(r)];
    best = std::min(best, summary.trial_avg_cost[static_cast<std::size_t>(r)]);
    ++avg_trials;
  }
  if (avg_trials > 0) {
    summary.avg_cost = avg_sum / avg_trials;
    summary.best_trial_avg_cost = best;
  }
  summary.violation_rate = violation_stats(result.records, cfg.constraints);
  return result;
}

}  // namespace smpc
