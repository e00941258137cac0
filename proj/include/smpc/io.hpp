#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smpc/model.hpp"
#include "smpc/offline.hpp"
#include "smpc/roa.hpp"
#include "smpc/sim.hpp"

namespace smpc::io {

using nlohmann::json;

inline json to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Vec vec_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + ": expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Mat mat_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(what + ": expected an array of row arrays");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols)
      throw ConfigError(what + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

// ---------------------------------------------------------------------------
// config file
// ---------------------------------------------------------------------------

inline json config_to_json(const Config& cfg) {
  json j;
  j["system"] = {{"A", to_json(cfg.system.a)}, {"B", to_json(cfg.system.b)}, {"K", to_json(cfg.system.k)}};
  j["constraints"] = {{"H", to_json(cfg.constraints.h_mat)},
                      {"h", to_json(cfg.constraints.h)},
                      {"H_u", to_json(cfg.constraints.hu_mat)},
                      {"h_u", to_json(cfg.constraints.hu)},
                      {"alpha_row", cfg.constraints.alpha}};
  json gen;
  if (std::holds_alternative<UniformBoxGenerator>(cfg.disturbance.generator)) {
    gen = {{"type", "uniform-box"}};
  } else if (const auto* g = std::get_if<TruncatedGaussianGenerator>(&cfg.disturbance.generator)) {
    gen = {{"type", "truncated-gaussian"}, {"mean", to_json(g->mean)}, {"covariance", to_json(g->covariance)}};
  } else {
    const auto& lat = std::get<DiscreteLatticeGenerator>(cfg.disturbance.generator);
    json pts = json::array();
    for (const Vec& ptv : lat.points) pts.push_back(to_json(ptv));
    gen = {{"type", "discrete-lattice"}, {"points", pts}, {"probabilities", lat.probabilities}};
  }
  j["disturbance"] = {{"support",
                       {{"lower", to_json(cfg.disturbance.support.lower)},
                        {"upper", to_json(cfg.disturbance.support.upper)}}},
                      {"generator", gen},
                      {"seed", cfg.disturbance.seed}};
  j["task"] = {{"T", cfg.task.horizon_task}, {"N", cfg.task.horizon_mpc},
               {"x_S", to_json(cfg.task.x_start)}, {"Q", to_json(cfg.task.q)},
               {"Q_F", to_json(cfg.task.q_f)},     {"R", to_json(cfg.task.r)},
               {"x_ref", to_json(cfg.task.x_ref)}};
  j["offline"] = {{"samples", cfg.offline.n_samples}};
  if (cfg.offline.beta_target) j["offline"]["beta_target"] = *cfg.offline.beta_target;
  if (cfg.offline.conservative_from > 0) j["offline"]["conservative_from"] = cfg.offline.conservative_from;
  j["run"] = {{"trials", cfg.run.trials}, {"draws", cfg.run.draws}, {"n_hat", cfg.run.n_hat}};
  return j;
}

inline Config config_from_json(const json& j) {
  for (const char* key : {"system", "constraints", "disturbance", "task"})
    if (!j.contains(key)) throw ConfigError(std::string("config: missing top-level key '") + key + "'");
  Config cfg;

  const json& jt = j.at("task");
  cfg.task.horizon_task = jt.at("T").get<int>();
  cfg.task.horizon_mpc = jt.at("N").get<int>();
  cfg.task.x_start = vec_from_json(jt.at("x_S"), "task.x_S");
  cfg.task.q = mat_from_json(jt.at("Q"), "task.Q");
  cfg.task.q_f = mat_from_json(jt.at("Q_F"), "task.Q_F");
  cfg.task.r = mat_from_json(jt.at("R"), "task.R");
  cfg.task.x_ref = vec_from_json(jt.at("x_ref"), "task.x_ref");

  const json& js = j.at("system");
  cfg.system.a = mat_from_json(js.at("A"), "system.A");
  cfg.system.b = mat_from_json(js.at("B"), "system.B");
  if (!js.contains("K") || (js.at("K").is_string() && js.at("K").get<std::string>() == "lqr"))
    cfg.system.k = solve_dare(cfg.system.a, cfg.system.b, cfg.task.q, cfg.task.r).k_lqr;
  else
    cfg.system.k = mat_from_json(js.at("K"), "system.K");

  const json& jc = j.at("constraints");
  cfg.constraints.h_mat = mat_from_json(jc.at("H"), "constraints.H");
  cfg.constraints.h = vec_from_json(jc.at("h"), "constraints.h");
  cfg.constraints.hu_mat = mat_from_json(jc.at("H_u"), "constraints.H_u");
  cfg.constraints.hu = vec_from_json(jc.at("h_u"), "constraints.h_u");
  if (jc.contains("alpha_row") == jc.contains("alpha_joint"))
    throw ConfigError("constraints: provide exactly one of alpha_row / alpha_joint");
  if (jc.contains("alpha_row"))
    cfg.constraints.alpha = jc.at("alpha_row").get<double>();
  else
    cfg.constraints.alpha =
        jc.at("alpha_joint").get<double>() / static_cast<double>(cfg.constraints.h_mat.rows());

  const json& jd = j.at("disturbance");
  cfg.disturbance.support.lower = vec_from_json(jd.at("support").at("lower"), "disturbance.support.lower");
  cfg.disturbance.support.upper = vec_from_json(jd.at("support").at("upper"), "disturbance.support.upper");
  cfg.disturbance.seed = jd.value("seed", std::uint64_t{0});
  const json& jg = jd.at("generator");
  const std::string type = jg.at("type").get<std::string>();
  if (type == "uniform-box") {
    cfg.disturbance.generator = UniformBoxGenerator{};
  } else if (type == "truncated-gaussian") {
    TruncatedGaussianGenerator g;
    g.mean = vec_from_json(jg.at("mean"), "generator.mean");
    g.covariance = mat_from_json(jg.at("covariance"), "generator.covariance");
    cfg.disturbance.generator = std::move(g);
  } else if (type == "discrete-lattice") {
    DiscreteLatticeGenerator g;
    for (const auto& ptj : jg.at("points")) g.points.push_back(vec_from_json(ptj, "generator.points"));
    g.probabilities = jg.at("probabilities").get<std::vector<double>>();
    cfg.disturbance.generator = std::move(g);
  } else {
    throw ConfigError("disturbance.generator.type must be uniform-box, truncated-gaussian or discrete-lattice");
  }

  if (j.contains("offline")) {
    const json& jo = j.at("offline");
    cfg.offline.n_samples = jo.value("samples", 500);
    if (jo.contains("beta_target") && !jo.at("beta_target").is_null())
      cfg.offline.beta_target = jo.at("beta_target").get<double>();
    cfg.offline.conservative_from = jo.value("conservative_from", 0);
  }
  if (j.contains("run")) {
    const json& jr = j.at("run");
    cfg.run.trials = jr.value("trials", 10);
    cfg.run.draws = jr.value("draws", 100);
    cfg.run.n_hat = jr.value("n_hat", 0);
  }
  return cfg;
}

inline json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse '" + path.string() + "': " + e.what());
  }
  return j;
}

inline void save_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

inline Config load_config(const std::filesystem::path& path) { return config_from_json(load_json(path)); }

// ---------------------------------------------------------------------------
// gamma table file
// ---------------------------------------------------------------------------

inline json gamma_to_json(const GammaTable& table) {
  json j;
  j["alpha"] = table.alpha;
  j["N_s"] = table.n_samples;
  j["rank"] = table.rank;
  j["seed"] = table.seed;
  j["fingerprint"] = table.fingerprint;
  j["T"] = table.horizon;
  j["p"] = static_cast<int>(table.p());
  j["saturation_index"] = table.saturation_index;
  j["gamma"] = to_json(table.gamma);
  j["beta"] = to_json(table.beta);
  json methods = json::array();
  for (const auto& row : table.method) {
    json mrow = json::array();
    for (GammaMethod m : row) mrow.push_back(to_string(m));
    methods.push_back(std::move(mrow));
  }
  j["method"] = std::move(methods);
  return j;
}

inline GammaTable gamma_from_json(const json& j) {
  GammaTable table;
  table.alpha = j.at("alpha").get<double>();
  table.n_samples = j.at("N_s").get<int>();
  table.rank = j.value("rank", 0);
  table.seed = j.at("seed").get<std::uint64_t>();
  table.fingerprint = j.value("fingerprint", std::uint64_t{0});
  table.horizon = j.at("T").get<int>();
  table.saturation_index = j.value("saturation_index", table.horizon - 1);
  table.gamma = mat_from_json(j.at("gamma"), "gamma");
  table.beta = mat_from_json(j.at("beta"), "beta");
  const int p = j.at("p").get<int>();
  if (table.gamma.rows() != table.horizon || table.gamma.cols() != p)
    throw ConfigError("gamma table: matrix shape does not match T x p header");
  table.method.clear();
  for (const auto& mrow : j.at("method")) {
    std::vector<GammaMethod> row;
    for (const auto& tag : mrow) row.push_back(gamma_method_from_string(tag.get<std::string>()));
    table.method.push_back(std::move(row));
  }
  if (static_cast<int>(table.method.size()) != table.horizon)
    throw ConfigError("gamma table: method tags do not cover T rows");
  return table;
}

inline void write_gamma(const std::filesystem::path& path, const GammaTable& table) {
  save_json(path, gamma_to_json(table));
}

inline GammaTable load_gamma(const std::filesystem::path& path) { return gamma_from_json(load_json(path)); }

// ---------------------------------------------------------------------------
// CSV artifacts
// ---------------------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Rollout log rows: (trial, draw, t, x, u, w, status, solve_ms,
/// violated_rows, dropped_rows, cost_to_date). Row indices are 1-based.
inline void write_rollout_csv(const std::filesystem::path& path,
                              const std::vector<RolloutRecord>& records, int draws_per_trial,
                              Eigen::Index n, Eigen::Index m) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << "trial,draw,t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x_" << (i + 1);
  for (Eigen::Index i = 0; i < m; ++i) out << ",u_" << (i + 1);
  for (Eigen::Index i = 0; i < n; ++i) out << ",w_" << (i + 1);
  out << ",status,solve_ms,violated_rows,dropped_rows,cost_to_date\n";

  for (std::size_t idx = 0; idx < records.size(); ++idx) {
    const RolloutRecord& rec = records[idx];
    const int trial = draws_per_trial > 0 ? static_cast<int>(idx) / draws_per_trial : 0;
    const int draw = draws_per_trial > 0 ? static_cast<int>(idx) % draws_per_trial : 0;
    if (rec.infeasible_at_start) {
      out << trial << "," << draw << ",0";
      for (Eigen::Index i = 0; i < n; ++i) out << "," << fmt_double(rec.x[0](i));
      for (Eigen::Index i = 0; i < n + m; ++i) out << ",";
      out << ",infeasible-at-start,,,,\n";
      continue;
    }
    const int steps = static_cast<int>(rec.u.size());
    for (int t = 0; t <= steps; ++t) {
      out << trial << "," << draw << "," << t;
      for (Eigen::Index i = 0; i < n; ++i) out << "," << fmt_double(rec.x[static_cast<std::size_t>(t)](i));
      if (t < steps) {
        for (Eigen::Index i = 0; i < m; ++i) out << "," << fmt_double(rec.u[static_cast<std::size_t>(t)](i));
        for (Eigen::Index i = 0; i < n; ++i) out << "," << fmt_double(rec.w[static_cast<std::size_t>(t)](i));
      } else {
        for (Eigen::Index i = 0; i < n + m; ++i) out << ",";
      }
      std::string status = t < steps ? rec.step_status[static_cast<std::size_t>(t)]
                                     : std::string(rec.completed ? "final" : "aborted");
      if (rec.online_infeasible && t == steps) status = "infeasible-online";
      out << "," << status;
      if (t < static_cast<int>(rec.solve_ms.size()))
        out << "," << fmt_double(rec.solve_ms[static_cast<std::size_t>(t)]);
      else
        out << ",";
      out << ",";
      bool first = true;
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rec.violation[static_cast<std::size_t>(t)].size()); ++i)
        if (rec.violation[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]) {
          if (!first) out << ";";
          out << (i + 1);
          first = false;
        }
      out << ",";
      if (t < static_cast<int>(rec.dropped.size())) {
        first = true;
        for (const auto& [k, i] : rec.dropped[static_cast<std::size_t>(t)]) {
          if (!first) out << ";";
          out << k << ":" << (i + 1);
          first = false;
        }
      }
      out << ",";
      if (t < static_cast<int>(rec.cost_to_date.size()) || (rec.completed && t == steps)) {
        const std::size_t ci = rec.completed && t == steps ? rec.cost_to_date.size() - 1
                                                           : static_cast<std::size_t>(t);
        out << fmt_double(rec.cost_to_date[ci]);
      }
      out << "\n";
    }
  }
}

inline json summary_to_json(const MonteCarloSummary& s) {
  json j;
  j["controller"] = to_string(s.controller);
  j["trials"] = s.trials;
  j["draws"] = s.draws;
  j["avg_cost"] = s.avg_cost;
  j["best_trial_avg_cost"] = s.best_trial_avg_cost;
  j["trial_avg_cost"] = s.trial_avg_cost;
  j["violation_rate"] = to_json(s.violation_rate);
  j["infeasible_at_start"] = s.infeasible_at_start;
  j["online_infeasible"] = s.online_infeasible;
  j["mean_solve_ms"] = s.mean_solve_ms;
  j["max_solve_ms"] = s.max_solve_ms;
  j["offline_ms_per_trial"] = s.offline_ms_per_trial;
  j["valid"] = s.valid;
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

/// ROA bitmap as one row per grid point: coordinates then feasible in {0,1}.
inline void write_roa_csv(const std::filesystem::path& path, const RoaGrid& grid) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  const Eigen::Index dims = grid.spec.dims();
  for (Eigen::Index d = 0; d < dims; ++d) out << "x" << (d + 1) << ",";
  out << "feasible\n";
  for (long flat = 0; flat < grid.spec.total(); ++flat) {
    const Vec x = grid.spec.point(flat);
    for (Eigen::Index d = 0; d < dims; ++d) out << fmt_double(x(d)) << ",";
    out << static_cast<int>(grid.feasible[static_cast<std::size_t>(flat)]) << "\n";
  }
}

inline json roa_to_json(const RoaGrid& grid, Controller controller) {
  json j;
  j["controller"] = to_string(controller);
  j["feasible_cells"] = grid.feasible_count;
  j["total_cells"] = grid.spec.total();
  j["area"] = grid.area;
  j["cell_volume"] = grid.spec.cell_volume();
  j["numerical_failures"] = grid.numerical_failures;
  j["lo"] = to_json(grid.spec.lo);
  j["hi"] = to_json(grid.spec.hi);
  j["points"] = grid.spec.points;
  return j;
}

}  // namespace smpc::io
