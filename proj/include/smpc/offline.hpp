#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smpc/linalg.hpp"
#include "smpc/model.hpp"

namespace smpc {

/// Sampled trajectories of the propagated disturbance accumulation
/// y_{t+1} = w_{t+1} + A_cl y_t, y_0 = w_0. Raw draws are kept alongside so
/// the recursion can be re-checked after the fact.
struct YSamples {
  int horizon = 0;    // T: y_t stored for t = 0..T-1
  int n_samples = 0;  // N_s
  std::vector<std::vector<Vec>> y;
  std::vector<std::vector<Vec>> w;
};

/// Draws n_samples independent disturbance sequences and propagates them
/// through the closed loop. Deterministic given dist.seed.
inline YSamples draw_y_samples(const DisturbanceModel& dist, const AclPowerCache& cache, int horizon,
                               int n_samples) {
  if (n_samples < 1) throw ConfigError("draw_y_samples: need at least one sample");
  if (horizon < 1) throw ConfigError("draw_y_samples: horizon must be positive");
  DisturbanceSampler sampler(dist, dist.seed);
  YSamples out;
  out.horizon = horizon;
  out.n_samples = n_samples;
  out.y.resize(static_cast<std::size_t>(n_samples));
  out.w.resize(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    auto& ys = out.y[static_cast<std::size_t>(s)];
    auto& ws = out.w[static_cast<std::size_t>(s)];
    ys.reserve(static_cast<std::size_t>(horizon));
    ws.reserve(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) {
      ws.push_back(sampler.draw());
      if (t == 0)
        ys.push_back(ws.back());
      else
        ys.push_back(ws.back() + cache.a_cl() * ys.back());
    }
  }
  return out;
}

/// Builds YSamples from explicitly given disturbance sequences (one sample
/// per sequence). Used for exhaustive-enumeration sample sets where every
/// admissible sequence appears exactly once.
inline YSamples y_samples_from_sequences(const std::vector<std::vector<Vec>>& sequences,
                                         const AclPowerCache& cache) {
  if (sequences.empty() || sequences.front().empty())
    throw ConfigError("y_samples_from_sequences: need at least one nonempty sequence");
  YSamples out;
  out.horizon = static_cast<int>(sequences.front().size());
  out.n_samples = static_cast<int>(sequences.size());
  out.y.resize(sequences.size());
  out.w = sequences;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (static_cast<int>(sequences[s].size()) != out.horizon)
      throw ConfigError("y_samples_from_sequences: ragged sequence lengths");
    auto& ys = out.y[s];
    for (int t = 0; t < out.horizon; ++t) {
      if (t == 0)
        ys.push_back(sequences[s][0]);
      else
        ys.push_back(sequences[s][static_cast<std::size_t>(t)] + cache.a_cl() * ys.back());
    }
  }
  return out;
}

/// ceil with a small downward guard so that values that are mathematically
/// integral but land epsilon above an integer in floating point do not get
/// rounded up one rank too far.
inline int ceil_rank(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }

/// P(Binomial(n, p) <= k), summed in log space.
inline double binomial_cdf(int k, int n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
  double sum = 0.0;
  for (int j = 0; j <= k; ++j) {
    const double lterm = lgn - std::lgamma(static_cast<double>(j) + 1.0) -
                         std::lgamma(static_cast<double>(n - j) + 1.0) + j * lp + (n - j) * lq;
    sum += std::exp(lterm);
  }
  return std::min(sum, 1.0);
}

/// Probability that the rank-th order statistic of n samples fails to
/// upper-bound the true (1-alpha) quantile.
inline double achieved_beta(int n_samples, int rank, double alpha) {
  return 1.0 - binomial_cdf(rank - 1, n_samples, 1.0 - alpha);
}

struct QuantileRank {
  int rank = 0;            // 1-based order-statistic index
  double beta_achieved = 1.0;
};

/// Selects the order-statistic rank for the (1-alpha) quantile bound.
///
/// Without a confidence target this is the conservative empirical quantile
/// rank ceil((1-alpha)(N_s+1)) capped at N_s. With a target beta it is the
/// smallest rank whose order statistic upper-bounds the true quantile with
/// probability at least 1-beta (binomial tail inversion).
inline QuantileRank quantile_rank(int n_samples, double alpha,
                                  std::optional<double> beta_target = std::nullopt) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("quantile_rank: alpha must lie in (0,1)");
  if (n_samples < 1) throw InsufficientSamples("quantile_rank: no samples");
  if (beta_target.has_value()) {
    const double need = 1.0 - *beta_target;
    for (int r = 1; r <= n_samples; ++r) {
      const double conf = binomial_cdf(r - 1, n_samples, 1.0 - alpha);
      if (conf >= need) return QuantileRank{r, 1.0 - conf};
    }
    throw InsufficientSamples("quantile_rank: " + std::to_string(n_samples) +
                              " samples cannot reach confidence 1-beta = " + std::to_string(need) +
                              " at alpha = " + std::to_string(alpha) + "; collect more samples");
  }
  if (n_samples < ceil_rank(1.0 / alpha))
    throw InsufficientSamples("quantile_rank: need at least ceil(1/alpha) = " +
                              std::to_string(ceil_rank(1.0 / alpha)) + " samples for alpha = " +
                              std::to_string(alpha) + ", got " + std::to_string(n_samples) +
                              "; collect more samples");
  const int rank = std::min(n_samples, ceil_rank((1.0 - alpha) * (n_samples + 1)));
  return QuantileRank{rank, achieved_beta(n_samples, rank, alpha)};
}

enum class GammaMethod : int { order_statistic = 0, conservative_recursion = 1, saturated = 2 };

inline const char* to_string(GammaMethod m) {
  switch (m) {
    case GammaMethod::order_statistic: return "order-statistic";
    case GammaMethod::conservative_recursion: return "conservative-recursion";
    case GammaMethod::saturated: return "saturated";
  }
  return "?";
}

inline GammaMethod gamma_method_from_string(const std::string& s) {
  if (s == "order-statistic") return GammaMethod::order_statistic;
  if (s == "conservative-recursion") return GammaMethod::conservative_recursion;
  if (s == "saturated") return GammaMethod::saturated;
  throw ConfigError("unknown gamma method tag '" + s + "'");
}

/// Per-time, per-row quantile bounds gamma_{t,i} on [H]_i y_t, the offline
/// product consumed by the online controller.
struct GammaTable {
  double alpha = 0.1;
  int n_samples = 0;
  int rank = 0;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;  // hash binding the table to its configuration
  int horizon = 0;                // T: rows t = 0..T-1
  int saturation_index = 0;       // t-bar used when clamping out-of-range lookups
  Mat gamma;                      // T x p
  Mat beta;                       // T x p
  std::vector<std::vector<GammaMethod>> method;

  Eigen::Index p() const { return gamma.cols(); }

  /// gamma_{t,i} with lookups past the stored horizon clamped to the
  /// saturated value gamma_{t-bar,i}.
  double value(int t, Eigen::Index i) const {
    if (t < 0) throw std::out_of_range("GammaTable: negative time index");
    if (t < horizon) return gamma(t, i);
    return gamma(saturation_index, i);
  }
};

/// Hash binding a gamma table to the configuration it was computed from
/// (dynamics, gain, state rows, alpha, support, horizon). FNV-1a over the
/// raw double words, so bit-identical inputs match.
inline std::uint64_t config_fingerprint(const LtiSystem& system, const ConstraintSpec& constraints,
                                        const DisturbanceModel& dist, int horizon) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t idx = 0; idx < len; ++idx) {
      h ^= bytes[idx];
      h *= 1099511628211ULL;
    }
  };
  const auto mix_mat = [&](const Mat& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    mix_bytes(dims, sizeof(dims));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        mix_bytes(&v, sizeof(v));
      }
  };
  mix_mat(system.a);
  mix_mat(system.b);
  mix_mat(system.k);
  mix_mat(constraints.h_mat);
  mix_mat(constraints.h);
  const double alpha = constraints.alpha;
  mix_bytes(&alpha, sizeof(alpha));
  mix_mat(dist.support.lower);
  mix_mat(dist.support.upper);
  const std::int64_t t64 = horizon;
  mix_bytes(&t64, sizeof(t64));
  return h;
}

/// Order-statistic gamma: for each (t, i), the rank-th smallest of the
/// N_s sampled values [H]_i y_t. Ties take the sample value itself
/// (inclusive <=), and the bound is attained by a sample by construction.
inline GammaTable compute_gamma(const YSamples& samples, const ConstraintSpec& constraints, int rank,
                                const AclPowerCache& cache, std::uint64_t seed = 0,
                                std::uint64_t fingerprint = 0) {
  if (rank < 1 || rank > samples.n_samples)
    throw ConfigError("compute_gamma: rank must lie in [1, N_s]");
  const int horizon = samples.horizon;
  const Eigen::Index p = constraints.p();
  GammaTable table;
  table.alpha = constraints.alpha;
  table.n_samples = samples.n_samples;
  table.rank = rank;
  table.seed = seed;
  table.fingerprint = fingerprint;
  table.horizon = horizon;
  table.saturation_index = std::min(cache.decay_index(), horizon - 1);
  table.gamma.resize(horizon, p);
  table.beta.resize(horizon, p);
  table.method.assign(static_cast<std::size_t>(horizon),
                      std::vector<GammaMethod>(static_cast<std::size_t>(p), GammaMethod::order_statistic));
  const double beta = achieved_beta(samples.n_samples, rank, constraints.alpha);
  std::vector<double> values(static_cast<std::size_t>(samples.n_samples));
  for (int t = 0; t < horizon; ++t) {
    for (Eigen::Index i = 0; i < p; ++i) {
      const RowVec row = constraints.state_row(i);
      for (int s = 0; s < samples.n_samples; ++s)
        values[static_cast<std::size_t>(s)] = row.dot(samples.y[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)]);
      auto nth = values.begin() + (rank - 1);
      std::nth_element(values.begin(), nth, values.end());
      table.gamma(t, i) = *nth;
      table.beta(t, i) = beta;
    }
  }
  return table;
}

/// Remark-1 fast path: replaces rows t >= from_t with the conservative
/// recursion gamma_{t,i} = gamma_{t-1,i} + max_w [H]_i A_cl^t w. Past the
/// decay index of A_cl the support term is below noise and the value is
/// frozen (tag `saturated`). Confidence is inherited from the seed row.
inline GammaTable conservative_extend(const GammaTable& table, const AclPowerCache& cache,
                                      const ConstraintSpec& constraints, int from_t,
                                      const BoxSupport& box) {
  if (from_t < 1 || from_t > table.horizon)
    throw ConfigError("conservative_extend: from_t must lie in [1, T]");
  GammaTable out = table;
  const Eigen::Index p = constraints.p();
  for (int t = from_t; t < table.horizon; ++t) {
    const bool settled = t > cache.decay_index();
    for (Eigen::Index i = 0; i < p; ++i) {
      if (settled) {
        out.gamma(t, i) = out.gamma(t - 1, i);
        out.method[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = GammaMethod::saturated;
      } else {
        const RowVec c = constraints.state_row(i) * cache.power(t);
        out.gamma(t, i) = out.gamma(t - 1, i) + box_support_max(c, box);
        out.method[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] =
            GammaMethod::conservative_recursion;
      }
      out.beta(t, i) = out.beta(from_t - 1, i);
    }
  }
  return out;
}

/// Gamma table of the fixed-tightening baseline: the one-step order
/// statistic (row 0 of the proposed table, since y_0 = w_0) extended by the
/// conservative recursion for every later step. Sharing row 0 keeps the
/// baseline and the proposed controller comparable on identical samples.
inline GammaTable baseline_gamma_table(const GammaTable& table, const AclPowerCache& cache,
                                       const ConstraintSpec& constraints, const BoxSupport& box) {
  return conservative_extend(table, cache, constraints, 1, box);
}

}  // namespace smpc
