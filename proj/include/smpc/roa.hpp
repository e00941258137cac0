#pragma once

#include <cstdint>
#include <vector>

#include "smpc/adaptive.hpp"
#include "smpc/sim.hpp"
#include "smpc/threading.hpp"

namespace smpc {

/// Rectangular probing grid: per-dimension endpoints and point counts
/// (points include both endpoints, spacing (hi-lo)/(points-1)).
struct RoaGridSpec {
  Vec lo;
  Vec hi;
  std::vector<int> points;

  Eigen::Index dims() const { return lo.size(); }

  long total() const {
    long total = 1;
    for (int c : points) total *= c;
    return total;
  }

  double step(Eigen::Index d) const {
    const int c = points[static_cast<std::size_t>(d)];
    return c > 1 ? (hi(d) - lo(d)) / (c - 1) : 0.0;
  }

  double cell_volume() const {
    double v = 1.0;
    for (Eigen::Index d = 0; d < dims(); ++d) v *= (points[static_cast<std::size_t>(d)] > 1 ? step(d) : 1.0);
    return v;
  }

  Vec point(long flat) const {
    Vec x(dims());
    for (Eigen::Index d = dims() - 1; d >= 0; --d) {
      const int c = points[static_cast<std::size_t>(d)];
      x(d) = lo(d) + step(d) * static_cast<double>(flat % c);
      flat /= c;
    }
    return x;
  }
};

/// Feasibility bitmap of the t = 0 MPC problem over a grid, with the area
/// estimate feasible-count x cell volume.
struct RoaGrid {
  RoaGridSpec spec;
  std::vector<std::uint8_t> feasible;
  long feasible_count = 0;
  double area = 0.0;
  int numerical_failures = 0;
};

/// Default grid: the axis-aligned state box scaled about the origin
/// (resolution points per dimension). Requires the state polytope to bound
/// every coordinate; grids in n > 3 are rejected as impractical.
inline RoaGridSpec default_roa_grid(const Config& cfg, int resolution = 81, double scale = 1.2) {
  const auto bounds = detail::axis_bounds(cfg.constraints);
  if (!bounds)
    throw ConfigError("default_roa_grid: state polytope does not bound every coordinate; "
                      "specify the grid explicitly");
  if (cfg.system.n() > 3)
    throw ConfigError("default_roa_grid: grid probing is limited to n <= 3");
  RoaGridSpec spec;
  spec.lo = scale * bounds->lower;
  spec.hi = scale * bounds->upper;
  spec.points.assign(static_cast<std::size_t>(cfg.system.n()), resolution);
  return spec;
}

/// Marks each grid point feasible iff the t = 0 problem (empty history)
/// solved from it is optimal. Infeasible points are data, not errors;
/// numerical failures are counted separately.
inline RoaGrid estimate_roa(const Config& cfg, const GammaTable& table, Controller controller,
                            const RoaGridSpec& spec, int threads = 1) {
  const ControllerEngine engine(cfg, table, controller);
  const long total = spec.total();
  RoaGrid grid;
  grid.spec = spec;
  grid.feasible.assign(static_cast<std::size_t>(total), 0);
  std::vector<std::uint8_t> failures(static_cast<std::size_t>(total), 0);

  // the t = 0 plan and terminal set are state-independent; only the QP
  // right-hand sides change across grid points
  const OnlineContext empty_ctx(cfg.system.n());
  parallel_for(static_cast<std::size_t>(total), threads, [&](std::size_t idx) {
    const Vec x = spec.point(static_cast<long>(idx));
    const ProblemBundle bundle = engine.build(0, x, empty_ctx);
    const MpcSolution sol = solve(bundle.problem);
    if (sol.status == SolveStatus::optimal)
      grid.feasible[idx] = 1;
    else if (sol.status == SolveStatus::numerical_failure)
      failures[idx] = 1;
  });

  for (std::size_t idx = 0; idx < grid.feasible.size(); ++idx) {
    grid.feasible_count += grid.feasible[idx];
    grid.numerical_failures += failures[idx];
  }
  grid.area = static_cast<double>(grid.feasible_count) * spec.cell_volume();
  return grid;
}

}  // namespace smpc
