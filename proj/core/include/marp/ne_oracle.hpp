#pragma once

// Conflict-based search, its focal bounded-suboptimal variant, and the leaf
// estimate built from sampled collision-free plans.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "marp/belief.hpp"
#include "marp/env.hpp"
#include "marp/rng.hpp"
#include "marp/solvers.hpp"

namespace marp {

/// Vertex constraint: `agent` may not be at `cell` at time `t`.
/// Edge constraint: `agent` may not move `from` -> `cell` arriving at time `t`.
struct Constraint {
  int agent = 0;
  Cell cell;
  Cell from;
  int t = 0;
  bool edge = false;

  static Constraint vertex(int agent, Cell cell, int t) { return {agent, cell, cell, t, false}; }
  static Constraint move(int agent, Cell from, Cell to, int t) { return {agent, to, from, t, true}; }
  bool operator==(const Constraint&) const = default;
};

/// Cells by timestep; the agent rests at back() afterwards.
using Path = std::vector<Cell>;

/// Time of the last move; trailing waits at the goal are free.
int path_cost(const Path& path);

/// Position at time t (the last cell once the path ends).
inline Cell position_at(const Path& path, int t) {
  return t < static_cast<int>(path.size()) ? path[static_cast<std::size_t>(t)] : path.back();
}

struct NePlan {
  std::vector<Path> paths;
  int sum_of_costs = 0;
};

struct PathConflict {
  int a = 0;
  int b = 0;
  int t = 0;
  bool edge = false;
  Cell cell;  // vertex cell, or a's destination for an edge conflict
  Cell from;  // a's origin for an edge conflict
};

/// Earliest vertex or swap conflict (t >= 1), lowest pair first.
std::optional<PathConflict> first_conflict(std::span<const Path> paths);
std::size_t count_conflicts(std::span<const Path> paths);

/// Work limits. Expansion caps keep in-search calls deterministic; the
/// wall-clock limit (0 = none) is meant for standalone use.
struct CbsLimits {
  std::size_t max_high_level = 20000;
  std::size_t max_low_level = 200000;
  double time_limit_ms = 0.0;
};

class CbsFailure : public std::runtime_error {
 public:
  enum class Kind { Infeasible, Timeout };
  CbsFailure(Kind kind, const std::string& what, std::optional<NePlan> best = std::nullopt)
      : std::runtime_error(what), kind_(kind), best_(std::move(best)) {}
  Kind kind() const { return kind_; }
  /// Lowest-conflict plan seen before giving up (may contain conflicts).
  const std::optional<NePlan>& best() const { return best_; }

 private:
  Kind kind_;
  std::optional<NePlan> best_;
};

struct LowLevelResult {
  Path path;
  /// Lower bound on the optimal constrained cost.
  int lower_bound = 0;
};

/// Space-time A* for one agent. Only constraints whose agent equals `agent`
/// are read. With w > 0 it runs as focal search, preferring nodes with fewer
/// conflicts against `others`, and returns a path within (1+w) of optimal.
/// nullopt when no path exists within the horizon or the expansion cap.
std::optional<LowLevelResult> space_time_search(const GridMap& map, Cell start, Cell goal,
                                                int agent, std::span<const Constraint> constraints,
                                                int horizon, double w = 0.0,
                                                std::span<const Path> others = {},
                                                std::size_t max_expansions = 1000000);

/// Minimum-length constraint-respecting path.
std::optional<Path> space_time_astar(const GridMap& map, Cell start, Cell goal,
                                     std::span<const Constraint> constraints, int horizon,
                                     int agent = 0);

/// Optimal sum-of-costs plan. Throws CbsFailure.
NePlan cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
           const CbsLimits& limits = {});

/// Plan with sum-of-costs within (1+w) of optimal. Throws CbsFailure.
NePlan bounded_cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
                   double w, const CbsLimits& limits = {});

struct NeEvalResult {
  double value = 0.0;
  ActionArray prior{};
  int failures = 0;
};

struct NeEvalParams {
  int samples = 1;
  double gamma = kDefaultGamma;
  RewardParams rewards;
  double w = 0.2;
  CbsLimits limits{200, 20000, 0.0};
};

/// Mean of gamma^l * goal_reward and of the one-hot first own action over
/// plans solved for opponent goals drawn from the belief. Arrived opponents
/// are static obstacles. Samples whose plan fails add value 0 and a uniform
/// prior.
NeEvalResult ne_eval(const GridMap& map, const JointState& state, const Belief& belief,
                     int own_index, Cell own_goal, const NeEvalParams& params, Rng& rng);

}  // namespace marp
