#pragma once

// Opponent types: the goal-directed hypothesis policies a modelling agent
// attributes to opponents, and the concrete action rules of the built-in
// evaluation opponents.

#include <memory>
#include <string>
#include <string_view>

#include "marp/env.hpp"
#include "marp/rng.hpp"

namespace marp {

enum class OpponentKind { ShortestPath, Random, Safe, Chasing, SelfPlay };

/// Behaviour of one built-in opponent. Grammar: `sp`, `rand:0.3`, `safe`,
/// `chase:0.5`, and `self` (runs the modelling planner; self-play).
struct OpponentSpec {
  OpponentKind kind = OpponentKind::ShortestPath;
  double p = 0.0;

  static OpponentSpec parse(std::string_view text);
  std::string to_string() const;
  bool operator==(const OpponentSpec&) const = default;
};

/// epsilon-softened shortest-path-tree policy toward a hypothesised goal.
class HypothesisPolicy {
 public:
  HypothesisPolicy(std::shared_ptr<const GridMap> map,
                   std::shared_ptr<const DistanceField> distance, double epsilon);

  Cell goal() const { return distance_->goal(); }
  double epsilon() const { return epsilon_; }
  const DistanceField& distance() const { return *distance_; }

  /// Probability of each action at `cell`. Mass (1-eps) is split over the
  /// distance-decreasing moves and eps over the remaining valid moves
  /// (Stay included). Stay has mass 1 at the goal; a cell from which the goal
  /// is unreachable gets the uniform distribution over valid moves.
  ActionArray action_dist(Cell cell) const;

  /// Same as action_dist(cell)[a] without building the whole table.
  double probability(Cell cell, MoveAction a) const { return action_dist(cell)[action_index(a)]; }

 private:
  std::shared_ptr<const GridMap> map_;
  std::shared_ptr<const DistanceField> distance_;
  double epsilon_;
};

/// Lazily built, per-map cache of goal distance fields. Not thread-safe;
/// the fields it hands out are immutable and may be shared freely.
class DistanceCache {
 public:
  explicit DistanceCache(std::shared_ptr<const GridMap> map);

  const std::shared_ptr<const GridMap>& map() const { return map_; }
  std::shared_ptr<const DistanceField> get(Cell goal);

 private:
  std::shared_ptr<const GridMap> map_;
  std::vector<std::shared_ptr<const DistanceField>> fields_;
};

/// First distance-decreasing move in Up, Down, Left, Right order; Stay at the
/// goal or when the goal is unreachable.
MoveAction shortest_path_act(const GridMap& map, const DistanceField& to_goal, Cell from);
MoveAction shortest_path_act(const GridMap& map, const JointState& state, int self_index,
                             Cell goal);

/// Uniform valid move with probability p, shortest-path move otherwise.
MoveAction random_p_act(const GridMap& map, const DistanceField& to_goal, Cell from, double p,
                        Rng& rng);

/// With probability p a distance-decreasing move toward `target`; otherwise
/// the shortest-path move toward the agent's own goal.
MoveAction chasing_p_act(const GridMap& map, const DistanceField& to_own_goal, Cell from,
                         Cell target, double p, Rng& rng);
MoveAction chasing_p_act(const GridMap& map, const JointState& state, int self_index,
                         int target_index, Cell own_goal, double p, Rng& rng);

/// Uniform draw over the valid moves at `from` (Stay included).
MoveAction uniform_valid_move(const GridMap& map, Cell from, Rng& rng);

}  // namespace marp
