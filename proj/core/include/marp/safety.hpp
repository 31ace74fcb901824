#pragma once

// One-step safety rule: rule out own actions that some single opponent move
// could turn into a collision, then take the distance-minimising survivor.

#include <array>
#include <span>
#include <vector>

#include "marp/belief.hpp"
#include "marp/env.hpp"

namespace marp {

struct SafetyInput {
  const GridMap* map = nullptr;
  /// Own goal distances, possibly on a map with extra obstacles.
  const DistanceField* to_goal = nullptr;
  int self_index = 0;
  /// Agents treated as immobile obstacles (their moves are not enumerated
  /// and their cells are never entered).
  std::span<const int> frozen_agents{};
  /// Used for the no-safe-action fallback; uniform over valid moves if null.
  const Belief* belief = nullptr;
};

struct SafetyDecision {
  MoveAction action = MoveAction::Stay;
  /// Per own action: true when no single opponent move can collide with it.
  std::array<bool, kNumActions> safe{};
  bool had_safe_action = false;
};

/// Whether own move `own` is safe against every single valid move of every
/// other non-frozen agent (vertex and swap collisions). Invalid own moves are
/// reported unsafe.
std::array<bool, kNumActions> safe_action_mask(const GridMap& map, const JointState& state,
                                               int self_index,
                                               std::span<const int> frozen_agents = {});

/// Probability that own move `own` collides at the next step, with each
/// opponent's move drawn from its belief marginal (uniform over valid moves
/// when no belief is supplied). Opponents collide independently.
double one_step_collision_probability(const SafetyInput& in, const JointState& state,
                                      MoveAction own);

SafetyDecision safe_decision(const SafetyInput& in, const JointState& state);

}  // namespace marp
