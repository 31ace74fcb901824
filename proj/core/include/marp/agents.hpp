#pragma once

// Built-in opponents used for evaluation: ShortestPath, Random(p), Safe and
// Chasing(p). Each owns no RNG; the caller passes the agent's private stream.

#include <memory>

#include "marp/env.hpp"
#include "marp/opponents.hpp"
#include "marp/rng.hpp"

namespace marp {

class OpponentAgent {
 public:
  virtual ~OpponentAgent() = default;
  virtual MoveAction act(const JointState& state, Rng& rng) = 0;
};

/// `target_index` is the agent a Chasing opponent pursues (the modelling
/// agent). Throws std::invalid_argument for OpponentKind::SelfPlay, which is
/// backed by a planner rather than a fixed rule.
std::unique_ptr<OpponentAgent> make_builtin_agent(const OpponentSpec& spec, DistanceCache& distances,
                                                  int self_index, Cell goal, int target_index);

}  // namespace marp
