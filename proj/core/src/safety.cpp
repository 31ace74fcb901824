#include "marp/safety.hpp"

#include <algorithm>
#include <cstdlib>

namespace marp {

namespace {

bool is_frozen(std::span<const int> frozen, int agent) {
  return std::find(frozen.begin(), frozen.end(), agent) != frozen.end();
}

bool collides(Cell own_from, Cell own_to, Cell other_from, Cell other_to) {
  if (own_to == other_to) return true;
  return own_to == other_from && other_to == own_from && own_from != other_from;
}

// Agents further than two steps (Manhattan) away cannot collide next step.
bool nearby(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col) <= 2; }

}  // namespace

std::array<bool, kNumActions> safe_action_mask(const GridMap& map, const JointState& state,
                                               int self_index, std::span<const int> frozen_agents) {
  std::array<bool, kNumActions> safe{};
  const Cell me = state.positions.at(self_index);
  for (MoveAction own : kAllActions) {
    if (!map.is_valid_move(me, own)) continue;
    const Cell to = shifted(me, own);
    bool ok = true;
    for (std::size_t j = 0; j < state.size() && ok; ++j) {
      if (static_cast<int>(j) == self_index) continue;
      const Cell other = state.positions[j];
      if (!nearby(me, other)) continue;
      if (is_frozen(frozen_agents, static_cast<int>(j)) || state.arrived[j]) {
        ok = to != other;
        continue;
      }
      for (MoveAction a : kAllActions) {
        if (!map.is_valid_move(other, a)) continue;
        if (collides(me, to, other, shifted(other, a))) {
          ok = false;
          break;
        }
      }
    }
    safe[action_index(own)] = ok;
  }
  return safe;
}

double one_step_collision_probability(const SafetyInput& in, const JointState& state,
                                      MoveAction own) {
  const GridMap& map = *in.map;
  const Cell me = state.positions.at(in.self_index);
  const Cell to = map.target(me, own);
  double survive = 1.0;
  for (std::size_t j = 0; j < state.size(); ++j) {
    if (static_cast<int>(j) == in.self_index) continue;
    const Cell other = state.positions[j];
    if (!nearby(me, other)) continue;
    if (is_frozen(in.frozen_agents, static_cast<int>(j)) || state.arrived[j]) {
      if (to == other) survive = 0.0;
      continue;
    }
    ActionArray dist{};
    bool from_belief = false;
    if (in.belief) {
      const auto agents = in.belief->agents();
      const auto it = std::find(agents.begin(), agents.end(), static_cast<int>(j));
      if (it != agents.end()) {
        dist = in.belief->marginal(static_cast<std::size_t>(it - agents.begin()), other);
        from_belief = true;
      }
    }
    if (!from_belief) {
      int n = 0;
      for (MoveAction a : kAllActions) n += map.is_valid_move(other, a);
      for (MoveAction a : kAllActions) {
        if (map.is_valid_move(other, a)) dist[action_index(a)] = 1.0 / n;
      }
    }
    double p_hit = 0.0;
    for (MoveAction a : kAllActions) {
      if (dist[action_index(a)] <= 0.0) continue;
      if (collides(me, to, other, map.target(other, a))) p_hit += dist[action_index(a)];
    }
    survive *= 1.0 - std::min(1.0, p_hit);
  }
  return 1.0 - survive;
}

SafetyDecision safe_decision(const SafetyInput& in, const JointState& state) {
  const GridMap& map = *in.map;
  const DistanceField& dist = *in.to_goal;
  const Cell me = state.positions.at(in.self_index);
  SafetyDecision out;
  out.safe = safe_action_mask(map, state, in.self_index, in.frozen_agents);

  int best = DistanceField::kUnreachable;
  bool any = false;
  for (MoveAction a : kAllActions) {
    if (!out.safe[action_index(a)]) continue;
    const int d = dist.at(shifted(me, a));
    if (!any || d < best) {
      best = d;
      out.action = a;
      any = true;
    }
  }
  if (any) {
    out.had_safe_action = true;
    if (best == DistanceField::kUnreachable && out.safe[action_index(MoveAction::Stay)]) {
      out.action = MoveAction::Stay;
    }
    return out;
  }

  double lowest = 2.0;
  for (MoveAction a : kAllActions) {
    if (!map.is_valid_move(me, a)) continue;
    const double p = one_step_collision_probability(in, state, a);
    if (p < lowest) {
      lowest = p;
      out.action = a;
    }
  }
  return out;
}

}  // namespace marp
