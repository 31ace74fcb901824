#include "marp/opponents.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace marp {

namespace {

double parse_probability(std::string_view text, std::string_view spec) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument("opponent spec '" + std::string(spec) +
                                "': probability must be a number in [0,1]");
  }
  return value;
}

std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

}  // namespace

OpponentSpec OpponentSpec::parse(std::string_view text) {
  if (text == "sp") return {OpponentKind::ShortestPath, 0.0};
  if (text == "safe") return {OpponentKind::Safe, 0.0};
  if (text == "self") return {OpponentKind::SelfPlay, 0.0};
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    const auto head = text.substr(0, colon);
    const auto tail = text.substr(colon + 1);
    if (head == "rand") return {OpponentKind::Random, parse_probability(tail, text)};
    if (head == "chase") return {OpponentKind::Chasing, parse_probability(tail, text)};
  }
  throw std::invalid_argument("unknown opponent spec '" + std::string(text) + "'");
}

std::string OpponentSpec::to_string() const {
  switch (kind) {
    case OpponentKind::ShortestPath: return "sp";
    case OpponentKind::Random: return "rand:" + format_probability(p);
    case OpponentKind::Safe: return "safe";
    case OpponentKind::Chasing: return "chase:" + format_probability(p);
    case OpponentKind::SelfPlay: return "self";
  }
  return "sp";
}

HypothesisPolicy::HypothesisPolicy(std::shared_ptr<const GridMap> map,
                                   std::shared_ptr<const DistanceField> distance, double epsilon)
    : map_(std::move(map)), distance_(std::move(distance)), epsilon_(epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("hypothesis epsilon must lie in [0,1]");
  }
}

ActionArray HypothesisPolicy::action_dist(Cell cell) const {
  if (!map_->passable(cell)) {
    throw std::invalid_argument("action_dist: cell " + to_string(cell) + " is not passable");
  }
  ActionArray dist{};
  const int here = distance_->at(cell);
  if (here == 0) {
    dist[action_index(MoveAction::Stay)] = 1.0;
    return dist;
  }

  std::array<bool, kNumActions> valid{};
  std::array<bool, kNumActions> shortest{};
  int n_valid = 0;
  int n_shortest = 0;
  for (MoveAction a : kAllActions) {
    if (!map_->is_valid_move(cell, a)) continue;
    valid[action_index(a)] = true;
    ++n_valid;
    if (here != DistanceField::kUnreachable && a != MoveAction::Stay &&
        distance_->at(shifted(cell, a)) < here) {
      shortest[action_index(a)] = true;
      ++n_shortest;
    }
  }

  if (n_shortest == 0) {
    for (std::size_t i = 0; i < kNumActions; ++i) {
      if (valid[i]) dist[i] = 1.0 / n_valid;
    }
    return dist;
  }
  const int n_other = n_valid - n_shortest;  // >= 1: Stay is never distance-decreasing
  const double on_path = (1.0 - epsilon_) / n_shortest;
  const double off_path = epsilon_ / n_other;
  for (std::size_t i = 0; i < kNumActions; ++i) {
    if (shortest[i]) dist[i] = on_path;
    else if (valid[i]) dist[i] = off_path;
  }
  return dist;
}

DistanceCache::DistanceCache(std::shared_ptr<const GridMap> map)
    : map_(std::move(map)), fields_(map_->size()) {}

std::shared_ptr<const DistanceField> DistanceCache::get(Cell goal) {
  auto& slot = fields_.at(map_->index(goal));
  if (!slot) slot = std::make_shared<const DistanceField>(bfs_distance(*map_, goal));
  return slot;
}

MoveAction shortest_path_act(const GridMap& map, const DistanceField& to_goal, Cell from) {
  const int here = to_goal.at(from);
  if (here == 0 || here == DistanceField::kUnreachable) return MoveAction::Stay;
  for (MoveAction a : {MoveAction::Up, MoveAction::Down, MoveAction::Left, MoveAction::Right}) {
    const Cell to = shifted(from, a);
    if (map.passable(to) && to_goal.at(to) < here) return a;
  }
  return MoveAction::Stay;
}

MoveAction shortest_path_act(const GridMap& map, const JointState& state, int self_index,
                             Cell goal) {
  const DistanceField field = bfs_distance(map, goal);
  return shortest_path_act(map, field, state.positions.at(self_index));
}

MoveAction uniform_valid_move(const GridMap& map, Cell from, Rng& rng) {
  std::array<MoveAction, kNumActions> valid{};
  std::size_t n = 0;
  for (MoveAction a : kAllActions) {
    if (map.is_valid_move(from, a)) valid[n++] = a;
  }
  return valid[rng.below(n)];
}

MoveAction random_p_act(const GridMap& map, const DistanceField& to_goal, Cell from, double p,
                        Rng& rng) {
  if (rng.bernoulli(p)) return uniform_valid_move(map, from, rng);
  return shortest_path_act(map, to_goal, from);
}

MoveAction chasing_p_act(const GridMap& map, const DistanceField& to_own_goal, Cell from,
                         Cell target, double p, Rng& rng) {
  if (rng.bernoulli(p) && map.passable(target)) {
    const DistanceField to_target = bfs_distance(map, target);
    return shortest_path_act(map, to_target, from);
  }
  return shortest_path_act(map, to_own_goal, from);
}

MoveAction chasing_p_act(const GridMap& map, const JointState& state, int self_index,
                         int target_index, Cell own_goal, double p, Rng& rng) {
  const DistanceField own = bfs_distance(map, own_goal);
  return chasing_p_act(map, own, state.positions.at(self_index),
                       state.positions.at(target_index), p, rng);
}

}  // namespace marp
