#include "marp/ne_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace marp {

namespace {

std::uint64_t vkey(int t, int cell) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 32) |
         static_cast<std::uint32_t>(cell);
}

std::uint64_t ekey(int t, int from, int to) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 40) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(from)) << 20) ^
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(to));
}

struct LowNode {
  int cell;
  int t;
  int f;
  int conflicts;
  int parent;
};

int move_conflicts(std::span<const Path> others, int agent, Cell from, Cell to, int t) {
  int n = 0;
  for (std::size_t k = 0; k < others.size(); ++k) {
    if (static_cast<int>(k) == agent || others[k].empty()) continue;
    const Cell o_next = position_at(others[k], t);
    if (o_next == to) {
      ++n;
      continue;
    }
    if (to != from && o_next == from && position_at(others[k], t - 1) == to) ++n;
  }
  return n;
}

std::optional<LowLevelResult> low_level(const GridMap& map, const DistanceField& h, Cell start,
                                        Cell goal, int agent,
                                        std::span<const Constraint> constraints, int horizon,
                                        double w, std::span<const Path> others,
                                        std::size_t max_expansions) {
  if (!map.passable(start) || !map.passable(goal)) return std::nullopt;
  if (!h.reachable(start)) return std::nullopt;

  std::unordered_set<std::uint64_t> vertex_block;
  std::unordered_set<std::uint64_t> edge_block;
  int last_t = -1;
  int goal_last = -1;
  const int goal_idx = map.index(goal);
  for (const auto& c : constraints) {
    if (c.agent != agent) continue;
    last_t = std::max(last_t, c.t);
    if (c.edge) {
      edge_block.insert(ekey(c.t, map.index(c.from), map.index(c.cell)));
    } else {
      vertex_block.insert(vkey(c.t, map.index(c.cell)));
      if (c.cell == goal) goal_last = std::max(goal_last, c.t);
    }
  }
  if (vertex_block.count(vkey(0, map.index(start)))) return std::nullopt;

  auto heuristic = [&](int cell, int t) {
    return std::max(h.at(cell), goal_last + 1 - t);
  };

  std::vector<LowNode> nodes;
  // Beyond the last constraint the timestep no longer matters.
  std::unordered_map<std::uint64_t, int> best_t;
  using OpenKey = std::pair<int, int>;                       // f, id
  using FocalKey = std::tuple<int, int, int, int>;           // conflicts, f, -t, id
  std::set<OpenKey> open;
  std::set<FocalKey> focal;
  double bound = 0.0;

  auto push = [&](int cell, int t, int conflicts, int parent) {
    const int tk = std::min(t, last_t + 1);
    const std::uint64_t key = vkey(tk, cell);
    auto it = best_t.find(key);
    if (it != best_t.end() && it->second <= t) return;
    best_t[key] = t;
    const int id = static_cast<int>(nodes.size());
    const int f = t + heuristic(cell, t);
    nodes.push_back({cell, t, f, conflicts, parent});
    open.insert({f, id});
    if (f <= bound) focal.insert({conflicts, f, -t, id});
  };

  push(map.index(start), 0, 0, -1);
  bound = static_cast<double>(open.begin()->first) * (1.0 + w);
  for (const auto& [f, id] : open) {
    if (f <= bound) focal.insert({nodes[id].conflicts, f, -nodes[id].t, id});
  }

  std::size_t expansions = 0;
  while (!open.empty()) {
    const int fmin = open.begin()->first;
    const double new_bound = static_cast<double>(fmin) * (1.0 + w);
    if (new_bound > bound) {
      for (auto it = open.upper_bound({static_cast<int>(std::floor(bound)), INT32_MAX});
           it != open.end() && it->first <= new_bound; ++it) {
        if (it->first > bound) {
          focal.insert({nodes[it->second].conflicts, it->first, -nodes[it->second].t, it->second});
        }
      }
      bound = new_bound;
    }
    const auto [conf, f, neg_t, id] = *focal.begin();
    focal.erase(focal.begin());
    open.erase({f, id});
    const LowNode node = nodes[id];

    if (node.cell == goal_idx && node.t > goal_last) {
      LowLevelResult out;
      out.lower_bound = std::min(fmin, node.t);
      for (int cur = id; cur >= 0; cur = nodes[cur].parent) out.path.push_back(map.cell(nodes[cur].cell));
      std::reverse(out.path.begin(), out.path.end());
      return out;
    }
    if (++expansions > max_expansions) return std::nullopt;

    const Cell here = map.cell(node.cell);
    const int nt = node.t + 1;
    if (nt > horizon) continue;
    for (MoveAction a : kAllActions) {
      if (!map.is_valid_move(here, a)) continue;
      const Cell to = shifted(here, a);
      const int to_idx = map.index(to);
      if (!h.reachable(to)) continue;
      if (vertex_block.count(vkey(nt, to_idx))) continue;
      if (to_idx != node.cell && edge_block.count(ekey(nt, node.cell, to_idx))) continue;
      const int c = node.conflicts + (others.empty() ? 0 : move_conflicts(others, agent, here, to, nt));
      push(to_idx, nt, c, id);
    }
  }
  return std::nullopt;
}

int default_horizon(const GridMap& map, std::span<const Constraint> constraints, int agent) {
  int last = 0;
  for (const auto& c : constraints) {
    if (c.agent == agent) last = std::max(last, c.t);
  }
  return last + map.size() + 1;
}

struct CtNode {
  std::vector<Constraint> constraints;
  std::vector<Path> paths;
  std::vector<int> lbs;
  int cost = 0;
  int lb = 0;
  std::size_t conflicts = 0;
  std::size_t id = 0;
};

NePlan to_plan(const CtNode& node) {
  NePlan plan;
  plan.paths = node.paths;
  plan.sum_of_costs = node.cost;
  return plan;
}

NePlan focal_cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
                 double w, const CbsLimits& limits) {
  if (starts.size() != goals.size()) throw std::invalid_argument("starts and goals differ in size");
  if (!(w >= 0.0)) throw std::invalid_argument("suboptimality factor must be non-negative");
  const auto begin = std::chrono::steady_clock::now();
  auto out_of_time = [&]() {
    if (limits.time_limit_ms <= 0.0) return false;
    const std::chrono::duration<double, std::milli> spent = std::chrono::steady_clock::now() - begin;
    return spent.count() > limits.time_limit_ms;
  };

  const std::size_t n = starts.size();
  std::vector<DistanceField> fields;
  fields.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!map.passable(starts[i]) || !map.passable(goals[i])) {
      throw CbsFailure(CbsFailure::Kind::Infeasible, "start or goal is blocked");
    }
    fields.push_back(bfs_distance(map, goals[i]));
  }

  auto root = std::make_unique<CtNode>();
  root->paths.resize(n);
  root->lbs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int agent = static_cast<int>(i);
    auto r = low_level(map, fields[i], starts[i], goals[i], agent, {},
                       default_horizon(map, {}, agent), w, root->paths, limits.max_low_level);
    if (!r) {
      throw CbsFailure(CbsFailure::Kind::Infeasible,
                       "agent " + std::to_string(i) + " cannot reach its goal");
    }
    root->paths[i] = std::move(r->path);
    root->lbs[i] = r->lower_bound;
    root->cost += path_cost(root->paths[i]);
    root->lb += r->lower_bound;
  }
  root->conflicts = count_conflicts(root->paths);

  std::vector<std::unique_ptr<CtNode>> store;
  using ByLb = std::pair<int, std::size_t>;
  using ByCost = std::pair<int, std::size_t>;
  using ByFocal = std::tuple<std::size_t, int, std::size_t>;
  std::set<ByLb> open;
  std::set<ByCost> waiting;  // open but outside focal
  std::set<ByFocal> focal;
  double bound = -1.0;

  auto insert = [&](std::unique_ptr<CtNode> node) {
    node->id = store.size();
    open.insert({node->lb, node->id});
    if (node->cost <= bound) {
      focal.insert({node->conflicts, node->cost, node->id});
    } else {
      waiting.insert({node->cost, node->id});
    }
    store.push_back(std::move(node));
  };
  insert(std::move(root));

  std::optional<NePlan> best;
  std::size_t best_conflicts = SIZE_MAX;
  std::size_t expansions = 0;
  while (!open.empty()) {
    if (expansions >= limits.max_high_level || out_of_time()) {
      throw CbsFailure(CbsFailure::Kind::Timeout, "search limit reached", best);
    }
    const double new_bound = static_cast<double>(open.begin()->first) * (1.0 + w);
    if (new_bound > bound) {
      bound = new_bound;
      while (!waiting.empty() && waiting.begin()->first <= bound) {
        const auto id = waiting.begin()->second;
        waiting.erase(waiting.begin());
        focal.insert({store[id]->conflicts, store[id]->cost, id});
      }
    }
    const auto id = std::get<2>(*focal.begin());
    focal.erase(focal.begin());
    std::unique_ptr<CtNode> node = std::move(store[id]);
    open.erase({node->lb, id});
    ++expansions;

    const auto conflict = first_conflict(node->paths);
    if (!conflict) return to_plan(*node);
    if (node->conflicts < best_conflicts) {
      best_conflicts = node->conflicts;
      best = to_plan(*node);
    }

    for (int side = 0; side < 2; ++side) {
      const int agent = side == 0 ? conflict->a : conflict->b;
      Constraint c;
      if (!conflict->edge) {
        c = Constraint::vertex(agent, conflict->cell, conflict->t);
      } else if (side == 0) {
        c = Constraint::move(agent, conflict->from, conflict->cell, conflict->t);
      } else {
        c = Constraint::move(agent, conflict->cell, conflict->from, conflict->t);
      }
      auto child = std::make_unique<CtNode>();
      child->constraints = node->constraints;
      child->constraints.push_back(c);
      child->paths = node->paths;
      child->lbs = node->lbs;
      const auto a = static_cast<std::size_t>(agent);
      auto r = low_level(map, fields[a], starts[a], goals[a], agent, child->constraints,
                         default_horizon(map, child->constraints, agent), w, child->paths,
                         limits.max_low_level);
      if (!r) continue;
      child->paths[a] = std::move(r->path);
      child->lbs[a] = std::max(node->lbs[a], r->lower_bound);
      child->cost = node->cost - path_cost(node->paths[a]) + path_cost(child->paths[a]);
      child->lb = node->lb - node->lbs[a] + child->lbs[a];
      child->conflicts = count_conflicts(child->paths);
      insert(std::move(child));
    }
  }
  throw CbsFailure(CbsFailure::Kind::Infeasible, "no conflict-free plan exists", best);
}

}  // namespace

int path_cost(const Path& path) {
  if (path.empty()) return 0;
  std::size_t end = path.size() - 1;
  while (end > 0 && path[end - 1] == path.back()) --end;
  return static_cast<int>(end);
}

std::optional<PathConflict> first_conflict(std::span<const Path> paths) {
  std::size_t horizon = 0;
  for (const auto& p : paths) horizon = std::max(horizon, p.size());
  for (int t = 1; t < static_cast<int>(horizon); ++t) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      for (std::size_t j = i + 1; j < paths.size(); ++j) {
        const Cell ai = position_at(paths[i], t);
        const Cell aj = position_at(paths[j], t);
        if (ai == aj) {
          return PathConflict{static_cast<int>(i), static_cast<int>(j), t, false, ai, ai};
        }
        const Cell pi = position_at(paths[i], t - 1);
        const Cell pj = position_at(paths[j], t - 1);
        if (ai == pj && aj == pi && ai != pi) {
          return PathConflict{static_cast<int>(i), static_cast<int>(j), t, true, ai, pi};
        }
      }
    }
  }
  return std::nullopt;
}

std::size_t count_conflicts(std::span<const Path> paths) {
  std::size_t horizon = 0;
  for (const auto& p : paths) horizon = std::max(horizon, p.size());
  std::size_t n = 0;
  for (int t = 1; t < static_cast<int>(horizon); ++t) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
      for (std::size_t j = i + 1; j < paths.size(); ++j) {
        const Cell ai = position_at(paths[i], t);
        const Cell aj = position_at(paths[j], t);
        if (ai == aj) {
          ++n;
        } else if (ai == position_at(paths[j], t - 1) && aj == position_at(paths[i], t - 1)) {
          ++n;
        }
      }
    }
  }
  return n;
}

std::optional<LowLevelResult> space_time_search(const GridMap& map, Cell start, Cell goal,
                                                int agent, std::span<const Constraint> constraints,
                                                int horizon, double w, std::span<const Path> others,
                                                std::size_t max_expansions) {
  if (!map.passable(goal)) return std::nullopt;
  const DistanceField h = bfs_distance(map, goal);
  return low_level(map, h, start, goal, agent, constraints, horizon, w, others, max_expansions);
}

std::optional<Path> space_time_astar(const GridMap& map, Cell start, Cell goal,
                                     std::span<const Constraint> constraints, int horizon,
                                     int agent) {
  auto r = space_time_search(map, start, goal, agent, constraints, horizon);
  if (!r) return std::nullopt;
  return std::move(r->path);
}

NePlan cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
           const CbsLimits& limits) {
  return focal_cbs(map, starts, goals, 0.0, limits);
}

NePlan bounded_cbs(const GridMap& map, std::span<const Cell> starts, std::span<const Cell> goals,
                   double w, const CbsLimits& limits) {
  return focal_cbs(map, starts, goals, w, limits);
}

NeEvalResult ne_eval(const GridMap& map, const JointState& state, const Belief& belief,
                     int own_index, Cell own_goal, const NeEvalParams& params, Rng& rng) {
  if (params.samples < 1) throw std::invalid_argument("ne_eval needs at least one sample");
  NeEvalResult out;
  const Cell me = state.positions.at(own_index);
  if (me == own_goal) {
    out.value = params.rewards.goal_reward;
    out.prior[action_index(MoveAction::Stay)] = 1.0;
    return out;
  }

  std::vector<Cell> blocked;
  std::vector<std::size_t> movers;  // opponent indices into the belief
  for (std::size_t j = 0; j < belief.opponent_count(); ++j) {
    const auto agent = static_cast<std::size_t>(belief.agent_index(j));
    if (state.arrived[agent]) {
      blocked.push_back(state.positions[agent]);
    } else {
      movers.push_back(j);
    }
  }
  const GridMap masked = blocked.empty() ? map : map.with_obstacles(blocked);

  ActionArray uniform{};
  int valid = 0;
  for (MoveAction a : kAllActions) valid += map.is_valid_move(me, a);
  for (MoveAction a : kAllActions) {
    if (map.is_valid_move(me, a)) uniform[action_index(a)] = 1.0 / valid;
  }

  constexpr int kRedraws = 16;
  for (int s = 0; s < params.samples; ++s) {
    std::vector<Cell> starts{me};
    std::vector<Cell> goals{own_goal};
    bool ok = masked.passable(own_goal);
    for (std::size_t j : movers) {
      if (!ok) break;
      const auto probs = belief.probabilities(j);
      const auto& set = belief.hypotheses(j);
      bool drawn = false;
      for (int tries = 0; tries < kRedraws && !drawn; ++tries) {
        const std::size_t k = rng.categorical(probs);
        if (k >= set.size()) break;
        const Cell g = set.policies[k].goal();
        if (!masked.passable(g)) continue;
        if (std::find(goals.begin(), goals.end(), g) != goals.end()) continue;
        goals.push_back(g);
        starts.push_back(state.positions[static_cast<std::size_t>(belief.agent_index(j))]);
        drawn = true;
      }
      ok = drawn;
    }
    bool solved = false;
    if (ok) {
      try {
        const NePlan plan = bounded_cbs(masked, starts, goals, params.w, params.limits);
        const Path& own = plan.paths.front();
        const int l = path_cost(own);
        out.value += std::pow(params.gamma, l) * params.rewards.goal_reward;
        const MoveAction first =
            own.size() > 1 ? action_between(own[0], own[1]).value_or(MoveAction::Stay)
                           : MoveAction::Stay;
        out.prior[action_index(first)] += 1.0;
        solved = true;
      } catch (const CbsFailure&) {
      }
    }
    if (!solved) {
      ++out.failures;
      for (std::size_t a = 0; a < kNumActions; ++a) out.prior[a] += uniform[a];
    }
  }
  out.value /= params.samples;
  for (double& p : out.prior) p /= params.samples;
  return out;
}

}  // namespace marp
