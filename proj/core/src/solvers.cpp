#include "marp/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

namespace marp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

PositionKey key_of(int width, const JointState& s) {
  PositionKey key(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) key[i] = s.positions[i].row * width + s.positions[i].col;
  return key;
}

void add_mass(std::vector<Transition>& row, int next, double p) {
  for (auto& t : row) {
    if (t.next == next) {
      t.prob += p;
      return;
    }
  }
  row.push_back({next, p});
}

// One joint opponent move: destination of every opponent and its probability.
struct OpponentOutcome {
  std::vector<Cell> to;
  double prob;
};

}  // namespace

void RewardParams::validate() const {
  if (!std::isfinite(goal_reward) || !std::isfinite(collision_penalty) ||
      !std::isfinite(step_reward)) {
    throw std::invalid_argument("rewards must be finite");
  }
  if (goal_reward <= 0.0) throw std::invalid_argument("goal_reward must be positive");
  if (collision_penalty > 0.0) throw std::invalid_argument("collision_penalty must not be positive");
}

std::size_t PositionKeyHash::operator()(const std::vector<int>& key) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int v : key) {
    h ^= static_cast<std::uint32_t>(v);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 29));
}

PositionKey position_key(const GridMap& map, const JointState& s) { return key_of(map.width(), s); }

double TabularMdp::row_sum(int s, int a) const {
  double total = 0.0;
  for (const auto& t : transitions[row(s, a)]) total += t.prob;
  return total;
}

void TabularMdp::validate(double tol) const {
  const std::size_t rows = static_cast<std::size_t>(num_states) * num_actions;
  if (transitions.size() != rows || rewards.size() != rows || available.size() != rows ||
      terminal.size() != static_cast<std::size_t>(num_states)) {
    throw std::logic_error("MDP tables have inconsistent sizes");
  }
  for (int s = 0; s < num_states; ++s) {
    bool any = false;
    for (int a = 0; a < num_actions; ++a) {
      any = any || available[row(s, a)];
      for (const auto& t : transitions[row(s, a)]) {
        if (t.next < 0 || t.next >= num_states || t.prob < 0.0) {
          throw std::logic_error("bad transition in state " + std::to_string(s));
        }
      }
      if (std::abs(row_sum(s, a) - 1.0) > tol) {
        throw std::logic_error("transition row does not sum to 1 at state " + std::to_string(s));
      }
    }
    if (!any) throw std::logic_error("state without available action: " + std::to_string(s));
  }
}

std::vector<double> bellman_backup(const TabularMdp& mdp, std::span<const double> values) {
  std::vector<double> out(static_cast<std::size_t>(mdp.num_states));
  for (int s = 0; s < mdp.num_states; ++s) {
    double best = kNegInf;
    for (int a = 0; a < mdp.num_actions; ++a) {
      const std::size_t r = mdp.row(s, a);
      if (!mdp.available[r]) continue;
      double q = mdp.rewards[r];
      for (const auto& t : mdp.transitions[r]) q += mdp.gamma * t.prob * values[t.next];
      best = std::max(best, q);
    }
    out[s] = best;
  }
  return out;
}

ValueSolution value_iteration(const TabularMdp& mdp, double tol, int max_sweeps) {
  ValueSolution sol;
  sol.values.assign(static_cast<std::size_t>(mdp.num_states), 0.0);
  std::vector<double> next(sol.values.size());
  while (sol.sweeps < max_sweeps) {
    double residual = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
      if (mdp.terminal[s]) {
        next[s] = 0.0;
        continue;
      }
      double best = kNegInf;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const std::size_t r = mdp.row(s, a);
        if (!mdp.available[r]) continue;
        double acc = 0.0;
        for (const auto& t : mdp.transitions[r]) acc += t.prob * sol.values[t.next];
        best = std::max(best, mdp.rewards[r] + mdp.gamma * acc);
      }
      next[s] = best;
      residual = std::max(residual, std::abs(best - sol.values[s]));
    }
    sol.values.swap(next);
    ++sol.sweeps;
    sol.residual = residual;
    sol.residuals.push_back(residual);
    if (residual < tol) break;
  }

  sol.q.assign(static_cast<std::size_t>(mdp.num_states) * mdp.num_actions, kNegInf);
  sol.policy.assign(static_cast<std::size_t>(mdp.num_states), 0);
  for (int s = 0; s < mdp.num_states; ++s) {
    double best = kNegInf;
    int arg = -1;
    for (int a = 0; a < mdp.num_actions; ++a) {
      const std::size_t r = mdp.row(s, a);
      if (!mdp.available[r]) continue;
      double acc = 0.0;
      for (const auto& t : mdp.transitions[r]) acc += t.prob * sol.values[t.next];
      const double q = mdp.terminal[s] ? 0.0 : mdp.rewards[r] + mdp.gamma * acc;
      sol.q[r] = q;
      if (arg < 0 || q > best) {
        best = q;
        arg = a;
      }
    }
    sol.policy[s] = std::max(arg, 0);
  }
  return sol;
}

std::optional<int> InducedMdp::find(const JointState& s) const {
  if (s.positions.at(own_index) == own_goal) return goal_state;
  const auto it = index_.find(key_of(width_, s));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

InducedMdp induce_mdp(const GridMap& map, const Belief& belief, const JointState& root,
                      int own_index, Cell own_goal, const RewardParams& rewards, double gamma,
                      std::size_t state_cap, StepOptions options) {
  rewards.validate();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (own_index < 0 || static_cast<std::size_t>(own_index) >= root.size()) {
    throw std::invalid_argument("own index out of range");
  }
  if (state_cap < 2) throw CapacityError("state cap below the two terminal states");

  InducedMdp out;
  out.own_goal = own_goal;
  out.own_index = own_index;
  out.width_ = map.width();
  TabularMdp& mdp = out.mdp;
  mdp.gamma = gamma;
  const int A = mdp.num_actions;

  const std::size_t n_opp = belief.opponent_count();
  std::vector<std::size_t> opp_of_agent(root.size(), n_opp);
  for (std::size_t j = 0; j < n_opp; ++j) opp_of_agent.at(belief.agent_index(j)) = j;
  for (std::size_t i = 0; i < root.size(); ++i) {
    if (static_cast<int>(i) != own_index && opp_of_agent[i] == n_opp && !root.arrived[i]) {
      throw std::invalid_argument("agent " + std::to_string(i) + " is not covered by the belief");
    }
  }

  auto add_terminal = [&]() {
    for (int a = 0; a < A; ++a) {
      mdp.transitions.push_back({{mdp.num_states, 1.0}});
      mdp.rewards.push_back(0.0);
      mdp.available.push_back(1);
    }
    mdp.terminal.push_back(1);
    ++mdp.num_states;
  };
  add_terminal();  // goal
  add_terminal();  // collision

  std::deque<int> frontier;
  auto intern = [&](const JointState& s) -> int {
    if (s.positions[own_index] == own_goal) return out.goal_state;
    auto key = key_of(map.width(), s);
    const auto it = out.index_.find(key);
    if (it != out.index_.end()) return it->second;
    if (static_cast<std::size_t>(mdp.num_states) + 1 > state_cap) {
      throw CapacityError("induced MDP exceeds " + std::to_string(state_cap) + " states");
    }
    const int id = mdp.num_states++;
    out.index_.emplace(std::move(key), id);
    out.states.push_back(s);
    mdp.terminal.push_back(0);
    mdp.transitions.resize(static_cast<std::size_t>(mdp.num_states) * A);
    mdp.rewards.resize(mdp.transitions.size(), 0.0);
    mdp.available.resize(mdp.transitions.size(), 0);
    frontier.push_back(id);
    return id;
  };

  JointState start = root;
  start.arrived[own_index] = 0;
  intern(start);

  std::vector<int> movers;  // agent ids of non-arrived opponents
  for (std::size_t i = 0; i < root.size(); ++i) {
    if (static_cast<int>(i) != own_index && !root.arrived[i]) movers.push_back(static_cast<int>(i));
  }

  std::vector<OpponentOutcome> outcomes;
  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    const JointState s = out.states[static_cast<std::size_t>(id - 2)];
    const Cell me = s.positions[own_index];

    // Joint opponent outcomes, enumerated once per state.
    outcomes.clear();
    outcomes.push_back({{}, 1.0});
    for (int agent : movers) {
      const Cell from = s.positions[agent];
      const ActionArray m = belief.marginal(opp_of_agent[agent], from);
      std::vector<OpponentOutcome> grown;
      grown.reserve(outcomes.size() * kNumActions);
      for (const auto& o : outcomes) {
        for (MoveAction a : kAllActions) {
          const double p = m[action_index(a)];
          if (p <= 0.0) continue;
          OpponentOutcome g{o.to, o.prob * p};
          g.to.push_back(map.target(from, a));
          grown.push_back(std::move(g));
        }
      }
      outcomes.swap(grown);
    }

    for (MoveAction a : kAllActions) {
      const std::size_t r = mdp.row(id, static_cast<int>(action_index(a)));
      std::vector<Transition> row;
      double reward = 0.0;
      const Cell to = map.target(me, a);
      for (const auto& o : outcomes) {
        bool hit = false;
        for (std::size_t i = 0; i < s.size() && !hit; ++i) {
          if (static_cast<int>(i) == own_index || !s.arrived[i]) continue;
          if (options.goal_ghosting) continue;
          hit = to == s.positions[i];
        }
        for (std::size_t k = 0; k < movers.size() && !hit; ++k) {
          const Cell from = s.positions[movers[k]];
          const Cell dest = o.to[k];
          hit = dest == to || (dest == me && to == from && me != from);
        }
        int next;
        if (hit) {
          next = out.collision_state;
          reward += o.prob * rewards.collision_penalty;
        } else if (to == own_goal) {
          next = out.goal_state;
          reward += o.prob * rewards.goal_reward;
        } else {
          JointState ns = s;
          ns.positions[own_index] = to;
          for (std::size_t k = 0; k < movers.size(); ++k) ns.positions[movers[k]] = o.to[k];
          next = intern(ns);
          reward += o.prob * rewards.step_reward;
        }
        add_mass(row, next, o.prob);
      }
      mdp.transitions[r] = std::move(row);
      mdp.rewards[r] = reward;
      mdp.available[r] = map.is_valid_move(me, a) ? 1 : 0;
    }
  }
  return out;
}

void write_triplets(std::ostream& out, const InducedMdp& induced) {
  const TabularMdp& mdp = induced.mdp;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      const std::size_t r = mdp.row(s, a);
      if (!mdp.available[r]) continue;
      for (const auto& t : mdp.transitions[r]) {
        out << "T " << s << ' ' << a << ' ' << t.next << ' ' << t.prob << '\n';
      }
      out << "R " << s << ' ' << a << ' ' << mdp.rewards[r] << '\n';
    }
  }
}

std::vector<Context> enumerate_contexts(const Belief& belief, std::size_t max_contexts) {
  const std::size_t n = belief.opponent_count();
  std::vector<std::vector<std::size_t>> support(n);
  std::size_t total = 1;
  for (std::size_t j = 0; j < n; ++j) {
    const auto probs = belief.probabilities(j);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (probs[k] > 0.0) support[j].push_back(k);
    }
    if (support[j].empty()) return {};
    if (total > max_contexts / support[j].size()) {
      throw CapacityError("more than " + std::to_string(max_contexts) + " belief contexts");
    }
    total *= support[j].size();
  }
  std::vector<Context> out;
  out.reserve(total);
  std::vector<std::size_t> digit(n, 0);
  for (std::size_t c = 0; c < total; ++c) {
    Context ctx(n);
    for (std::size_t j = 0; j < n; ++j) ctx[j] = support[j][digit[j]];
    out.push_back(std::move(ctx));
    for (std::size_t j = n; j > 0; --j) {
      if (++digit[j - 1] < support[j - 1].size()) break;
      digit[j - 1] = 0;
    }
  }
  return out;
}

std::optional<ActionArray> ContextQTables::q(const Context& c, const JointState& s) const {
  const auto t = tables_.find(c);
  if (t == tables_.end()) return std::nullopt;
  if (s.positions.at(own_index_) == own_goal_) return ActionArray{};
  const auto it = index_.find(key_of(width_, s));
  if (it == index_.end() || static_cast<std::size_t>(it->second) >= t->second.size()) {
    return std::nullopt;
  }
  const ActionArray& row = t->second[static_cast<std::size_t>(it->second)];
  if (std::isnan(row[0])) return std::nullopt;
  return row;
}

std::vector<Context> ContextQTables::contexts() const {
  std::vector<Context> out;
  out.reserve(tables_.size());
  for (const auto& [c, _] : tables_) out.push_back(c);
  return out;
}

ContextQTables solve_context_mdps(const GridMap& map, const Belief& belief,
                                  std::span<const Context> contexts, const JointState& root,
                                  int own_index, Cell own_goal, const RewardParams& rewards,
                                  double gamma, double tol, std::size_t state_cap,
                                  std::size_t total_cap, StepOptions options) {
  ContextQTables out;
  out.own_index_ = own_index;
  out.own_goal_ = own_goal;
  out.width_ = map.width();
  std::size_t total = 0;
  ActionArray missing;
  missing.fill(std::numeric_limits<double>::quiet_NaN());
  for (const Context& ctx : contexts) {
    if (ctx.size() != belief.opponent_count()) {
      throw std::invalid_argument("context length differs from opponent count");
    }
    const InducedMdp induced =
        induce_mdp(map, belief.point_mass(ctx), root, own_index, own_goal, rewards, gamma,
                   state_cap, options);
    total += static_cast<std::size_t>(induced.mdp.num_states);
    if (total > total_cap) {
      throw CapacityError("context MDPs exceed " + std::to_string(total_cap) + " states in total");
    }
    const ValueSolution sol = value_iteration(induced.mdp, tol);
    auto& table = out.tables_[ctx];
    for (std::size_t i = 0; i < induced.states.size(); ++i) {
      auto key = key_of(map.width(), induced.states[i]);
      auto [it, inserted] = out.index_.try_emplace(std::move(key), static_cast<int>(out.index_.size()));
      const auto gid = static_cast<std::size_t>(it->second);
      if (table.size() <= gid) table.resize(gid + 1, missing);
      const int s = static_cast<int>(i) + 2;
      for (int a = 0; a < induced.mdp.num_actions; ++a) {
        table[gid][static_cast<std::size_t>(a)] = sol.q[induced.mdp.row(s, a)];
      }
    }
  }
  return out;
}

ActionArray qmdp_scores(const JointState& state, const Belief& belief,
                        const ContextQTables& tables) {
  ActionArray scores{};
  for (const Context& ctx : enumerate_contexts(belief, std::numeric_limits<std::size_t>::max())) {
    const double w = belief.joint_probability(ctx);
    if (w <= 0.0) continue;
    const auto q = tables.q(ctx, state);
    if (!q) throw std::invalid_argument("no Q-table covers a context in the belief support");
    for (std::size_t a = 0; a < kNumActions; ++a) scores[a] += w * (*q)[a];
  }
  return scores;
}

MoveAction argmax_valid(const GridMap& map, Cell from, const ActionArray& scores) {
  MoveAction best = MoveAction::Stay;
  double best_score = kNegInf;
  bool any = false;
  for (MoveAction a : kAllActions) {
    if (!map.is_valid_move(from, a)) continue;
    const double v = scores[action_index(a)];
    if (!any || v > best_score) {
      best = a;
      best_score = v;
      any = true;
    }
  }
  return best;
}

MoveAction qmdp_action(const GridMap& map, const JointState& state, const Belief& belief,
                       const ContextQTables& tables) {
  return argmax_valid(map, state.positions.at(tables.own_index()),
                      qmdp_scores(state, belief, tables));
}

}  // namespace marp
