#include "marp/tree_search.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <unordered_map>

namespace marp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using BeliefPtr = std::shared_ptr<const Belief>;
using BeliefCache = std::map<std::vector<MoveAction>, BeliefPtr>;

std::vector<MoveAction> by_agent(const JointState& s, std::span<const int> agents,
                                 std::span<const MoveAction> actions) {
  std::vector<MoveAction> out(s.size(), MoveAction::Stay);
  for (std::size_t k = 0; k < agents.size(); ++k) out[static_cast<std::size_t>(agents[k])] = actions[k];
  return out;
}

BeliefPtr child_belief(const SearchModel& model, const SearchNode& parent, int n,
                       std::span<const MoveAction> opp, BeliefCache* cache) {
  if (parent.height >= n) return parent.belief;
  std::vector<MoveAction> key(opp.begin(), opp.end());
  if (cache) {
    const auto it = cache->find(key);
    if (it != cache->end()) return it->second;
  }
  const auto joint = by_agent(parent.state, parent.belief->agents(), opp);
  auto b = std::make_shared<const Belief>(
      update(*parent.belief, parent.state, joint, model.temperature));
  if (cache) cache->emplace(std::move(key), b);
  return b;
}

struct LeafKey {
  PositionKey positions;
  const Belief* belief;
  bool operator==(const LeafKey&) const = default;
};

struct LeafKeyHash {
  std::size_t operator()(const LeafKey& k) const noexcept {
    return PositionKeyHash{}(k.positions) ^ (std::hash<const void*>{}(k.belief) * 31);
  }
};

class Uniform {
 public:
  Uniform(const SearchModel& model, const TsConfig& cfg, LeafEvaluator& eval, Rng& rng)
      : model_(model), cfg_(cfg), eval_(eval), rng_(rng) {}

  std::size_t nodes() const { return nodes_; }

  void max_node(SearchNode& node, int depth) {
    count();
    if (depth == cfg_.n + cfg_.m) {
      const LeafEstimate e = leaf(node);
      node.v = e.value;
      node.prior = e.prior;
      return;
    }
    const Cell me = node.state.positions[model_.own_index];
    BeliefCache cache;
    double best = kNegInf;
    for (MoveAction a : kAllActions) {
      if (!model_.map->is_valid_move(me, a)) continue;
      auto child = std::make_unique<SearchNode>();
      child->type = SearchNode::Type::Exp;
      child->state = node.state;
      child->belief = node.belief;
      child->height = node.height;
      child->own_action = a;
      exp_node(*child, depth, cache);
      best = std::max(best, child->v);
      node.children.push_back(std::move(child));
    }
    node.v = best;
  }

 private:
  void count() {
    if (++nodes_ > cfg_.node_budget) throw SearchBudgetExceeded("tree search node budget exhausted");
  }

  LeafEstimate leaf(const SearchNode& node) {
    LeafKey key{key_of(node.state), node.belief.get()};
    const auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    LeafEstimate e = eval_.evaluate(node.state, *node.belief, rng_);
    memo_.emplace(std::move(key), e);
    return e;
  }

  PositionKey key_of(const JointState& s) const { return position_key(*model_.map, s); }

  void exp_node(SearchNode& node, int depth, BeliefCache& cache) {
    count();
    const FactoredActionDist dist = joint_action_dist(*node.belief, node.state);
    std::vector<std::pair<std::vector<MoveAction>, double>> branches;
    if (cfg_.backup_samples <= 0) {
      dist.for_each_joint([&](std::span<const MoveAction> acts, double p) {
        branches.emplace_back(std::vector<MoveAction>(acts.begin(), acts.end()), p);
      });
    } else {
      std::map<std::vector<MoveAction>, int> counts;
      std::vector<MoveAction> acts(dist.marginals.size());
      for (int k = 0; k < cfg_.backup_samples; ++k) {
        for (std::size_t j = 0; j < acts.size(); ++j) {
          const std::size_t a = rng_.categorical(dist.marginals[j]);
          acts[j] = a < kNumActions ? kAllActions[a] : MoveAction::Stay;
        }
        ++counts[acts];
      }
      for (const auto& [acts_k, c] : counts) {
        branches.emplace_back(acts_k, static_cast<double>(c) / cfg_.backup_samples);
      }
    }

    const auto agents = node.belief->agents();
    double value = 0.0;
    for (auto& [acts, p] : branches) {
      const Outcome out = simulate(model_, node.state, node.own_action, agents, acts);
      auto child = std::make_unique<SearchNode>();
      child->type = SearchNode::Type::Max;
      child->height = node.height + 1;
      child->prob = p;
      child->reward = out.reward;
      child->terminal = out.terminal;
      child->belief = child_belief(model_, node, cfg_.n, acts, &cache);
      child->state = out.next;
      child->opponent_actions = std::move(acts);
      if (!out.terminal) {
        max_node(*child, depth + 1);
      } else {
        count();
      }
      value += p * (child->reward + model_.gamma * child->v);
      node.children.push_back(std::move(child));
    }
    node.v = value;
  }

  const SearchModel& model_;
  const TsConfig& cfg_;
  LeafEvaluator& eval_;
  Rng& rng_;
  std::size_t nodes_ = 0;
  std::unordered_map<LeafKey, LeafEstimate, LeafKeyHash> memo_;
};

std::vector<MoveAction> valid_actions(const GridMap& map, Cell from) {
  std::vector<MoveAction> out;
  for (MoveAction a : kAllActions) {
    if (map.is_valid_move(from, a)) out.push_back(a);
  }
  return out;
}

class Mcts {
 public:
  Mcts(const SearchModel& model, const TsConfig& cfg, LeafEvaluator& eval, Rng& rng)
      : model_(model), cfg_(cfg), eval_(eval), rng_(rng) {}

  std::size_t nodes() const { return nodes_; }

  // One select/expand/evaluate/backup pass.
  void iterate(SearchNode& root) {
    std::vector<SearchNode*> path{&root};
    SearchNode* node = &root;
    double leaf_value = 0.0;
    while (true) {
      // MAX node.
      SearchNode* exp = nullptr;
      bool fresh = false;
      const Cell me = node->state.positions[model_.own_index];
      for (MoveAction a : valid_actions(*model_.map, me)) {
        const bool tried = std::any_of(node->children.begin(), node->children.end(),
                                       [&](const auto& c) { return c->own_action == a; });
        if (!tried) {
          exp = add_exp(*node, a);
          fresh = true;
          break;
        }
      }
      if (!exp) exp = select(*node);
      path.push_back(exp);

      // EXP node: sample the opponents' joint action.
      std::vector<MoveAction> acts(exp->mean_policy.size());
      for (std::size_t j = 0; j < acts.size(); ++j) {
        const std::size_t a = rng_.categorical(exp->mean_policy[j]);
        acts[j] = a < kNumActions ? kAllActions[a] : MoveAction::Stay;
      }
      SearchNode* next = nullptr;
      if (!fresh) {
        for (auto& c : exp->children) {
          if (c->opponent_actions == acts) {
            next = c.get();
            break;
          }
        }
      }
      if (!next) {
        next = add_max(*exp, std::move(acts));
        path.push_back(next);
        if (!next->terminal) {
          const LeafEstimate e = eval_.evaluate(next->state, *next->belief, rng_);
          next->prior = e.prior;
          leaf_value = e.value;
        }
        break;
      }
      path.push_back(next);
      if (next->terminal) break;
      if (next->height >= horizon()) {
        // Frontier node: reuse its leaf estimate.
        leaf_value = next->mean();
        break;
      }
      node = next;
    }

    // Backup from the leaf.
    double g = leaf_value;
    for (std::size_t i = path.size(); i-- > 0;) {
      SearchNode* n = path[i];
      if (n->type == SearchNode::Type::Exp) {
        g = path[i + 1]->reward + model_.gamma * g;
      }
      n->v += g;
      n->N += 1;
    }
  }

  void ensure_prior(SearchNode& root) {
    if (cfg_.selection == Selection::Puct && !root.prior) {
      root.prior = eval_.evaluate(root.state, *root.belief, rng_).prior;
    }
  }

 private:
  int horizon() const {
    const long h = static_cast<long>(cfg_.n) + cfg_.m;
    return h > std::numeric_limits<int>::max() ? std::numeric_limits<int>::max() : static_cast<int>(h);
  }

  void count() {
    if (++nodes_ > cfg_.node_budget) throw SearchBudgetExceeded("MCTS node budget exhausted");
  }

  SearchNode* add_exp(SearchNode& parent, MoveAction a) {
    count();
    auto child = std::make_unique<SearchNode>();
    child->type = SearchNode::Type::Exp;
    child->state = parent.state;
    child->belief = parent.belief;
    child->height = parent.height;
    child->own_action = a;
    // Mean opponent policy from sampled hypotheses.
    const Belief& b = *parent.belief;
    child->mean_policy.resize(b.opponent_count());
    const int draws = std::max(1, cfg_.select_samples);
    for (std::size_t j = 0; j < b.opponent_count(); ++j) {
      const auto agent = static_cast<std::size_t>(b.agent_index(j));
      ActionArray& pol = child->mean_policy[j];
      pol.fill(0.0);
      if (parent.state.arrived[agent]) {
        pol[action_index(MoveAction::Stay)] = 1.0;
        continue;
      }
      const auto probs = b.probabilities(j);
      const auto& set = b.hypotheses(j);
      const Cell pos = parent.state.positions[agent];
      for (int d = 0; d < draws; ++d) {
        const std::size_t k = rng_.categorical(probs);
        if (k >= set.size()) continue;
        const ActionArray pk = set.policies[k].action_dist(pos);
        for (std::size_t x = 0; x < kNumActions; ++x) pol[x] += pk[x] / draws;
      }
    }
    parent.children.push_back(std::move(child));
    return parent.children.back().get();
  }

  SearchNode* add_max(SearchNode& exp, std::vector<MoveAction> acts) {
    count();
    const Outcome out = simulate(model_, exp.state, exp.own_action, exp.belief->agents(), acts);
    auto child = std::make_unique<SearchNode>();
    child->type = SearchNode::Type::Max;
    child->height = exp.height + 1;
    child->reward = out.reward;
    child->terminal = out.terminal;
    child->belief = out.terminal ? exp.belief : child_belief(model_, exp, cfg_.n, acts, nullptr);
    child->state = out.next;
    child->opponent_actions = std::move(acts);
    exp.children.push_back(std::move(child));
    return exp.children.back().get();
  }

  SearchNode* select(SearchNode& node) {
    SearchNode* best = nullptr;
    double best_score = kNegInf;
    const std::size_t valid = node.children.size();
    for (auto& c : node.children) {
      double score;
      if (cfg_.selection == Selection::Puct) {
        const double p = node.prior ? (*node.prior)[action_index(c->own_action)] : 1.0 / valid;
        score = puct_score(c->mean(), p, node.N, c->N, cfg_.puct_c1, cfg_.puct_c2);
      } else {
        score = uct_score(c->mean(), node.N, c->N, cfg_.uct_c);
      }
      if (!best || score > best_score) {
        best = c.get();
        best_score = score;
      }
    }
    return best;
  }

  const SearchModel& model_;
  const TsConfig& cfg_;
  LeafEvaluator& eval_;
  Rng& rng_;
  std::size_t nodes_ = 0;
};

}  // namespace

Outcome simulate(const SearchModel& model, const JointState& s, MoveAction own,
                 std::span<const int> opponent_agents, std::span<const MoveAction> opponent_actions) {
  Outcome out;
  out.next = s;
  const GridMap& map = *model.map;
  const Cell from = s.positions[model.own_index];
  const Cell to = map.target(from, own);
  out.next.positions[model.own_index] = to;
  bool hit = false;
  for (std::size_t k = 0; k < opponent_agents.size(); ++k) {
    const auto agent = static_cast<std::size_t>(opponent_agents[k]);
    const Cell of = s.positions[agent];
    const Cell ot = s.arrived[agent] ? of : map.target(of, opponent_actions[k]);
    out.next.positions[agent] = ot;
    if (model.step.goal_ghosting && s.arrived[agent]) continue;
    if (ot == to || (ot == from && to == of && from != of)) hit = true;
  }
  if (hit) {
    out.reward = model.rewards.collision_penalty;
    out.terminal = true;
  } else if (to == model.own_goal) {
    out.reward = model.rewards.goal_reward;
    out.terminal = true;
    out.next.arrived[model.own_index] = 1;
  } else {
    out.reward = model.rewards.step_reward;
  }
  return out;
}

SearchResult uniform_ts_act(const SearchModel& model, const JointState& s,
                            std::shared_ptr<const Belief> b, const TsConfig& cfg,
                            LeafEvaluator& eval, Rng& rng) {
  SearchResult result;
  result.root = std::make_unique<SearchNode>();
  SearchNode& root = *result.root;
  root.state = s;
  root.belief = std::move(b);
  const Cell me = s.positions[model.own_index];
  if (me == model.own_goal) {
    result.action = MoveAction::Stay;
    return result;
  }

  if (cfg.n + cfg.m == 0) {
    const ActionArray scores = eval.action_scores(s, *root.belief, rng);
    result.action = argmax_valid(*model.map, me, scores);
    result.root_value = scores[action_index(result.action)];
    root.v = result.root_value;
    result.nodes = 1;
    return result;
  }

  Uniform search(model, cfg, eval, rng);
  search.max_node(root, 0);
  result.nodes = search.nodes();
  result.root_value = root.v;
  double best = kNegInf;
  for (const auto& c : root.children) {
    if (c->v > best) {
      best = c->v;
      result.action = c->own_action;
    }
  }
  return result;
}

double uct_score(double mean, int parent_visits, int child_visits, double c) {
  if (child_visits <= 0) return std::numeric_limits<double>::infinity();
  const double lp = parent_visits > 0 ? std::log(static_cast<double>(parent_visits)) : 0.0;
  return mean + c * std::sqrt(lp / child_visits);
}

double puct_score(double mean, double prior, int parent_visits, int child_visits, double c1,
                  double c2) {
  if (child_visits <= 0) return std::numeric_limits<double>::infinity();
  const double np = static_cast<double>(parent_visits);
  const double lp = parent_visits > 0 ? std::log(np) : 0.0;
  return mean + prior * std::sqrt(lp / child_visits) * (c1 + std::log((np + c2) / c2));
}

SearchResult mcts_act(const SearchModel& model, const JointState& s,
                      std::shared_ptr<const Belief> b, const TsConfig& cfg, LeafEvaluator& eval,
                      Rng& rng) {
  if (cfg.budget <= 0) throw std::invalid_argument("MCTS budget must be positive");
  SearchResult result;
  result.root = std::make_unique<SearchNode>();
  SearchNode& root = *result.root;
  root.state = s;
  root.belief = std::move(b);
  const Cell me = s.positions[model.own_index];
  if (me == model.own_goal) return result;

  const auto valid = valid_actions(*model.map, me);
  const int budget = valid.size() == 1 ? 1 : cfg.budget;
  Mcts search(model, cfg, eval, rng);
  search.ensure_prior(root);
  for (int it = 0; it < budget; ++it) {
    try {
      search.iterate(root);
    } catch (const SearchBudgetExceeded&) {
      if (result.iterations == 0) throw;
      break;
    }
    ++result.iterations;
  }
  result.nodes = search.nodes();
  int best_n = -1;
  for (const auto& c : root.children) {
    if (c->N > best_n) {
      best_n = c->N;
      result.action = c->own_action;
      result.root_value = c->mean();
    }
  }
  return result;
}

}  // namespace marp
