#pragma once

// Planner interface, the rule-based and MDP-based planners, tree-search
// wrappers, and construction from spec strings such as "esafe:K=3" or
// "mcts:sel=puct,budget=50,eval=cbs".

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marp/belief.hpp"
#include "marp/env.hpp"
#include "marp/ne_oracle.hpp"
#include "marp/opponents.hpp"
#include "marp/solvers.hpp"
#include "marp/tree_search.hpp"

namespace marp {

/// Per-family search defaults; any spec key overrides them.
struct SearchDefaults {
  int depth = 2;
  int eval_samples = 10;
  /// 0 = exact backup.
  int backup_samples = 0;
  int max_iter = 30;
  int select_samples = 50;
};

struct PlannerContext {
  std::shared_ptr<const GridMap> map;
  /// Shared by the planners of one episode; used from one thread only.
  std::shared_ptr<DistanceCache> distances;
  int self_index = 0;
  Cell goal;
  std::size_t agent_count = 0;
  double epsilon = 1e-3;
  RewardParams rewards;
  double gamma = kDefaultGamma;
  std::uint64_t seed = 0;
  StepOptions step;
  SearchDefaults search;
  double ne_w = 0.2;
  CbsLimits ne_limits{200, 20000, 0.0};
  std::size_t state_cap = kDefaultStateCap;
};

class Planner {
 public:
  virtual ~Planner() = default;

  /// Prepares for a new episode starting from `initial`. May throw
  /// CapacityError or std::invalid_argument.
  virtual void reset(const PlannerContext& ctx, const JointState& initial) = 0;
  virtual MoveAction act(const JointState& s) = 0;
  /// Called once per environment step with the state before the step and
  /// the realized joint actions (indexed by agent).
  virtual void observe(const JointState& before, std::span<const MoveAction> actions);
  virtual const Belief* belief() const { return nullptr; }

  /// Steps on which the planner degraded to the Safe rule.
  std::size_t fallbacks() const { return fallbacks_; }
  const std::string& last_warning() const { return last_warning_; }

 protected:
  void note_fallback(std::string why) {
    ++fallbacks_;
    last_warning_ = std::move(why);
  }
  void clear_fallbacks() {
    fallbacks_ = 0;
    last_warning_.clear();
  }

 private:
  std::size_t fallbacks_ = 0;
  std::string last_warning_;
};

/// `kind[:item,item,...]` where each item is `key=value` or a bare word.
struct PlannerSpec {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> items;

  static PlannerSpec parse(std::string_view text);
  std::string to_string() const;
  bool has(std::string_view key) const;
  /// Value of `key`; a bare word is returned for key "" by position.
  std::string get(std::string_view key, std::string_view fallback = "") const;
};

/// Throws std::invalid_argument for unknown kinds or keys.
std::unique_ptr<Planner> make_planner(const PlannerSpec& spec);
std::unique_ptr<Planner> make_planner(std::string_view spec);

/// Ignores opponents: the first shortest-path move, Stay at the goal.
MoveAction astar_act(const GridMap& map, const DistanceField& to_goal, const JointState& s,
                     int self_index);

/// Safe rule with the belief used only when no action is safe.
MoveAction safe_act(const GridMap& map, const DistanceField& to_goal, const JointState& s,
                    int self_index, const Belief* b);

/// Safe rule after freezing the given opponents into obstacles.
MoveAction enhanced_safe_act(const GridMap& map, Cell goal, const JointState& s, int self_index,
                             const Belief* b, std::span<const int> frozen_agents);

}  // namespace marp
