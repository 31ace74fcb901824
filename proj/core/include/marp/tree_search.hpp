#pragma once

// Opponent-modelling tree search: layered uniform expectimax and MCTS.
// MAX nodes branch on own actions, EXP nodes on opponent joint actions.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "marp/belief.hpp"
#include "marp/env.hpp"
#include "marp/evaluators.hpp"
#include "marp/rng.hpp"
#include "marp/solvers.hpp"

namespace marp {

enum class Selection { None, Uct, Puct };

struct TsConfig {
  /// Levels with belief updates along edges.
  int n = 2;
  /// Further levels with the belief frozen.
  int m = 0;
  /// 0 = exact backup, k > 0 = mean of k sampled opponent joint actions.
  int backup_samples = 0;
  Selection selection = Selection::None;
  double uct_c = std::sqrt(2.0);
  double puct_c1 = 1.25;
  double puct_c2 = 19625.0;
  /// MCTS iterations.
  int budget = 50;
  /// Hypothesis draws per opponent for the mean policy at EXP nodes.
  int select_samples = 50;
  /// Hard cap on tree size; exceeding it raises SearchBudgetExceeded.
  std::size_t node_budget = 2'000'000;
};

/// How the tree simulates one step. Opponents' arrival flags are frozen at
/// the root; the own agent terminates on reaching its goal or colliding.
struct SearchModel {
  const GridMap* map = nullptr;
  int own_index = 0;
  Cell own_goal;
  RewardParams rewards;
  double gamma = kDefaultGamma;
  StepOptions step;
  BeliefTemperature temperature = BeliefTemperature::bayes();
};

struct Outcome {
  JointState next;
  double reward = 0.0;
  bool terminal = false;
};

/// `opponent_actions` is indexed like belief opponents (agents()).
Outcome simulate(const SearchModel& model, const JointState& s, MoveAction own,
                 std::span<const int> opponent_agents, std::span<const MoveAction> opponent_actions);

class SearchBudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchNode {
  enum class Type { Max, Exp };

  Type type = Type::Max;
  JointState state;
  std::shared_ptr<const Belief> belief;
  int height = 0;
  /// EXP: the own action taken. MAX: unused.
  MoveAction own_action = MoveAction::Stay;
  /// MAX: opponent joint action that led here (belief opponent order).
  std::vector<MoveAction> opponent_actions;
  /// MAX under an exact/sampled EXP: weight of this branch.
  double prob = 1.0;
  /// MAX: reward of the transition into this node.
  double reward = 0.0;
  bool terminal = false;
  /// Uniform search: backed-up value. MCTS: sum of returns.
  double v = 0.0;
  int N = 0;
  std::optional<ActionArray> prior;
  std::vector<std::unique_ptr<SearchNode>> children;
  /// MCTS EXP nodes: per-opponent mean action distribution.
  std::vector<ActionArray> mean_policy;

  double mean() const { return N > 0 ? v / N : 0.0; }
};

struct SearchResult {
  MoveAction action = MoveAction::Stay;
  double root_value = 0.0;
  std::unique_ptr<SearchNode> root;
  std::size_t nodes = 0;
  int iterations = 0;
};

/// Depth n+m expectimax with leaf evaluation at the frontier. With n = m = 0
/// the root is the frontier and the action maximises the evaluator's
/// per-action scores. Ties go to the first action in Up, Down, Left, Right,
/// Stay order. Throws SearchBudgetExceeded past cfg.node_budget.
SearchResult uniform_ts_act(const SearchModel& model, const JointState& s,
                            std::shared_ptr<const Belief> b, const TsConfig& cfg,
                            LeafEvaluator& eval, Rng& rng);

/// UCT score: mean + c * sqrt(ln N_parent / N_child).
double uct_score(double mean, int parent_visits, int child_visits, double c);
/// pUCT score: mean + prior * sqrt(ln N_parent / N_child) * (c1 + ln((N_parent + c2) / c2)).
double puct_score(double mean, double prior, int parent_visits, int child_visits, double c1,
                  double c2);

/// Anytime MCTS with cfg.budget iterations; returns the most visited root
/// action. MAX nodes at height n + m are frontier leaves. Throws SearchBudgetExceeded if no iteration could complete.
SearchResult mcts_act(const SearchModel& model, const JointState& s,
                      std::shared_ptr<const Belief> b, const TsConfig& cfg, LeafEvaluator& eval,
                      Rng& rng);

}  // namespace marp
