#pragma once

// Leaf evaluators for the tree-search planners.

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "marp/belief.hpp"
#include "marp/env.hpp"
#include "marp/ne_oracle.hpp"
#include "marp/rng.hpp"
#include "marp/solvers.hpp"

namespace marp {

enum class EvalKind { Zero, ShortestPath, Cbs, Qmdp, Mdp };

std::string_view to_string(EvalKind kind);
/// "zero", "sp", "cbs", "qmdp" or "mdp".
std::optional<EvalKind> parse_eval_kind(std::string_view text);

struct LeafEstimate {
  double value = 0.0;
  std::optional<ActionArray> prior;
};

class LeafEvaluator {
 public:
  virtual ~LeafEvaluator() = default;

  /// Estimated return from a non-terminal state.
  virtual LeafEstimate evaluate(const JointState& s, const Belief& b, Rng& rng) = 0;

  /// Scores per own action, used when the root itself is the frontier.
  /// Invalid actions may hold any value; callers mask them.
  virtual ActionArray action_scores(const JointState& s, const Belief& b, Rng& rng);
};

struct EvaluatorSetup {
  std::shared_ptr<const GridMap> map;
  int own_index = 0;
  Cell own_goal;
  /// Distances to own_goal.
  std::shared_ptr<const DistanceField> to_goal;
  RewardParams rewards;
  double gamma = kDefaultGamma;
  StepOptions step;
  NeEvalParams ne;
  /// Required by EvalKind::Qmdp.
  std::shared_ptr<const ContextQTables> qtables;
  std::size_t state_cap = kDefaultStateCap;
};

/// Throws std::invalid_argument when a required input is missing.
std::unique_ptr<LeafEvaluator> make_evaluator(EvalKind kind, const EvaluatorSetup& setup);

}  // namespace marp
