#pragma once

// Belief-induced MDPs, value iteration, per-context Q-tables and the QMDP rule.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "marp/belief.hpp"
#include "marp/env.hpp"

namespace marp {

struct RewardParams {
  double goal_reward = 1.0;
  double collision_penalty = -1.0;
  double step_reward = 0.0;

  void validate() const;
};

inline constexpr double kDefaultGamma = 0.95;
inline constexpr std::size_t kDefaultStateCap = 100000;

/// Raised when an MDP would exceed the configured state cap. Callers should
/// fall back to the tree-search planners.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hash of a per-agent cell-index key.
struct PositionKeyHash {
  std::size_t operator()(const std::vector<int>& key) const noexcept;
};

using PositionKey = std::vector<int>;
PositionKey position_key(const GridMap& map, const JointState& s);

struct Transition {
  int next = 0;
  double prob = 0.0;
};

/// Finite MDP over dense state ids. Per-(state, action) data lives at
/// row(s, a) = s * num_actions + a.
struct TabularMdp {
  int num_states = 0;
  int num_actions = static_cast<int>(kNumActions);
  double gamma = kDefaultGamma;
  std::vector<std::vector<Transition>> transitions;
  std::vector<double> rewards;
  /// Unavailable actions are skipped by the max in every backup.
  std::vector<std::uint8_t> available;
  std::vector<std::uint8_t> terminal;

  std::size_t row(int s, int a) const {
    return static_cast<std::size_t>(s) * num_actions + static_cast<std::size_t>(a);
  }
  double row_sum(int s, int a) const;
  /// Throws std::logic_error on malformed rows (bad ids, sums off by > tol,
  /// states without an available action).
  void validate(double tol = 1e-9) const;
};

struct ValueSolution {
  std::vector<double> values;
  /// Q(s, a) at row(s, a); unavailable actions hold -infinity.
  std::vector<double> q;
  std::vector<int> policy;
  int sweeps = 0;
  double residual = 0.0;
  /// Sup-norm change of every sweep.
  std::vector<double> residuals;
};

/// One synchronous Bellman optimality backup.
std::vector<double> bellman_backup(const TabularMdp& mdp, std::span<const double> values);

/// Synchronous value iteration until the sup-norm change drops below tol.
/// Greedy ties go to the lowest action id.
ValueSolution value_iteration(const TabularMdp& mdp, double tol = 1e-6, int max_sweeps = 1000000);

/// The belief-induced MDP over joint states reachable from a root state.
/// Two absorbing states aggregate "own goal reached" and "collision".
struct InducedMdp {
  TabularMdp mdp;
  int goal_state = 0;
  int collision_state = 1;
  /// Non-terminal joint states; states[i] has MDP id i + 2.
  std::vector<JointState> states;

  std::optional<int> find(const JointState& s) const;
  /// Own goal from construction; states with the own agent there map to goal_state.
  Cell own_goal;
  int own_index = 0;

 private:
  friend InducedMdp induce_mdp(const GridMap&, const Belief&, const JointState&, int, Cell,
                               const RewardParams&, double, std::size_t, StepOptions);
  int width_ = 0;
  std::unordered_map<PositionKey, int, PositionKeyHash> index_;
};

/// Opponent actions are marginalised through the belief; arrived opponents
/// stay put. Throws CapacityError past `state_cap` states.
InducedMdp induce_mdp(const GridMap& map, const Belief& belief, const JointState& root,
                      int own_index, Cell own_goal, const RewardParams& rewards,
                      double gamma = kDefaultGamma, std::size_t state_cap = kDefaultStateCap,
                      StepOptions options = {});

/// Sparse triplet dump: `T s a s' p` and `R s a r` lines.
void write_triplets(std::ostream& out, const InducedMdp& mdp);

/// One hypothesis index per opponent.
using Context = std::vector<std::size_t>;

/// Q-values of every context MDP keyed by a shared joint-state index.
class ContextQTables {
 public:
  std::size_t context_count() const { return tables_.size(); }
  bool contains(const Context& c) const { return tables_.count(c) != 0; }
  /// Q-row of context `c` at state `s`; nullopt when the context or the state
  /// is unknown.
  std::optional<ActionArray> q(const Context& c, const JointState& s) const;
  /// Own agent's index and goal used when the tables were built.
  int own_index() const { return own_index_; }
  Cell own_goal() const { return own_goal_; }
  std::vector<Context> contexts() const;

 private:
  friend ContextQTables solve_context_mdps(const GridMap&, const Belief&, std::span<const Context>,
                                           const JointState&, int, Cell, const RewardParams&,
                                           double, double, std::size_t, std::size_t, StepOptions);

  int own_index_ = 0;
  Cell own_goal_;
  int width_ = 0;
  std::unordered_map<PositionKey, int, PositionKeyHash> index_;
  std::map<Context, std::vector<ActionArray>> tables_;
};

/// Every combination of hypotheses with positive belief; throws
/// CapacityError when there are more than max_contexts.
std::vector<Context> enumerate_contexts(const Belief& belief, std::size_t max_contexts);

/// Solves the point-mass MDP of each context independently.
ContextQTables solve_context_mdps(const GridMap& map, const Belief& belief,
                                  std::span<const Context> contexts, const JointState& root,
                                  int own_index, Cell own_goal, const RewardParams& rewards,
                                  double gamma = kDefaultGamma, double tol = 1e-6,
                                  std::size_t state_cap = kDefaultStateCap,
                                  std::size_t total_cap = 20'000'000, StepOptions options = {});

/// sum_c b(c) * Q_c(S, a) for every own action. Throws std::invalid_argument
/// when a context in the support of b has no table or does not cover S.
ActionArray qmdp_scores(const JointState& state, const Belief& belief,
                        const ContextQTables& tables);

/// Argmax of qmdp_scores over valid own moves, first action on ties.
MoveAction qmdp_action(const GridMap& map, const JointState& state, const Belief& belief,
                       const ContextQTables& tables);

/// First valid own action maximising `scores`.
MoveAction argmax_valid(const GridMap& map, Cell from, const ActionArray& scores);

}  // namespace marp
