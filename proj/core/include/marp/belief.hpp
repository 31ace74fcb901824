#pragma once

// Factored belief over opponent types with the tempered Bayesian update.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "marp/env.hpp"
#include "marp/opponents.hpp"

namespace marp {

/// Hypothesis policies attributed to one opponent. Usually shared by every
/// opponent of one modelling agent.
struct HypothesisSet {
  std::vector<HypothesisPolicy> policies;

  std::size_t size() const { return policies.size(); }
  /// Index of the hypothesis whose goal is `goal`, or size() if absent.
  std::size_t find_goal(Cell goal) const;
};

/// Temperature of the update. beta = 1 is exact Bayes; the hard-max marker is
/// the beta -> 0 limit.
struct BeliefTemperature {
  double beta = 1.0;
  bool hard_max = false;

  static BeliefTemperature bayes() { return {}; }
  static BeliefTemperature hardmax() { return {1.0, true}; }
};

/// Per-opponent action marginals P(a_j | S) = sum_k b(k) pi_k(a_j | S).
/// The joint opponent distribution is their product.
struct FactoredActionDist {
  std::vector<int> agents;
  std::vector<ActionArray> marginals;

  /// Calls fn(actions, probability) for every joint opponent action with
  /// positive probability; `actions` is indexed like `agents`.
  void for_each_joint(
      const std::function<void(std::span<const MoveAction>, double)>& fn) const;
  std::size_t support_size() const;
};

class Belief {
 public:
  Belief() = default;
  /// Uniform prior over each opponent's hypothesis set.
  Belief(std::vector<int> opponent_agents,
         std::vector<std::shared_ptr<const HypothesisSet>> hypotheses);

  std::size_t opponent_count() const { return agents_.size(); }
  int agent_index(std::size_t opponent) const { return agents_[opponent]; }
  std::span<const int> agents() const { return agents_; }
  const HypothesisSet& hypotheses(std::size_t opponent) const { return *sets_[opponent]; }
  const std::shared_ptr<const HypothesisSet>& hypothesis_set(std::size_t opponent) const {
    return sets_[opponent];
  }
  std::span<const double> probabilities(std::size_t opponent) const { return probs_[opponent]; }

  /// Replaces one opponent's distribution (normalised on the way in).
  void set_probabilities(std::size_t opponent, std::vector<double> probs);
  /// Product probability of one joint hypothesis (one index per opponent).
  double joint_probability(std::span<const std::size_t> context) const;
  /// Point mass on one hypothesis per opponent.
  Belief point_mass(std::span<const std::size_t> context) const;

  ActionArray marginal(std::size_t opponent, Cell position) const;

  /// Exact textual form (round-trippable doubles); equal strings mean
  /// bit-equal beliefs.
  std::string serialize() const;
  /// Structured document: per opponent, goal -> probability pairs.
  std::string to_json() const;

  bool operator==(const Belief& other) const;

 private:
  std::vector<int> agents_;
  std::vector<std::shared_ptr<const HypothesisSet>> sets_;
  std::vector<std::vector<double>> probs_;
};

/// One hypothesis policy per passable cell, excluding `own_goal` unless
/// `include_own_goal` is set.
std::shared_ptr<const HypothesisSet> make_goal_hypotheses(DistanceCache& distances, Cell own_goal,
                                                         double epsilon,
                                                         bool include_own_goal = false);

Belief init_belief(DistanceCache& distances, std::span<const int> opponent_agents, Cell own_goal,
                   double epsilon, bool include_own_goal = false);

/// Tempered posterior of one distribution:
/// p'(k) proportional to (likelihood(k) * prior(k))^(1/beta).
/// Hard-max returns the uniform distribution over the argmax set of the
/// untempered products. If every product is zero the prior is returned.
std::vector<double> tempered_posterior(std::span<const double> prior,
                                       std::span<const double> likelihood,
                                       BeliefTemperature temperature);

/// Updates every opponent independently from its observed action at S.
/// `joint_actions` is indexed by agent (all agents, not only opponents).
Belief update(const Belief& belief, const JointState& state,
              std::span<const MoveAction> joint_actions,
              BeliefTemperature temperature = BeliefTemperature::bayes());

/// Arrived opponents are pinned to Stay.
FactoredActionDist joint_action_dist(const Belief& belief, const JointState& state);

/// Opponents whose last K recorded positions coincide. Histories are
/// indexed by opponent; the result lists opponent indices.
std::vector<std::size_t> detect_stationary(std::span<const std::vector<Cell>> position_history,
                                           int k);

}  // namespace marp
