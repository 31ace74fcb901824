#include "marp/belief.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace marp {

std::size_t HypothesisSet::find_goal(Cell goal) const {
  for (std::size_t k = 0; k < policies.size(); ++k) {
    if (policies[k].goal() == goal) return k;
  }
  return policies.size();
}

void FactoredActionDist::for_each_joint(
    const std::function<void(std::span<const MoveAction>, double)>& fn) const {
  const std::size_t n = marginals.size();
  std::vector<MoveAction> actions(n, MoveAction::Up);
  // Per-opponent supports in tie-break order.
  std::vector<std::vector<MoveAction>> support(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (MoveAction a : kAllActions) {
      if (marginals[j][action_index(a)] > 0.0) support[j].push_back(a);
    }
    if (support[j].empty()) return;
  }
  std::vector<std::size_t> digit(n, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      actions[j] = support[j][digit[j]];
      p *= marginals[j][action_index(actions[j])];
    }
    fn(actions, p);
    std::size_t j = n;
    while (j > 0) {
      --j;
      if (++digit[j] < support[j].size()) break;
      digit[j] = 0;
      if (j == 0) return;
    }
    if (n == 0) return;
  }
}

std::size_t FactoredActionDist::support_size() const {
  std::size_t total = 1;
  for (const auto& m : marginals) {
    total *= static_cast<std::size_t>(
        std::count_if(m.begin(), m.end(), [](double p) { return p > 0.0; }));
  }
  return total;
}

Belief::Belief(std::vector<int> opponent_agents,
               std::vector<std::shared_ptr<const HypothesisSet>> hypotheses)
    : agents_(std::move(opponent_agents)), sets_(std::move(hypotheses)) {
  if (agents_.size() != sets_.size()) {
    throw std::invalid_argument("belief: one hypothesis set per opponent required");
  }
  probs_.reserve(sets_.size());
  for (const auto& set : sets_) {
    if (!set || set->size() == 0) throw std::invalid_argument("belief: empty hypothesis set");
    probs_.emplace_back(set->size(), 1.0 / static_cast<double>(set->size()));
  }
}

void Belief::set_probabilities(std::size_t opponent, std::vector<double> probs) {
  if (probs.size() != sets_.at(opponent)->size()) {
    throw std::invalid_argument("belief: probability vector has the wrong length");
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("belief: probabilities sum to zero");
  for (double& p : probs) {
    if (p < 0.0) throw std::invalid_argument("belief: negative probability");
    p /= total;
  }
  probs_[opponent] = std::move(probs);
}

double Belief::joint_probability(std::span<const std::size_t> context) const {
  if (context.size() != probs_.size()) throw std::invalid_argument("belief: context size");
  double p = 1.0;
  for (std::size_t j = 0; j < context.size(); ++j) p *= probs_[j].at(context[j]);
  return p;
}

Belief Belief::point_mass(std::span<const std::size_t> context) const {
  if (context.size() != probs_.size()) throw std::invalid_argument("belief: context size");
  Belief out = *this;
  for (std::size_t j = 0; j < context.size(); ++j) {
    std::fill(out.probs_[j].begin(), out.probs_[j].end(), 0.0);
    out.probs_[j].at(context[j]) = 1.0;
  }
  return out;
}

ActionArray Belief::marginal(std::size_t opponent, Cell position) const {
  ActionArray out{};
  const auto& set = *sets_[opponent];
  const auto& probs = probs_[opponent];
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (probs[k] == 0.0) continue;
    const ActionArray d = set.policies[k].action_dist(position);
    for (std::size_t a = 0; a < kNumActions; ++a) out[a] += probs[k] * d[a];
  }
  return out;
}

std::string Belief::serialize() const {
  std::string out;
  char buf[40];
  for (std::size_t j = 0; j < probs_.size(); ++j) {
    out += std::to_string(agents_[j]);
    out += ':';
    for (std::size_t k = 0; k < probs_[j].size(); ++k) {
      std::snprintf(buf, sizeof buf, "%a", probs_[j][k]);
      if (k) out += ',';
      out += buf;
    }
    out += ';';
  }
  return out;
}

std::string Belief::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t j = 0; j < probs_.size(); ++j) {
    nlohmann::json entry;
    entry["agent"] = agents_[j];
    nlohmann::json goals = nlohmann::json::array();
    for (std::size_t k = 0; k < probs_[j].size(); ++k) {
      goals.push_back({{"goal", to_string(sets_[j]->policies[k].goal())}, {"p", probs_[j][k]}});
    }
    entry["hypotheses"] = std::move(goals);
    doc.push_back(std::move(entry));
  }
  return doc.dump(2);
}

bool Belief::operator==(const Belief& other) const {
  return agents_ == other.agents_ && probs_ == other.probs_;
}

std::shared_ptr<const HypothesisSet> make_goal_hypotheses(DistanceCache& distances, Cell own_goal,
                                                         double epsilon, bool include_own_goal) {
  auto set = std::make_shared<HypothesisSet>();
  for (Cell c : distances.map()->passable_cells()) {
    if (c == own_goal && !include_own_goal) continue;
    set->policies.emplace_back(distances.map(), distances.get(c), epsilon);
  }
  return set;
}

Belief init_belief(DistanceCache& distances, std::span<const int> opponent_agents, Cell own_goal,
                   double epsilon, bool include_own_goal) {
  auto set = make_goal_hypotheses(distances, own_goal, epsilon, include_own_goal);
  std::vector<std::shared_ptr<const HypothesisSet>> sets(opponent_agents.size(), set);
  return Belief({opponent_agents.begin(), opponent_agents.end()}, std::move(sets));
}

std::vector<double> tempered_posterior(std::span<const double> prior,
                                       std::span<const double> likelihood,
                                       BeliefTemperature temperature) {
  if (prior.size() != likelihood.size()) {
    throw std::invalid_argument("tempered_posterior: size mismatch");
  }
  const std::size_t n = prior.size();
  std::vector<double> w(n);
  double best = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = likelihood[k] * prior[k];
    best = std::max(best, w[k]);
  }
  if (!(best > 0.0)) return {prior.begin(), prior.end()};

  if (temperature.hard_max) {
    const double cut = best * (1.0 - 1e-12);
    std::size_t count = 0;
    for (double& x : w) {
      x = x >= cut ? 1.0 : 0.0;
      count += x > 0.0;
    }
    for (double& x : w) x /= static_cast<double>(count);
    return w;
  }

  if (temperature.beta != 1.0) {
    if (!(temperature.beta > 0.0)) throw std::invalid_argument("belief temperature must be > 0");
    const double log_best = std::log(best);
    for (double& x : w) {
      x = x > 0.0 ? std::exp((std::log(x) - log_best) / temperature.beta) : 0.0;
    }
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

Belief update(const Belief& belief, const JointState& state,
              std::span<const MoveAction> joint_actions, BeliefTemperature temperature) {
  Belief out = belief;
  std::vector<double> likelihood;
  for (std::size_t j = 0; j < belief.opponent_count(); ++j) {
    const int agent = belief.agent_index(j);
    const Cell pos = state.positions.at(agent);
    const MoveAction a = joint_actions[agent];
    const auto& set = belief.hypotheses(j);
    const auto prior = belief.probabilities(j);
    likelihood.assign(set.size(), 0.0);
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (prior[k] == 0.0) continue;
      likelihood[k] = set.policies[k].probability(pos, a);
    }
    out.set_probabilities(j, tempered_posterior(prior, likelihood, temperature));
  }
  return out;
}

FactoredActionDist joint_action_dist(const Belief& belief, const JointState& state) {
  FactoredActionDist dist;
  dist.agents.assign(belief.agents().begin(), belief.agents().end());
  dist.marginals.reserve(belief.opponent_count());
  for (std::size_t j = 0; j < belief.opponent_count(); ++j) {
    const int agent = belief.agent_index(j);
    if (state.arrived.at(agent)) {
      ActionArray stay{};
      stay[action_index(MoveAction::Stay)] = 1.0;
      dist.marginals.push_back(stay);
    } else {
      dist.marginals.push_back(belief.marginal(j, state.positions.at(agent)));
    }
  }
  return dist;
}

std::vector<std::size_t> detect_stationary(std::span<const std::vector<Cell>> position_history,
                                           int k) {
  std::vector<std::size_t> flagged;
  if (k < 1) return flagged;
  for (std::size_t j = 0; j < position_history.size(); ++j) {
    const auto& h = position_history[j];
    if (static_cast<int>(h.size()) < k) continue;
    const Cell last = h.back();
    if (std::all_of(h.end() - k, h.end(), [last](Cell c) { return c == last; })) {
      flagged.push_back(j);
    }
  }
  return flagged;
}

}  // namespace marp
