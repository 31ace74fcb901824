#include "marp/evaluators.hpp"

#include <cmath>
#include <stdexcept>

namespace marp {

namespace {

class ZeroEvaluator final : public LeafEvaluator {
 public:
  LeafEstimate evaluate(const JointState&, const Belief&, Rng&) override { return {}; }
};

class ShortestPathEvaluator final : public LeafEvaluator {
 public:
  explicit ShortestPathEvaluator(EvaluatorSetup setup) : s_(std::move(setup)) {}

  LeafEstimate evaluate(const JointState& s, const Belief&, Rng&) override {
    return {discounted(s_.to_goal->at(s.positions[s_.own_index])), std::nullopt};
  }

  ActionArray action_scores(const JointState& s, const Belief&, Rng&) override {
    ActionArray out{};
    const Cell me = s.positions[s_.own_index];
    for (MoveAction a : kAllActions) {
      out[action_index(a)] = discounted(s_.to_goal->at(s_.map->target(me, a)));
    }
    return out;
  }

 private:
  double discounted(int d) const {
    if (d == DistanceField::kUnreachable) return 0.0;
    return std::pow(s_.gamma, d) * s_.rewards.goal_reward;
  }

  EvaluatorSetup s_;
};

class CbsEvaluator final : public LeafEvaluator {
 public:
  explicit CbsEvaluator(EvaluatorSetup setup) : s_(std::move(setup)) {}

  LeafEstimate evaluate(const JointState& s, const Belief& b, Rng& rng) override {
    const NeEvalResult r = ne_eval(*s_.map, s, b, s_.own_index, s_.own_goal, s_.ne, rng);
    return {r.value, r.prior};
  }

  ActionArray action_scores(const JointState& s, const Belief& b, Rng& rng) override {
    return ne_eval(*s_.map, s, b, s_.own_index, s_.own_goal, s_.ne, rng).prior;
  }

 private:
  EvaluatorSetup s_;
};

class QmdpEvaluator final : public LeafEvaluator {
 public:
  explicit QmdpEvaluator(EvaluatorSetup setup) : s_(std::move(setup)) {}

  LeafEstimate evaluate(const JointState& s, const Belief& b, Rng&) override {
    const ActionArray q = qmdp_scores(s, b, *s_.qtables);
    const Cell me = s.positions[s_.own_index];
    return {q[action_index(argmax_valid(*s_.map, me, q))], std::nullopt};
  }

  ActionArray action_scores(const JointState& s, const Belief& b, Rng&) override {
    return qmdp_scores(s, b, *s_.qtables);
  }

 private:
  EvaluatorSetup s_;
};

class MdpEvaluator final : public LeafEvaluator {
 public:
  explicit MdpEvaluator(EvaluatorSetup setup) : s_(std::move(setup)) {}

  LeafEstimate evaluate(const JointState& s, const Belief& b, Rng& rng) override {
    const ActionArray q = action_scores(s, b, rng);
    const Cell me = s.positions[s_.own_index];
    return {q[action_index(argmax_valid(*s_.map, me, q))], std::nullopt};
  }

  ActionArray action_scores(const JointState& s, const Belief& b, Rng&) override {
    const InducedMdp m = induce_mdp(*s_.map, b, s, s_.own_index, s_.own_goal, s_.rewards,
                                    s_.gamma, s_.state_cap, s_.step);
    const ValueSolution sol = value_iteration(m.mdp);
    ActionArray out{};
    const auto id = m.find(s);
    if (!id) return out;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      out[a] = sol.q[m.mdp.row(*id, static_cast<int>(a))];
    }
    return out;
  }

 private:
  EvaluatorSetup s_;
};

}  // namespace

ActionArray LeafEvaluator::action_scores(const JointState& s, const Belief& b, Rng& rng) {
  const LeafEstimate e = evaluate(s, b, rng);
  return e.prior.value_or(ActionArray{});
}

std::string_view to_string(EvalKind kind) {
  switch (kind) {
    case EvalKind::Zero: return "zero";
    case EvalKind::ShortestPath: return "sp";
    case EvalKind::Cbs: return "cbs";
    case EvalKind::Qmdp: return "qmdp";
    case EvalKind::Mdp: return "mdp";
  }
  return "?";
}

std::optional<EvalKind> parse_eval_kind(std::string_view text) {
  for (EvalKind k : {EvalKind::Zero, EvalKind::ShortestPath, EvalKind::Cbs, EvalKind::Qmdp,
                     EvalKind::Mdp}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

std::unique_ptr<LeafEvaluator> make_evaluator(EvalKind kind, const EvaluatorSetup& setup) {
  if (!setup.map) throw std::invalid_argument("evaluator needs a map");
  switch (kind) {
    case EvalKind::Zero:
      return std::make_unique<ZeroEvaluator>();
    case EvalKind::ShortestPath:
      if (!setup.to_goal) throw std::invalid_argument("sp evaluator needs goal distances");
      return std::make_unique<ShortestPathEvaluator>(setup);
    case EvalKind::Cbs:
      return std::make_unique<CbsEvaluator>(setup);
    case EvalKind::Qmdp:
      if (!setup.qtables) throw std::invalid_argument("qmdp evaluator needs context Q-tables");
      return std::make_unique<QmdpEvaluator>(setup);
    case EvalKind::Mdp:
      return std::make_unique<MdpEvaluator>(setup);
  }
  throw std::invalid_argument("unknown evaluator");
}

}  // namespace marp
