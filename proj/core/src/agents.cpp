#include "marp/agents.hpp"

#include <stdexcept>

#include "marp/safety.hpp"

namespace marp {

namespace {

class ShortestPathAgent final : public OpponentAgent {
 public:
  ShortestPathAgent(std::shared_ptr<const GridMap> map, std::shared_ptr<const DistanceField> dist,
                    int self)
      : map_(std::move(map)), dist_(std::move(dist)), self_(self) {}

  MoveAction act(const JointState& state, Rng&) override {
    return shortest_path_act(*map_, *dist_, state.positions[self_]);
  }

 private:
  std::shared_ptr<const GridMap> map_;
  std::shared_ptr<const DistanceField> dist_;
  int self_;
};

class RandomAgent final : public OpponentAgent {
 public:
  RandomAgent(std::shared_ptr<const GridMap> map, std::shared_ptr<const DistanceField> dist,
              int self, double p)
      : map_(std::move(map)), dist_(std::move(dist)), self_(self), p_(p) {}

  MoveAction act(const JointState& state, Rng& rng) override {
    return random_p_act(*map_, *dist_, state.positions[self_], p_, rng);
  }

 private:
  std::shared_ptr<const GridMap> map_;
  std::shared_ptr<const DistanceField> dist_;
  int self_;
  double p_;
};

class ChasingAgent final : public OpponentAgent {
 public:
  ChasingAgent(DistanceCache& cache, std::shared_ptr<const DistanceField> dist, int self,
               int target, double p)
      : cache_(&cache), dist_(std::move(dist)), self_(self), target_(target), p_(p) {}

  MoveAction act(const JointState& state, Rng& rng) override {
    const Cell me = state.positions[self_];
    if (rng.bernoulli(p_)) {
      const auto to_target = cache_->get(state.positions[target_]);
      return shortest_path_act(*cache_->map(), *to_target, me);
    }
    return shortest_path_act(*cache_->map(), *dist_, me);
  }

 private:
  DistanceCache* cache_;
  std::shared_ptr<const DistanceField> dist_;
  int self_;
  int target_;
  double p_;
};

class SafeAgent final : public OpponentAgent {
 public:
  SafeAgent(std::shared_ptr<const GridMap> map, std::shared_ptr<const DistanceField> dist,
            int self)
      : map_(std::move(map)), dist_(std::move(dist)), self_(self) {}

  MoveAction act(const JointState& state, Rng&) override {
    SafetyInput in{.map = map_.get(), .to_goal = dist_.get(), .self_index = self_};
    return safe_decision(in, state).action;
  }

 private:
  std::shared_ptr<const GridMap> map_;
  std::shared_ptr<const DistanceField> dist_;
  int self_;
};

}  // namespace

std::unique_ptr<OpponentAgent> make_builtin_agent(const OpponentSpec& spec, DistanceCache& distances,
                                                  int self_index, Cell goal, int target_index) {
  auto dist = distances.get(goal);
  switch (spec.kind) {
    case OpponentKind::ShortestPath:
      return std::make_unique<ShortestPathAgent>(distances.map(), dist, self_index);
    case OpponentKind::Random:
      return std::make_unique<RandomAgent>(distances.map(), dist, self_index, spec.p);
    case OpponentKind::Chasing:
      return std::make_unique<ChasingAgent>(distances, dist, self_index, target_index, spec.p);
    case OpponentKind::Safe:
      return std::make_unique<SafeAgent>(distances.map(), dist, self_index);
    case OpponentKind::SelfPlay:
      break;
  }
  throw std::invalid_argument("self-play opponents are driven by planners, not built-in rules");
}

}  // namespace marp
