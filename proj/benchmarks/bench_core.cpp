#include <benchmark/benchmark.h>

#include <map>
#include <string>

#include "marp/harness.hpp"
#include "marp/planners.hpp"

using namespace marp;

namespace {

const Scenario& scenario(const char* fam) {
  static std::map<std::string, Scenario> cache;
  auto it = cache.find(fam);
  if (it == cache.end()) {
    it = cache.emplace(fam, make_family_scenario(family(fam), OpponentClass::Rational, 7)).first;
  }
  return it->second;
}

void BM_Bfs(benchmark::State& state) {
  const Scenario& sc = scenario("large50a");
  for (auto _ : state) benchmark::DoNotOptimize(bfs_distance(sc.map, sc.goals[0]));
}
BENCHMARK(BM_Bfs);

void BM_BeliefUpdate(benchmark::State& state) {
  const Scenario& sc = scenario("square4a");
  DistanceCache cache(std::make_shared<const GridMap>(sc.map));
  const Belief b = init_belief(cache, std::vector<int>{1, 2, 3}, sc.goals[0], sc.epsilon);
  const JointState s = initial_state(sc.starts, sc.goals);
  const std::vector<MoveAction> acts(s.size(), MoveAction::Up);
  for (auto _ : state) benchmark::DoNotOptimize(update(b, s, acts));
}
BENCHMARK(BM_BeliefUpdate);

void BM_Cbs(benchmark::State& state) {
  const Scenario& sc = scenario("square4a");
  for (auto _ : state) benchmark::DoNotOptimize(cbs(sc.map, sc.starts, sc.goals));
}
BENCHMARK(BM_Cbs);

void BM_ValueIteration(benchmark::State& state) {
  const Scenario& sc = scenario("small2a");
  DistanceCache cache(std::make_shared<const GridMap>(sc.map));
  const Belief b = init_belief(cache, std::vector<int>{1}, sc.goals[0], sc.epsilon);
  const InducedMdp m = induce_mdp(sc.map, b, initial_state(sc.starts, sc.goals), 0, sc.goals[0],
                                  RewardParams{});
  for (auto _ : state) benchmark::DoNotOptimize(value_iteration(m.mdp));
}
BENCHMARK(BM_ValueIteration)->Unit(benchmark::kMillisecond);

void BM_MctsStep(benchmark::State& state) {
  const char* fam = state.range(0) == 0 ? "small2a" : "square4a";
  const Scenario& sc = scenario(fam);
  auto map = std::make_shared<const GridMap>(sc.map);
  PlannerContext ctx;
  ctx.map = map;
  ctx.distances = std::make_shared<DistanceCache>(map);
  ctx.goal = sc.goals[0];
  ctx.agent_count = sc.starts.size();
  ctx.epsilon = sc.epsilon;
  ctx.search = family(fam).search;
  const JointState s = initial_state(sc.starts, sc.goals);
  auto planner = make_planner("mcts:sel=puct,eval=cbs");
  planner->reset(ctx, s);
  for (auto _ : state) benchmark::DoNotOptimize(planner->act(s));
}
BENCHMARK(BM_MctsStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
