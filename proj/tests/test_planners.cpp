#include <doctest.h>

#include <cmath>
#include <limits>

#include "marp/evaluators.hpp"
#include "marp/planners.hpp"
#include "marp/safety.hpp"
#include "marp/tree_search.hpp"
#include "support/oracles.hpp"

using namespace marp;

namespace {

std::shared_ptr<const GridMap> shared(GridMap m) { return std::make_shared<const GridMap>(std::move(m)); }

PlannerContext context(std::shared_ptr<const GridMap> map, Cell goal, std::size_t agents,
                       double eps = 0.01, int self = 0) {
  PlannerContext ctx;
  ctx.map = map;
  ctx.distances = std::make_shared<DistanceCache>(map);
  ctx.self_index = self;
  ctx.goal = goal;
  ctx.agent_count = agents;
  ctx.epsilon = eps;
  ctx.seed = 5;
  return ctx;
}

struct Episode {
  bool reached = false;
  bool collided = false;
  int steps = 0;
};

// Agent 0 runs the planner; every other agent stays put.
Episode drive(Planner& p, const PlannerContext& ctx, const std::vector<Cell>& starts,
              const std::vector<Cell>& goals, int max_steps) {
  JointState s = initial_state(starts, goals);
  p.reset(ctx, s);
  Episode out;
  for (int t = 0; t < max_steps; ++t) {
    if (s.positions[0] == goals[0]) {
      out.reached = true;
      return out;
    }
    std::vector<MoveAction> acts(starts.size(), MoveAction::Stay);
    acts[0] = p.act(s);
    const StepResult r = step(*ctx.map, goals, s, acts);
    ++out.steps;
    if (r.involves(0)) {
      out.collided = true;
      return out;
    }
    p.observe(s, realized_actions(s, r.next));
    s = r.next;
  }
  out.reached = s.positions[0] == goals[0];
  return out;
}

Belief two_goal_belief(DistanceCache& cache, Cell g1, Cell g2, double eps, double p1) {
  auto set = std::make_shared<HypothesisSet>();
  set->policies.emplace_back(cache.map(), cache.get(g1), eps);
  set->policies.emplace_back(cache.map(), cache.get(g2), eps);
  Belief b({1}, {set});
  b.set_probabilities(0, {p1, 1.0 - p1});
  return b;
}

SearchModel model_for(const GridMap& map, Cell goal) {
  SearchModel m;
  m.map = &map;
  m.own_goal = goal;
  return m;
}

}  // namespace

TEST_SUITE("planners") {

TEST_CASE("spec strings") {
  const PlannerSpec s = PlannerSpec::parse("mcts:sel=puct,budget=50,eval=cbs");
  CHECK(s.kind == "mcts");
  CHECK(s.get("budget") == "50");
  CHECK(s.has("eval"));
  CHECK_FALSE(s.has("n"));
  CHECK(PlannerSpec::parse(s.to_string()).to_string() == s.to_string());
  CHECK(PlannerSpec::parse("mdp:fixed").get("") == "fixed");
  for (const char* text : {"astar", "safe", "esafe:K=3", "mdp:fixed", "mdp:update", "qmdp",
                           "uts:n=2,m=0,eval=cbs,backup=exact", "mcts:sel=puct,budget=50,eval=cbs",
                           "mcts:sel=uct,budget=20,eval=sp", "uts:n=1,m=inf", "cbs:fixed",
                           "cbs:update", "uts:n=1,backup=4,eval=zero"}) {
    CHECK_NOTHROW(make_planner(text));
  }
  CHECK_THROWS_AS(make_planner("dijkstra"), std::invalid_argument);
  CHECK_THROWS_AS(make_planner("esafe:K=x"), std::invalid_argument);
  CHECK_THROWS_AS(make_planner("mcts:sel=greedy"), std::invalid_argument);
  CHECK_THROWS_AS(make_planner("uts:depth=2"), std::invalid_argument);
}

TEST_CASE("astar") {
  auto map = shared(GridMap::open(5, 5));
  const auto ctx = context(map, Cell{4, 4}, 1);
  auto p = make_planner("astar");
  const Episode o = drive(*p, ctx, {{0, 0}}, {{4, 4}}, 20);
  CHECK(o.reached);
  CHECK(o.steps == 8);

  // An opponent parked on the row.
  auto corridor = shared(parse_map("height 5 1\n.....\n"));
  const auto c2 = context(corridor, Cell{0, 4}, 2);
  const Episode hit = drive(*p, c2, {{0, 0}, {0, 2}}, {{0, 4}, {0, 2}}, 10);
  CHECK(hit.collided);

  const JointState at = initial_state(std::vector<Cell>{{4, 4}}, std::vector<Cell>{{4, 4}});
  CHECK(astar_act(*map, bfs_distance(*map, Cell{4, 4}), at, 0) == MoveAction::Stay);
}

TEST_CASE("safe rules out cells an opponent can reach") {
  const GridMap map = GridMap::open(5, 5);
  const JointState s = initial_state(std::vector<Cell>{{2, 0}, {2, 2}},
                                     std::vector<Cell>{{2, 4}, {0, 0}});
  const auto mask = safe_action_mask(map, s, 0);
  CHECK_FALSE(mask[action_index(MoveAction::Right)]);
  CHECK(mask[action_index(MoveAction::Up)]);
  CHECK(mask[action_index(MoveAction::Stay)]);
  const auto d = bfs_distance(map, Cell{2, 4});
  // Right is unsafe; Stay keeps the distance, Up/Down lengthen it.
  CHECK(safe_act(map, d, s, 0, nullptr) == MoveAction::Stay);
}

TEST_CASE("safe without opponents is astar") {
  const GridMap map = GridMap::open(4, 4);
  for (Cell goal : map.passable_cells()) {
    const auto d = bfs_distance(map, goal);
    for (Cell c : map.passable_cells()) {
      const JointState s = initial_state(std::vector<Cell>{c}, std::vector<Cell>{goal});
      CHECK(safe_act(map, d, s, 0, nullptr) == astar_act(map, d, s, 0));
    }
  }
}

TEST_CASE("safe deadlock and the enhanced detour") {
  auto map = shared(parse_map("height 5 3\n.....\n.@@@.\n.....\n"));
  const std::vector<Cell> starts{{0, 0}, {0, 2}};
  const std::vector<Cell> goals{{0, 4}, {2, 2}};
  const auto ctx = context(map, goals[0], 2);

  auto safe = make_planner("safe");
  const Episode stuck = drive(*safe, ctx, starts, goals, 40);
  CHECK_FALSE(stuck.reached);
  CHECK_FALSE(stuck.collided);

  auto esafe = make_planner("esafe:K=3");
  const Episode around = drive(*esafe, ctx, starts, goals, 40);
  CHECK(around.reached);
  CHECK_FALSE(around.collided);
}

TEST_CASE("enhanced safe with nothing stationary is safe") {
  auto map = shared(GridMap::open(4, 4));
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto cells = oracle::distinct_cells(rng, *map, 4);
    const std::vector<Cell> starts{cells[0], cells[1]};
    const std::vector<Cell> goals{cells[2], cells[3]};
    const JointState s = initial_state(starts, goals);
    const auto ctx = context(map, goals[0], 2);
    auto p = make_planner("esafe:K=3");
    p->reset(ctx, s);
    CHECK(p->act(s) == safe_act(*map, *ctx.distances->get(goals[0]), s, 0, p->belief()));
  }
}

TEST_CASE("enhanced safe stays when masking seals the goal") {
  auto map = shared(parse_map("height 5 1\n.....\n"));
  const std::vector<Cell> starts{{0, 0}, {0, 2}};
  const std::vector<Cell> goals{{0, 4}, {0, 0}};
  const auto ctx = context(map, goals[0], 2);
  auto p = make_planner("esafe:K=2");
  JointState s = initial_state(starts, goals);
  p->reset(ctx, s);
  for (int t = 0; t < 4; ++t) {
    const MoveAction a = p->act(s);
    std::vector<MoveAction> acts{a, MoveAction::Stay};
    const StepResult r = step(*map, goals, s, acts);
    REQUIRE_FALSE(r.involves(0));
    p->observe(s, realized_actions(s, r.next));
    s = r.next;
  }
  CHECK(p->act(s) == MoveAction::Stay);
}

TEST_CASE("enhanced safe masking") {
  const GridMap map = parse_map("height 5 3\n.....\n.@@@.\n.....\n");
  const JointState s = initial_state(std::vector<Cell>{{0, 1}, {0, 2}},
                                     std::vector<Cell>{{0, 4}, {2, 2}});
  const std::vector<int> frozen{1};
  // Around through the bottom row.
  CHECK(enhanced_safe_act(map, Cell{0, 4}, s, 0, nullptr, frozen) == MoveAction::Left);
  const JointState back = initial_state(std::vector<Cell>{{2, 3}, {0, 2}},
                                        std::vector<Cell>{{0, 4}, {2, 2}});
  CHECK(enhanced_safe_act(map, Cell{0, 4}, back, 0, nullptr, frozen) == MoveAction::Right);
}

TEST_CASE("mdp planners") {
  auto map = shared(GridMap::open(3, 3));
  const std::vector<Cell> starts{{0, 0}, {2, 0}};
  const std::vector<Cell> goals{{2, 2}, {0, 2}};
  const auto ctx = context(map, goals[0], 2, 0.05);

  SUBCASE("goal start stays") {
    for (const char* spec : {"mdp:fixed", "mdp:update", "qmdp"}) {
      auto p = make_planner(spec);
      const JointState s = initial_state(std::vector<Cell>{{2, 2}, {2, 0}}, goals);
      p->reset(ctx, s);
      CHECK(p->act(s) == MoveAction::Stay);
    }
  }

  SUBCASE("update mode is greedy in the current induced mdp") {
    auto p = make_planner("mdp:update");
    JointState s = initial_state(starts, goals);
    p->reset(ctx, s);
    std::vector<MoveAction> opp_moves{MoveAction::Up, MoveAction::Up, MoveAction::Right};
    for (MoveAction om : opp_moves) {
      if (s.positions[0] == goals[0]) break;
      const MoveAction a = p->act(s);
      const InducedMdp m = induce_mdp(*map, *p->belief(), s, 0, goals[0], RewardParams{});
      const ValueSolution v = value_iteration(m.mdp);
      const int id = *m.find(s);
      CHECK(action_index(a) == static_cast<std::size_t>(v.policy[static_cast<std::size_t>(id)]));
      std::vector<MoveAction> acts{a, om};
      const StepResult r = step(*map, goals, s, acts);
      if (r.involves(0)) break;
      p->observe(s, realized_actions(s, r.next));
      s = r.next;
    }
  }

  SUBCASE("fixed mode replays the initial policy") {
    auto p = make_planner("mdp:fixed");
    JointState s = initial_state(starts, goals);
    p->reset(ctx, s);
    const InducedMdp m = induce_mdp(*map, *p->belief(), s, 0, goals[0], RewardParams{});
    const ValueSolution v = value_iteration(m.mdp);
    for (int t = 0; t < 3 && s.positions[0] != goals[0]; ++t) {
      const MoveAction a = p->act(s);
      CHECK(action_index(a) == static_cast<std::size_t>(v.policy[static_cast<std::size_t>(*m.find(s))]));
      std::vector<MoveAction> acts{a, MoveAction::Stay};
      const StepResult r = step(*map, goals, s, acts);
      if (r.involves(0)) break;
      p->observe(s, realized_actions(s, r.next));
      s = r.next;
    }
  }

  SUBCASE("qmdp follows the hand-expanded weighted q") {
    auto p = make_planner("qmdp");
    JointState s = initial_state(starts, goals);
    p->reset(ctx, s);
    const auto contexts = enumerate_contexts(*p->belief(), 1000);
    const ContextQTables tables =
        solve_context_mdps(*map, *p->belief(), contexts, s, 0, goals[0], RewardParams{});
    for (int t = 0; t < 4 && s.positions[0] != goals[0]; ++t) {
      const Belief& b = *p->belief();
      ActionArray w{};
      for (const auto& c : contexts) {
        const auto q = *tables.q(c, s);
        for (std::size_t k = 0; k < kNumActions; ++k) w[k] += b.joint_probability(c) * q[k];
      }
      CHECK(p->act(s) == argmax_valid(*map, s.positions[0], w));
      CHECK(p->act(s) == qmdp_action(*map, s, *p->belief(), tables));
      std::vector<MoveAction> acts{p->act(s), MoveAction::Up};
      const StepResult r = step(*map, goals, s, acts);
      if (r.involves(0)) break;
      p->observe(s, realized_actions(s, r.next));
      s = r.next;
    }
  }
}

TEST_CASE("state cap") {
  auto map = shared(GridMap::open(5, 5));
  auto ctx = context(map, Cell{4, 4}, 3);
  ctx.state_cap = 50;
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {2, 2}, {4, 0}},
                                     std::vector<Cell>{{4, 4}, {0, 4}, {0, 2}});
  for (const char* spec : {"mdp:update", "mdp:fixed"}) {
    auto p = make_planner(spec);
    CHECK_THROWS_AS(p->reset(ctx, s), CapacityError);
  }
  auto p = make_planner("mdp:update,cap=100000");
  CHECK_NOTHROW(p->reset(ctx, s));
}

TEST_CASE("search constants") {
  CHECK(uct_score(0.5, 10, 2, std::sqrt(2.0)) ==
        doctest::Approx(0.5 + std::sqrt(2.0) * std::sqrt(std::log(10.0) / 2)));
  CHECK(std::isinf(uct_score(0.0, 3, 0, 1.0)));
  const TsConfig cfg;
  CHECK(cfg.uct_c == doctest::Approx(std::sqrt(2.0)));
  CHECK(cfg.puct_c1 == 1.25);
  CHECK(cfg.puct_c2 == 19625.0);
  const double want = 0.4 + 0.3 * std::sqrt(std::log(8.0) / 3) * (1.25 + std::log((8 + 19625.0) / 19625.0));
  CHECK(puct_score(0.4, 0.3, 8, 3, 1.25, 19625.0) == doctest::Approx(want));
}

TEST_CASE("one-step search enters an adjacent goal") {
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  const Belief b = two_goal_belief(cache, Cell{2, 0}, Cell{0, 2}, 0.1, 0.5);
  const JointState s = initial_state(std::vector<Cell>{{1, 1}, {2, 0}},
                                     std::vector<Cell>{{1, 2}, {2, 0}});
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = Cell{1, 2};
  auto zero = make_evaluator(EvalKind::Zero, setup);
  TsConfig cfg;
  cfg.n = 1;
  Rng rng(0);
  const auto r = uniform_ts_act(model_for(*map, Cell{1, 2}), s, std::make_shared<const Belief>(b), cfg, *zero, rng);
  CHECK(r.action == MoveAction::Right);
  CHECK(r.root_value > 0.0);
}

TEST_CASE("exact backup matches the expectimax oracle") {
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  Rng rng(14);
  for (int trial = 0; trial < 25; ++trial) {
    const auto cells = oracle::distinct_cells(rng, *map, 5);
    const Cell own_goal = cells[4];
    const Belief b = two_goal_belief(cache, cells[2], cells[3], 0.1, rng.uniform());
    const JointState s = initial_state(std::vector<Cell>{cells[0], cells[1]},
                                       std::vector<Cell>{own_goal, cells[2]});
    EvaluatorSetup setup;
    setup.map = map;
    setup.own_goal = own_goal;
    setup.to_goal = cache.get(own_goal);
    auto sp = make_evaluator(EvalKind::ShortestPath, setup);
    TsConfig cfg;
    cfg.n = 2;
    const auto r = uniform_ts_act(model_for(*map, own_goal), s, std::make_shared<const Belief>(b), cfg, *sp, rng);

    oracle::ExpectimaxModel em;
    em.map = map.get();
    em.own_goal = own_goal;
    const auto dist = bfs_distance(*map, own_goal);
    em.leaf = [&](const JointState& x) { return std::pow(0.95, dist.at(x.positions[0])); };
    const auto want = oracle::expectimax_root(em, s, b, 2);
    for (const auto& child : r.root->children) {
      CHECK(std::abs(child->v - want[action_index(child->own_action)]) <= 1e-9);
    }
  }
}

TEST_CASE("tree structure") {
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  const Belief b = two_goal_belief(cache, Cell{0, 2}, Cell{2, 0}, 0.2, 0.4);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}},
                                     std::vector<Cell>{{2, 2}, {0, 2}});
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = Cell{2, 2};
  setup.to_goal = cache.get(Cell{2, 2});
  auto sp = make_evaluator(EvalKind::ShortestPath, setup);
  TsConfig cfg;
  cfg.n = 1;
  cfg.m = 2;
  Rng rng(3);
  const auto r = uniform_ts_act(model_for(*map, Cell{2, 2}), s, std::make_shared<const Belief>(b), cfg, *sp, rng);

  // Every EXP value lies between its children's backed-up values. MAX nodes
  // deeper than n keep the belief of their MAX grandparent.
  bool moved = false;
  std::function<void(const SearchNode&, const std::string&)> walk = [&](const SearchNode& node,
                                                                      const std::string& above) {
    std::string here = above;
    if (node.type == SearchNode::Type::Exp && !node.children.empty()) {
      double lo = 1e9, hi = -1e9;
      for (const auto& c : node.children) {
        const double backed = c->reward + 0.95 * c->v;
        lo = std::min(lo, backed);
        hi = std::max(hi, backed);
      }
      CHECK(node.v >= lo - 1e-12);
      CHECK(node.v <= hi + 1e-12);
    }
    if (node.type == SearchNode::Type::Max && !node.terminal) {
      here = node.belief->serialize();
      if (node.height > cfg.n) CHECK(here == above);
      if (node.height == cfg.n && here != b.serialize()) moved = true;
    }
    for (const auto& c : node.children) walk(*c, here);
  };
  walk(*r.root, b.serialize());
  CHECK(moved);
}

TEST_CASE("sampled backup stays within the exact range") {
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  const Belief b = two_goal_belief(cache, Cell{0, 2}, Cell{2, 0}, 0.2, 0.4);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}},
                                     std::vector<Cell>{{2, 2}, {0, 2}});
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = Cell{2, 2};
  setup.to_goal = cache.get(Cell{2, 2});
  auto sp = make_evaluator(EvalKind::ShortestPath, setup);
  TsConfig cfg;
  cfg.n = 2;
  cfg.backup_samples = 6;
  Rng a(1), c(1);
  const auto bp = std::make_shared<const Belief>(b);
  const auto r1 = uniform_ts_act(model_for(*map, Cell{2, 2}), s, bp, cfg, *sp, a);
  const auto r2 = uniform_ts_act(model_for(*map, Cell{2, 2}), s, bp, cfg, *sp, c);
  CHECK(r1.root_value == r2.root_value);
  CHECK(r1.action == r2.action);
  CHECK(r1.root_value <= 1.0);
  CHECK(r1.root_value >= -1.0);
}

TEST_CASE("node budget is enforced") {
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  const Belief b = two_goal_belief(cache, Cell{0, 2}, Cell{2, 0}, 0.2, 0.4);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}},
                                     std::vector<Cell>{{2, 2}, {0, 2}});
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = Cell{2, 2};
  auto zero = make_evaluator(EvalKind::Zero, setup);
  TsConfig cfg;
  cfg.n = 4;
  cfg.node_budget = 100;
  Rng rng(0);
  CHECK_THROWS_AS(uniform_ts_act(model_for(*map, Cell{2, 2}), s, std::make_shared<const Belief>(b), cfg, *zero, rng),
                  SearchBudgetExceeded);
}

TEST_CASE("mcts visit counts") {
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  const Belief b = two_goal_belief(cache, Cell{0, 2}, Cell{2, 0}, 0.2, 0.4);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}},
                                     std::vector<Cell>{{2, 2}, {0, 2}});
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = Cell{2, 2};
  setup.to_goal = cache.get(Cell{2, 2});
  auto sp = make_evaluator(EvalKind::ShortestPath, setup);
  for (Selection sel : {Selection::Uct, Selection::Puct}) {
    TsConfig cfg;
    cfg.selection = sel;
    cfg.budget = 200;
    cfg.n = 3;
    Rng rng(9);
    const auto r = mcts_act(model_for(*map, Cell{2, 2}), s, std::make_shared<const Belief>(b), cfg, *sp, rng);
    CHECK(r.iterations == 200);
    CHECK(r.root->N == 200);
    std::function<void(const SearchNode&, bool)> walk = [&](const SearchNode& node, bool root) {
      int sum = 0;
      for (const auto& c : node.children) {
        sum += c->N;
        walk(*c, false);
      }
      if (node.type == SearchNode::Type::Exp) CHECK(node.N == sum);
      else if (!root && !node.children.empty()) CHECK(node.N == sum + 1);
    };
    walk(*r.root, true);

    // Most visited child.
    int best = -1;
    MoveAction arg = MoveAction::Stay;
    for (const auto& c : r.root->children) {
      if (c->N > best) {
        best = c->N;
        arg = c->own_action;
      }
    }
    CHECK(r.action == arg);
  }
}

TEST_CASE("mcts with one legal move") {
  // Walled in on a one-cell island; the goal is out of reach.
  auto map = shared(parse_map("height 3 1\n.@.\n"));
  const JointState s = initial_state(std::vector<Cell>{{0, 0}}, std::vector<Cell>{{0, 2}});
  const auto none = std::make_shared<const Belief>();
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = Cell{0, 2};
  auto zero = make_evaluator(EvalKind::Zero, setup);
  TsConfig cfg;
  cfg.selection = Selection::Puct;
  cfg.budget = 500;
  Rng rng(0);
  const auto r = mcts_act(model_for(*map, Cell{0, 2}), s, none, cfg, *zero, rng);
  CHECK(r.action == MoveAction::Stay);
  CHECK(r.iterations == 1);
}

TEST_CASE("mcts agrees with exact search") {
  // Crossing diagonals on 3x3; the root action is compared over 100 seeds.
  auto map = shared(GridMap::open(3, 3));
  DistanceCache cache(map);
  const Cell own_goal{2, 2};
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {0, 2}},
                                     std::vector<Cell>{own_goal, {2, 0}});
  const Belief b = init_belief(cache, std::vector<int>{1}, own_goal, 0.01);
  const std::vector<std::size_t> ctx{b.hypotheses(0).find_goal(Cell{2, 0})};
  const auto point = std::make_shared<const Belief>(b.point_mass(ctx));
  EvaluatorSetup setup;
  setup.map = map;
  setup.own_goal = own_goal;
  setup.to_goal = cache.get(own_goal);
  setup.ne.samples = 1;
  auto ne = make_evaluator(EvalKind::Cbs, setup);

  TsConfig exact;
  exact.n = 2;
  Rng r1(0);
  const auto u = uniform_ts_act(model_for(*map, own_goal), s, point, exact, *ne, r1);
  double best = -1e9;
  for (const auto& c : u.root->children) best = std::max(best, c->v);

  for (Selection sel : {Selection::Uct, Selection::Puct}) {
    int agree = 0;
    for (int seed = 0; seed < 100; ++seed) {
      TsConfig mc;
      mc.n = 2;
      mc.selection = sel;
      mc.budget = 2000;
      Rng r2(static_cast<std::uint64_t>(seed));
      const auto m = mcts_act(model_for(*map, own_goal), s, point, mc, *ne, r2);
      for (const auto& c : u.root->children) {
        if (c->own_action == m.action && c->v >= best - 1e-9) ++agree;
      }
    }
    CHECK(agree >= 95);
  }
}

}
