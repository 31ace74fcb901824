#include <doctest.h>

#include <set>

#include "marp/env.hpp"
#include "marp/scenario.hpp"
#include "marp/harness.hpp"
#include "support/oracles.hpp"

using namespace marp;

TEST_SUITE("env") {

TEST_CASE("parse_map counts empty cells") {
  CHECK(parse_map("height 3 3\n...\n...\n...\n").empty_cell_count() == 9);
  const GridMap m = parse_map("height 3 3\n...\n.@.\n...\n");
  CHECK(m.empty_cell_count() == 8);
  CHECK_FALSE(m.passable(Cell{1, 1}));
  CHECK(m.width() == 3);
}

TEST_CASE("parse_map reports the offending position") {
  try {
    parse_map("height 3 3\n...\n..\n...\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_map("height 3 2\n..x\n...\n"), ParseError);
  CHECK_THROWS_AS(parse_map("height 3 3\n...\n...\n"), ParseError);
}

TEST_CASE("map text round trip") {
  const GridMap m = parse_map("height 4 2\n.@..\n..@.\n");
  CHECK(parse_map(m.to_text()) == m);
}

TEST_CASE("movingai header") {
  const GridMap m = parse_map("type octile\nheight 2\nwidth 3\nmap\n.@.\n...\n");
  CHECK(m.width() == 3);
  CHECK(m.height() == 2);
  CHECK(m.empty_cell_count() == 5);
}

TEST_CASE("swap is a collision") {
  const GridMap map = GridMap::open(3, 1);
  std::vector<Cell> goals{{0, 2}, {0, 0}};
  JointState s = initial_state(std::vector<Cell>{{0, 0}, {0, 1}}, goals);
  std::vector<MoveAction> acts{MoveAction::Right, MoveAction::Left};
  const StepResult r = step(map, goals, s, acts);
  REQUIRE(r.collisions.size() == 1);
  CHECK(r.collisions[0] == std::pair{0, 1});
  CHECK(r.involves(0));
  CHECK(r.next.positions[0] == Cell{0, 1});
}

TEST_CASE("off-grid move stays") {
  const GridMap map = GridMap::open(3, 3);
  std::vector<Cell> goals{{2, 2}, {2, 0}};
  JointState s = initial_state(std::vector<Cell>{{0, 1}, {1, 1}}, goals);
  std::vector<MoveAction> acts{MoveAction::Up, MoveAction::Stay};
  const StepResult r = step(map, goals, s, acts);
  CHECK(r.collisions.empty());
  CHECK(r.next.positions[0] == Cell{0, 1});
}

TEST_CASE("arrival is sticky") {
  const GridMap map = GridMap::open(3, 1);
  std::vector<Cell> goals{{0, 1}, {0, 2}};
  JointState s = initial_state(std::vector<Cell>{{0, 0}, {0, 2}}, goals);
  CHECK(s.arrived[1] == 1);
  std::vector<MoveAction> acts{MoveAction::Right, MoveAction::Left};
  const StepResult r = step(map, goals, s, acts);
  CHECK(r.next.positions[1] == Cell{0, 2});
  CHECK(r.next.arrived[0] == 1);
  CHECK(r.collisions.empty());
}

TEST_CASE("goal ghosting drops arrived agents from collisions") {
  const GridMap map = GridMap::open(3, 1);
  std::vector<Cell> goals{{0, 2}, {0, 1}};
  JointState s = initial_state(std::vector<Cell>{{0, 0}, {0, 1}}, goals);
  std::vector<MoveAction> acts{MoveAction::Right, MoveAction::Stay};
  CHECK(step(map, goals, s, acts).collisions.size() == 1);
  CHECK(step(map, goals, s, acts, StepOptions{true}).collisions.empty());
}

TEST_CASE("collisions match the pairwise checker on every joint action") {
  const GridMap map = GridMap::open(4, 4);
  std::vector<Cell> starts{{1, 1}, {1, 3}, {3, 0}};
  std::vector<Cell> goals{{0, 0}, {0, 3}, {3, 3}};
  const JointState s = initial_state(starts, goals);
  int single_pair = 0;
  for (std::size_t code = 0; code < 125; ++code) {
    std::vector<MoveAction> acts{kAllActions[code % 5], kAllActions[(code / 5) % 5],
                                 kAllActions[code / 25]};
    const StepResult r = step(map, goals, s, acts);
    const auto expect = oracle::pairwise_collisions(map, s, acts);
    CHECK(r.collisions == expect);
    if (acts[0] == MoveAction::Right && acts[1] == MoveAction::Left) {
      // Both enter (1,2); the third agent is far away.
      CHECK(r.collisions.size() == 1);
      ++single_pair;
    }
  }
  CHECK(single_pair == 5);
}

TEST_CASE("step is deterministic and symmetric") {
  Rng rng(7);
  const GridMap map = oracle::random_connected_map(rng, 5, 5, 0.2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto cells = oracle::distinct_cells(rng, map, 6);
    std::vector<Cell> starts(cells.begin(), cells.begin() + 3);
    std::vector<Cell> goals(cells.begin() + 3, cells.end());
    const JointState s = initial_state(starts, goals);
    std::vector<MoveAction> acts(3);
    for (auto& a : acts) a = kAllActions[rng.below(5)];
    const StepResult a = step(map, goals, s, acts);
    CHECK(a.next == step(map, goals, s, acts).next);
    CHECK(a.collisions == oracle::pairwise_collisions(map, s, acts));

    // Relabel agents 0 and 1: the pair set maps onto itself.
    std::vector<Cell> ps{starts[1], starts[0], starts[2]};
    std::vector<Cell> pg{goals[1], goals[0], goals[2]};
    std::vector<MoveAction> pa{acts[1], acts[0], acts[2]};
    const StepResult b = step(map, pg, initial_state(ps, pg), pa);
    auto relabel = [](int i) { return i == 0 ? 1 : i == 1 ? 0 : i; };
    std::set<std::pair<int, int>> lhs(a.collisions.begin(), a.collisions.end());
    std::set<std::pair<int, int>> rhs;
    for (auto [i, j] : b.collisions) rhs.insert(std::minmax(relabel(i), relabel(j)));
    CHECK(lhs == rhs);
  }
}

TEST_CASE("realized actions are position deltas") {
  const GridMap map = GridMap::open(3, 3);
  std::vector<Cell> goals{{2, 2}, {2, 0}};
  JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}}, goals);
  std::vector<MoveAction> acts{MoveAction::Up, MoveAction::Right};
  const auto r = step(map, goals, s, acts);
  const auto seen = realized_actions(s, r.next);
  CHECK(seen[0] == MoveAction::Stay);
  CHECK(seen[1] == MoveAction::Right);
}

TEST_CASE("bfs distances") {
  const GridMap open = GridMap::open(3, 3);
  const auto d = bfs_distance(open, Cell{0, 0});
  CHECK(d.at(Cell{0, 0}) == 0);
  CHECK(d.at(Cell{2, 2}) == 4);

  const GridMap sealed = parse_map("height 3 3\n..@\n.@.\n...\n");
  const auto s = bfs_distance(sealed, Cell{2, 2});
  CHECK(s.at(Cell{0, 0}) == 4);
  const GridMap cut = parse_map("height 3 3\n.@.\n@..\n...\n");
  CHECK_FALSE(bfs_distance(cut, Cell{2, 2}).reachable(Cell{0, 0}));
  CHECK_THROWS_AS(bfs_distance(cut, Cell{0, 1}), std::invalid_argument);
}

TEST_CASE("bfs distances have a descending neighbour") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const GridMap map = oracle::random_connected_map(rng, 7, 6, 0.3);
    const Cell goal = oracle::distinct_cells(rng, map, 1)[0];
    const auto d = bfs_distance(map, goal);
    for (Cell c : map.passable_cells()) {
      const int dc = d.at(c);
      if (dc == 0 || dc == DistanceField::kUnreachable) continue;
      bool found = false;
      for (MoveAction a : kAllActions) {
        const Cell n = shifted(c, a);
        if (map.passable(n) && d.at(n) == dc - 1) found = true;
      }
      CHECK(found);
    }
  }
}

TEST_CASE("state counts") {
  CHECK(state_count(31, 2) == 930);
  CHECK(state_count(86, 2) == 7310);
  CHECK(state_count(17, 1) == 17);
  CHECK_THROWS_AS(state_count(2, 3), std::invalid_argument);
  for (int e = 1; e <= 40; ++e) {
    for (int k = 1; k <= e; ++k) {
      CHECK(state_count(e, k) * oracle::factorial(e - k) == oracle::factorial(e));
    }
  }
}

TEST_CASE("scenario generation is deterministic") {
  ScenarioParams p;
  p.seed = 42;
  p.pool = opponent_pool(OpponentClass::Rational);
  const Scenario a = generate_scenario(p);
  const Scenario b = generate_scenario(p);
  CHECK(a.map == b.map);
  CHECK(a.starts == b.starts);
  CHECK(a.goals == b.goals);
  CHECK(a.opponent_specs == b.opponent_specs);
}

TEST_CASE("family maps hit their empty-cell targets") {
  const Scenario s = make_family_scenario(family("small2a"), OpponentClass::Rational, 3);
  CHECK(s.map.empty_cell_count() == 31);
  CHECK(state_count(s.map.empty_cell_count(), 2) == 930);
  const Scenario q = make_family_scenario(family("square2a"), OpponentClass::Rational, 3);
  CHECK(q.map.empty_cell_count() == 86);
}

TEST_CASE("generated goals are reachable") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario s = make_family_scenario(family("square4a"), OpponentClass::Rational, seed);
    REQUIRE(s.agent_count() == 4);
    CHECK_NOTHROW(s.validate());
    for (int i = 0; i < 4; ++i) {
      CHECK(bfs_distance(s.map, s.goals[i]).reachable(s.starts[i]));
    }
  }
}

TEST_CASE("infeasible generation fails") {
  ScenarioParams p;
  p.width = 2;
  p.height = 2;
  p.agent_count = 5;
  p.obstacle_density = 0.0;
  p.max_attempts = 5;
  CHECK_THROWS_AS(generate_scenario(p), GenerationError);
}

TEST_CASE("scenario json round trip") {
  const Scenario s = make_family_scenario(family("small2a"), OpponentClass::Malicious, 9);
  const Scenario r = scenario_from_json(scenario_to_json(s));
  CHECK(r.map == s.map);
  CHECK(r.starts == s.starts);
  CHECK(r.goals == s.goals);
  CHECK(r.opponent_specs == s.opponent_specs);
  CHECK(r.max_steps == s.max_steps);
  CHECK(r.seed == s.seed);
}

}
