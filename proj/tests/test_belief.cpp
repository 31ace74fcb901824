#include <doctest.h>

#include <cmath>

#include "marp/belief.hpp"
#include "support/oracles.hpp"

using namespace marp;

namespace {

std::shared_ptr<const GridMap> shared(GridMap m) { return std::make_shared<const GridMap>(std::move(m)); }

double sum(std::span<const double> p) {
  double s = 0.0;
  for (double x : p) s += x;
  return s;
}

}  // namespace

TEST_SUITE("belief") {

TEST_CASE("hypotheses exclude the own goal") {
  const GridMap base = parse_map(
      "height 8 8\n"
      "@@......\n@@......\n@@@...@@\n@.......\n@@@.....\n@@@@...@\n@@@@@.@@\n@@@@@@@@\n");
  REQUIRE(base.empty_cell_count() == 31);
  DistanceCache cache(shared(base));
  const std::vector<int> opp{1};
  const Belief b = init_belief(cache, opp, Cell{3, 3}, 7e-4);
  CHECK(b.hypotheses(0).size() == 30);
  for (double p : b.probabilities(0)) CHECK(p == doctest::Approx(1.0 / 30));
  CHECK(b.hypotheses(0).find_goal(Cell{3, 3}) == b.hypotheses(0).size());

  const Belief all = init_belief(cache, opp, Cell{3, 3}, 7e-4, true);
  CHECK(all.hypotheses(0).size() == 31);

  DistanceCache big(shared(GridMap::open(43, 2)));
  CHECK(init_belief(big, opp, Cell{0, 0}, 2e-4).hypotheses(0).size() == 85);
}

TEST_CASE("tempered posterior") {
  using V = std::vector<double>;
  CHECK(tempered_posterior(V{0.5, 0.5}, V{1, 0}, BeliefTemperature::bayes()) == V{1, 0});
  const auto p = tempered_posterior(V{0.5, 0.5}, V{0.8, 0.2}, BeliefTemperature::bayes());
  CHECK(p[0] == doctest::Approx(0.8));
  CHECK(p[1] == doctest::Approx(0.2));
  CHECK(tempered_posterior(V{0.6, 0.4}, V{0.5, 0.5}, BeliefTemperature::hardmax()) == V{1, 0});
  CHECK(tempered_posterior(V{0.3, 0.7}, V{0, 0}, BeliefTemperature::bayes()) == V{0.3, 0.7});

  const auto hm = tempered_posterior(V{0.25, 0.25, 0.5}, V{0.4, 0.4, 0.1}, BeliefTemperature::hardmax());
  CHECK(hm == V{0.5, 0.5, 0});
  const auto scaled =
      tempered_posterior(V{0.25, 0.25, 0.5}, V{4, 4, 1}, BeliefTemperature::hardmax());
  CHECK(scaled == hm);

  // beta = 2 takes the square root of the products.
  const auto t = tempered_posterior(V{0.5, 0.5}, V{0.9, 0.1}, BeliefTemperature{2.0, false});
  CHECK(t[0] == doctest::Approx(0.75));
}

TEST_CASE("update matches direct Bayes") {
  DistanceCache cache(shared(GridMap::open(4, 4)));
  const std::vector<int> opp{1};
  const Belief b0 = init_belief(cache, opp, Cell{0, 0}, 0.05);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {2, 1}},
                                     std::vector<Cell>{{3, 3}, {0, 3}});
  std::vector<MoveAction> acts{MoveAction::Stay, MoveAction::Up};
  const Belief b1 = update(b0, s, acts);
  const auto& set = b0.hypotheses(0);
  std::vector<double> expect(set.size());
  double z = 0.0;
  for (std::size_t k = 0; k < set.size(); ++k) {
    expect[k] = b0.probabilities(0)[k] * set.policies[k].probability(Cell{2, 1}, MoveAction::Up);
    z += expect[k];
  }
  for (std::size_t k = 0; k < set.size(); ++k) {
    CHECK(b1.probabilities(0)[k] == doctest::Approx(expect[k] / z).epsilon(1e-12));
  }
  CHECK(std::abs(sum(b1.probabilities(0)) - 1.0) <= 1e-9);
}

TEST_CASE("sequential updates equal one product update") {
  DistanceCache cache(shared(GridMap::open(5, 4)));
  const std::vector<int> opp{1};
  const Belief b0 = init_belief(cache, opp, Cell{0, 0}, 0.1);
  const std::vector<Cell> goals{{3, 4}, {0, 4}};
  JointState s = initial_state(std::vector<Cell>{{0, 0}, {2, 2}}, goals);
  std::vector<MoveAction> a1{MoveAction::Stay, MoveAction::Up};
  std::vector<MoveAction> a2{MoveAction::Stay, MoveAction::Right};
  const JointState s2 = step(*cache.map(), goals, s, a1).next;
  const Belief seq = update(update(b0, s, a1), s2, a2);

  const auto& set = b0.hypotheses(0);
  std::vector<double> lik(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) {
    lik[k] = set.policies[k].probability(Cell{2, 2}, MoveAction::Up) *
             set.policies[k].probability(Cell{1, 2}, MoveAction::Right);
  }
  const auto once = tempered_posterior(b0.probabilities(0), lik, BeliefTemperature::bayes());
  for (std::size_t k = 0; k < set.size(); ++k) {
    CHECK(std::abs(seq.probabilities(0)[k] - once[k]) <= 1e-12);
  }
}

TEST_CASE("joint action distribution") {
  DistanceCache cache(shared(GridMap::open(4, 4)));
  const std::vector<int> opp{1};
  Belief b = init_belief(cache, opp, Cell{0, 0}, 0.1);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 2}},
                                     std::vector<Cell>{{3, 3}, {3, 0}});

  // Point mass: the hypothesis's own distribution.
  const std::size_t k = b.hypotheses(0).find_goal(Cell{3, 3});
  const std::vector<std::size_t> ctx{k};
  const Belief point = b.point_mass(ctx);
  const auto d = joint_action_dist(point, s);
  const auto want = b.hypotheses(0).policies[k].action_dist(Cell{1, 2});
  for (std::size_t a = 0; a < kNumActions; ++a) CHECK(d.marginals[0][a] == doctest::Approx(want[a]));

  // Three-hypothesis mixture against direct summation.
  std::vector<double> probs(b.hypotheses(0).size(), 0.0);
  probs[0] = 0.2;
  probs[3] = 0.5;
  probs[7] = 0.3;
  b.set_probabilities(0, probs);
  const auto mix = joint_action_dist(b, s);
  for (std::size_t a = 0; a < kNumActions; ++a) {
    double direct = 0.0;
    for (std::size_t h : {0u, 3u, 7u}) {
      direct += probs[h] * b.hypotheses(0).policies[h].action_dist(Cell{1, 2})[a];
    }
    CHECK(mix.marginals[0][a] == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("two opponents form a product measure") {
  DistanceCache cache(shared(GridMap::open(4, 4)));
  const std::vector<int> opp{1, 2};
  const Belief b = init_belief(cache, opp, Cell{0, 0}, 0.2);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}, {2, 2}},
                                     std::vector<Cell>{{3, 3}, {3, 0}, {0, 3}});
  const auto d = joint_action_dist(b, s);
  double total = 0.0;
  d.for_each_joint([&](std::span<const MoveAction> acts, double p) {
    CHECK(p == doctest::Approx(d.marginals[0][action_index(acts[0])] *
                               d.marginals[1][action_index(acts[1])]));
    total += p;
  });
  CHECK(std::abs(total - 1.0) <= 1e-12);
  CHECK(d.support_size() == 25);
}

TEST_CASE("arrived opponents are pinned") {
  DistanceCache cache(shared(GridMap::open(3, 3)));
  const std::vector<int> opp{1};
  const Belief b = init_belief(cache, opp, Cell{0, 0}, 0.2);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {2, 2}},
                                     std::vector<Cell>{{0, 2}, {2, 2}});
  const auto d = joint_action_dist(b, s);
  CHECK(d.marginals[0][action_index(MoveAction::Stay)] == 1.0);
}

TEST_CASE("stationary detection") {
  using H = std::vector<std::vector<Cell>>;
  const Cell a{0, 0}, c{0, 1};
  CHECK(detect_stationary(H{{c, a, a, a}}, 3) == std::vector<std::size_t>{0});
  CHECK(detect_stationary(H{{a, a, a, c}}, 3).empty());
  CHECK(detect_stationary(H{{a, c, a, c, a, c, a}}, 3).empty());
  CHECK(detect_stationary(H{{a, a}}, 3).empty());
  CHECK(detect_stationary(H{{a, c}, {c, c, c}}, 3) == std::vector<std::size_t>{1});
}

TEST_CASE("serialization is exact") {
  DistanceCache cache(shared(GridMap::open(3, 3)));
  const std::vector<int> opp{1};
  const Belief b0 = init_belief(cache, opp, Cell{0, 0}, 0.1);
  const JointState s = initial_state(std::vector<Cell>{{0, 0}, {1, 1}},
                                     std::vector<Cell>{{2, 2}, {0, 2}});
  std::vector<MoveAction> acts{MoveAction::Stay, MoveAction::Up};
  const Belief b1 = update(b0, s, acts);
  CHECK(b1.serialize() == update(b0, s, acts).serialize());
  CHECK(b1.serialize() != b0.serialize());
  CHECK(b1 == update(b0, s, acts));
  CHECK(b1.to_json().find("(0,2)") != std::string::npos);
}

TEST_CASE("true goal gains mass along shortest-path observations") {
  // Statistical check: average posterior on the true goal never drops from
  // one distance-decreasing observation to the next.
  Rng rng(17);
  const double eps = 7e-4;
  DistanceCache cache(shared(GridMap::open(6, 6)));
  const std::vector<int> opp{1};
  const Belief b0 = init_belief(cache, opp, Cell{0, 0}, eps);
  const int trials = 200;
  std::vector<double> mean(6, 0.0);
  for (int t = 0; t < trials; ++t) {
    const auto cells = oracle::distinct_cells(rng, *cache.map(), 3);
    if (cells[1] == Cell{0, 0} || cells[2] == Cell{0, 0}) {
      --t;
      continue;
    }
    const auto to_goal = cache.get(cells[2]);
    if (to_goal->at(cells[1]) < 6) {
      --t;
      continue;
    }
    std::vector<Cell> goals{Cell{0, 0}, cells[2]};
    JointState s = initial_state(std::vector<Cell>{cells[0], cells[1]}, goals);
    Belief b = b0;
    const std::size_t truth = b.hypotheses(0).find_goal(cells[2]);
    mean[0] += b.probabilities(0)[truth];
    for (int k = 1; k < 6; ++k) {
      // Uniform choice among shortening moves.
      std::vector<MoveAction> moves;
      for (MoveAction a : kAllActions) {
        const Cell n = shifted(s.positions[1], a);
        if (cache.map()->passable(n) && to_goal->at(n) < to_goal->at(s.positions[1])) {
          moves.push_back(a);
        }
      }
      std::vector<MoveAction> acts{MoveAction::Stay, moves[rng.below(moves.size())]};
      b = update(b, s, acts);
      s.positions[1] = shifted(s.positions[1], acts[1]);
      mean[k] += b.probabilities(0)[truth];
    }
  }
  for (int k = 1; k < 6; ++k) CHECK(mean[k] >= mean[k - 1] - 1e-12);
}

}
