#include "marp/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "marp/rng.hpp"

namespace marp {

namespace {

using nlohmann::json;

// Grows one connected passable region of `target` cells from a random seed
// cell by repeatedly opening a random frontier cell.
GridMap grow_connected_map(int width, int height, int target, Rng& rng) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
  const GridMap shape = GridMap::open(width, height);
  std::vector<int> frontier;
  std::vector<std::uint8_t> in_frontier(mask.size(), 0);
  auto open_cell = [&](int idx) {
    mask[idx] = 1;
    const Cell c = shape.cell(idx);
    for (MoveAction a : {MoveAction::Up, MoveAction::Down, MoveAction::Left, MoveAction::Right}) {
      const Cell n = shifted(c, a);
      if (!shape.in_bounds(n)) continue;
      const int ni = shape.index(n);
      if (mask[ni] || in_frontier[ni]) continue;
      in_frontier[ni] = 1;
      frontier.push_back(ni);
    }
  };
  open_cell(static_cast<int>(rng.below(mask.size())));
  for (int opened = 1; opened < target; ++opened) {
    const std::size_t pick = rng.below(frontier.size());
    const int idx = frontier[pick];
    frontier[pick] = frontier.back();
    frontier.pop_back();
    open_cell(idx);
  }
  return GridMap(width, height, std::move(mask));
}

GridMap random_density_map(int width, int height, double density, Rng& rng) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 1);
  for (auto& m : mask) m = rng.bernoulli(density) ? 0 : 1;
  return GridMap(width, height, std::move(mask));
}

std::string cell_json(Cell c) { return to_string(c); }

Cell cell_from_json(const json& j) {
  if (j.is_string()) {
    if (auto c = parse_cell(j.get<std::string>())) return *c;
    throw std::invalid_argument("malformed cell '" + j.get<std::string>() + "'");
  }
  if (j.is_array() && j.size() == 2) return {j[0].get<int>(), j[1].get<int>()};
  throw std::invalid_argument("cell must be \"(row,col)\" or [row, col]");
}

}  // namespace

void Scenario::validate() const {
  const auto n = starts.size();
  if (n == 0) throw std::invalid_argument("scenario has no agents");
  if (goals.size() != n) throw std::invalid_argument("scenario starts/goals size mismatch");
  if (opponent_specs.size() != n) {
    throw std::invalid_argument("scenario needs one opponent spec entry per agent");
  }
  if (modelling_index < 0 || modelling_index >= static_cast<int>(n)) {
    throw std::invalid_argument("scenario modelling_index out of range");
  }
  if (max_steps < 1) throw std::invalid_argument("scenario max_steps must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (!map.passable(starts[i])) {
      throw std::invalid_argument("start " + to_string(starts[i]) + " is not passable");
    }
    if (!map.passable(goals[i])) {
      throw std::invalid_argument("goal " + to_string(goals[i]) + " is not passable");
    }
  }
  if (std::set<Cell>(starts.begin(), starts.end()).size() != n) {
    throw std::invalid_argument("scenario starts are not pairwise distinct");
  }
  if (std::set<Cell>(goals.begin(), goals.end()).size() != n) {
    throw std::invalid_argument("scenario goals are not pairwise distinct");
  }
}

Scenario generate_scenario(const ScenarioParams& params) {
  if (params.agent_count < 1) throw std::invalid_argument("agent_count must be positive");
  if (params.pool.empty()) throw std::invalid_argument("opponent pool is empty");
  const int cells = params.width * params.height;
  if (params.target_empty_cells &&
      (*params.target_empty_cells < 1 || *params.target_empty_cells > cells)) {
    throw GenerationError("target empty-cell count outside the map");
  }
  Rng rng(params.seed);

  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    GridMap map = params.target_empty_cells
                      ? grow_connected_map(params.width, params.height,
                                           *params.target_empty_cells, rng)
                      : random_density_map(params.width, params.height, params.obstacle_density,
                                           rng);
    auto free_cells = map.passable_cells();
    if (static_cast<int>(free_cells.size()) < params.agent_count + 1) continue;

    Scenario s;
    s.map = map;
    std::vector<Cell> pool_starts = free_cells;
    std::vector<Cell> pool_goals = free_cells;
    bool ok = true;
    for (int i = 0; i < params.agent_count && ok; ++i) {
      bool placed = false;
      for (int tries = 0; tries < 64 && !placed; ++tries) {
        if (pool_starts.empty()) break;
        const std::size_t si = rng.below(pool_starts.size());
        const Cell start = pool_starts[si];
        const DistanceField dist = bfs_distance(map, start);
        std::vector<std::size_t> candidates;
        for (std::size_t g = 0; g < pool_goals.size(); ++g) {
          if (pool_goals[g] != start && dist.reachable(pool_goals[g])) candidates.push_back(g);
        }
        if (candidates.empty()) continue;
        const std::size_t gi = candidates[rng.below(candidates.size())];
        s.starts.push_back(start);
        s.goals.push_back(pool_goals[gi]);
        pool_starts.erase(pool_starts.begin() + static_cast<std::ptrdiff_t>(si));
        pool_goals.erase(pool_goals.begin() + static_cast<std::ptrdiff_t>(gi));
        placed = true;
      }
      ok = placed;
    }
    if (!ok) continue;

    s.modelling_index = params.modelling_index;
    s.opponent_specs.resize(params.agent_count);
    for (int i = 0; i < params.agent_count; ++i) {
      s.opponent_specs[i] = params.pool[rng.below(params.pool.size())];
    }
    s.opponent_specs[params.modelling_index] = OpponentSpec{};
    s.max_steps = params.max_steps;
    s.seed = params.seed;
    s.family = params.family;
    s.epsilon = params.epsilon;
    s.validate();
    return s;
  }
  throw GenerationError("could not place " + std::to_string(params.agent_count) +
                        " agents with reachable goals after " +
                        std::to_string(params.max_attempts) + " attempts");
}

std::string scenario_to_json(const Scenario& scenario, const std::string& map_path) {
  json doc;
  if (map_path.empty()) doc["map_text"] = scenario.map.to_text();
  else doc["map"] = map_path;
  json agents = json::array();
  for (int i = 0; i < scenario.agent_count(); ++i) {
    json a;
    a["start"] = cell_json(scenario.starts[i]);
    a["goal"] = cell_json(scenario.goals[i]);
    a["opponent"] = i == scenario.modelling_index ? "" : scenario.opponent_specs[i].to_string();
    agents.push_back(a);
  }
  doc["agents"] = agents;
  doc["modelling_index"] = scenario.modelling_index;
  doc["max_steps"] = scenario.max_steps;
  doc["seed"] = scenario.seed;
  doc["epsilon"] = scenario.epsilon;
  if (!scenario.family.empty()) doc["family"] = scenario.family;
  return doc.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text, const std::string& base_dir) {
  const json doc = json::parse(text);
  Scenario s;
  if (doc.contains("map_text")) {
    s.map = parse_map(doc.at("map_text").get<std::string>());
  } else {
    std::filesystem::path p = doc.at("map").get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    s.map = load_map(p.string());
  }
  for (const auto& a : doc.at("agents")) {
    s.starts.push_back(cell_from_json(a.at("start")));
    s.goals.push_back(cell_from_json(a.at("goal")));
    const std::string spec = a.value("opponent", std::string{});
    s.opponent_specs.push_back(spec.empty() ? OpponentSpec{} : OpponentSpec::parse(spec));
  }
  s.modelling_index = doc.value("modelling_index", 0);
  s.max_steps = doc.value("max_steps", 32);
  s.seed = doc.value("seed", std::uint64_t{0});
  s.epsilon = doc.value("epsilon", 7e-4);
  s.family = doc.value("family", std::string{});
  s.validate();
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str(), std::filesystem::path(path).parent_path().string());
}

}  // namespace marp
