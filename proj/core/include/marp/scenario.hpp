#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "marp/env.hpp"
#include "marp/opponents.hpp"

namespace marp {

struct Scenario {
  GridMap map = GridMap::open(1, 1);
  std::vector<Cell> starts;
  std::vector<Cell> goals;
  int modelling_index = 0;
  /// One entry per agent; the modelling agent's entry is ignored.
  std::vector<OpponentSpec> opponent_specs;
  int max_steps = 32;
  std::uint64_t seed = 0;
  /// Scenario family name (e.g. "small2a"); empty for hand-written scenarios.
  std::string family;
  /// Opponent randomness assumed by hypothesis policies.
  double epsilon = 7e-4;

  int agent_count() const { return static_cast<int>(starts.size()); }
  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioParams {
  int width = 8;
  int height = 8;
  /// When set, the passable cells form one 4-connected region of exactly this
  /// size; otherwise obstacles are dropped independently with
  /// `obstacle_density` and reachability is checked per agent.
  std::optional<int> target_empty_cells;
  double obstacle_density = 0.1;
  int agent_count = 2;
  int modelling_index = 0;
  /// Opponent specs are drawn uniformly from this pool.
  std::vector<OpponentSpec> pool{OpponentSpec{}};
  int max_steps = 32;
  double epsilon = 7e-4;
  std::string family;
  std::uint64_t seed = 0;
  int max_attempts = 200;
};

/// Deterministic in params.seed.
Scenario generate_scenario(const ScenarioParams& params);

/// JSON scenario document. The map is referenced by path (relative paths are
/// resolved against the scenario file's directory) or embedded as `map_text`.
std::string scenario_to_json(const Scenario& scenario, const std::string& map_path = "");
Scenario scenario_from_json(const std::string& text, const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);

}  // namespace marp
