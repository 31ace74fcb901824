#pragma once

// Episode runner, scenario families, metrics and suite orchestration.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marp/env.hpp"
#include "marp/planners.hpp"
#include "marp/scenario.hpp"

namespace marp {

struct FamilySpec {
  std::string name;
  int width = 8;
  int height = 8;
  std::optional<int> target_empty_cells;
  double obstacle_density = 0.0;
  int agents = 2;
  int upper_bound = 32;
  int max_steps = 32;
  double epsilon = 7e-4;
  int runs = 500;
  SearchDefaults search;
  CbsLimits ne_limits{200, 20000, 0.0};
};

std::span<const FamilySpec> families();
/// Throws std::invalid_argument for unknown names.
const FamilySpec& family(std::string_view name);

enum class OpponentClass { Rational, Malicious, SelfPlay };

std::string_view to_string(OpponentClass c);
OpponentClass parse_opponent_class(std::string_view text);
std::vector<OpponentSpec> opponent_pool(OpponentClass c, double chase_p = 0.5);

/// Scenario `seed` of a family; deterministic in (family, class, seed).
Scenario make_family_scenario(const FamilySpec& fam, OpponentClass c, std::uint64_t seed);

struct EpisodeRecord {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string planner;
  /// states[t] is the state before actions[t]; states.back() is final.
  std::vector<JointState> states;
  std::vector<std::vector<MoveAction>> actions;
  int path_length = 0;
  bool reached = false;
  bool collided = false;
  bool timed_out = false;
  bool failed = false;
  std::string error;
  /// Arrival step per agent, -1 if it never arrived.
  std::vector<int> arrival;
  std::vector<double> step_ms;
  std::size_t fallbacks = 0;

  std::size_t steps() const { return actions.size(); }
  /// Equality on everything except timing.
  bool same_outcome(const EpisodeRecord& other) const;
};

struct EpisodeOptions {
  RewardParams rewards;
  double gamma = kDefaultGamma;
  StepOptions step;
  SearchDefaults search;
  CbsLimits ne_limits{200, 20000, 0.0};
  double ne_w = 0.2;
  std::size_t state_cap = kDefaultStateCap;
  /// Self-play runs until every agent arrives.
  bool selfplay = false;
  /// Keep running to max_steps after the modelling agent arrives.
  bool run_to_max_steps = false;
  /// Called after every step with the modelling planner.
  std::function<void(const Planner&, const JointState&)> on_step;
};

EpisodeOptions episode_options(const FamilySpec& fam);

/// Runs one episode. Planner construction errors are returned as a failed
/// record rather than thrown.
EpisodeRecord run_episode(const Scenario& scenario, const PlannerSpec& planner,
                          std::uint64_t seed, const EpisodeOptions& options = {});

/// Collided or timed-out episodes score the upper bound.
double penalized_length(const EpisodeRecord& record, int upper_bound);

struct Bounds {
  double lower_mean = 0.0;
  double lower_std = 0.0;
  int upper = 0;
  /// Some self-play bound came from the bounded solver.
  bool approximate = false;
};

/// Rational/malicious: single-agent shortest paths of the modelling agent.
/// Self-play: optimal sum-of-costs per agent.
Bounds compute_bounds(std::span<const Scenario> batch, OpponentClass mode, int upper_bound,
                      double w = 0.2, const CbsLimits& limits = {});

struct SuiteConfig {
  std::string family = "small2a";
  std::vector<std::string> planners;
  OpponentClass opponents = OpponentClass::Rational;
  int runs = 0;  // 0 = family default
  std::uint64_t base_seed = 1;
  int workers = 1;
  /// Applied on top of the family defaults.
  std::optional<EpisodeOptions> options;
};

struct SummaryRow {
  std::string scenario_family;
  std::string opponent_class;
  std::string planner;
  int runs = 0;
  double mean_penalized = 0.0;
  double std_penalized = 0.0;
  double mean_raw = 0.0;
  double std_raw = 0.0;
  double collision_ratio = 0.0;
  double mean_ms_per_step = 0.0;
  double fallback_rate = 0.0;
  int failed = 0;
};

struct SuiteResult {
  std::vector<SummaryRow> rows;
  /// records[p][i]: planner p, episode i.
  std::vector<std::vector<EpisodeRecord>> records;
};

/// Worker count from MARP_WORKERS when set, else `fallback`.
int workers_from_env(int fallback);

SuiteResult run_suite(const SuiteConfig& config);

SummaryRow summarize(std::span<const EpisodeRecord> records, int upper_bound);

inline constexpr std::string_view kCsvHeader =
    "scenario_family,opponent_class,planner,runs,mean_penalized,std_penalized,mean_raw,std_raw,"
    "collision_ratio,mean_ms_per_step,fallback_rate";

void write_csv(std::ostream& out, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_csv(std::string_view text);

/// Long-format rows `planner,opponent_class,metric,value` for plotting.
std::string plot_data(std::span<const SummaryRow> rows);

/// Record document with the scenario and planner embedded for replay.
std::string record_to_json(const EpisodeRecord& record, const Scenario& scenario);
struct RecordDocument {
  EpisodeRecord record;
  Scenario scenario;
};
RecordDocument record_from_json(const std::string& text);

/// ASCII frames: agents as digits (mod 10), goals as letters.
std::string render_episode(const Scenario& scenario, const EpisodeRecord& record);

}  // namespace marp
