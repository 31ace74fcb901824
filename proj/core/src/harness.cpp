#include "marp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "marp/agents.hpp"
#include "marp/ne_oracle.hpp"

namespace marp {

namespace {

using json = nlohmann::json;

std::vector<FamilySpec> build_families() {
  std::vector<FamilySpec> out;
  auto add = [&](std::string name, int w, int h, std::optional<int> e, int agents, int upper,
                 int max_steps, double eps, int runs, SearchDefaults search, CbsLimits limits) {
    FamilySpec f;
    f.name = std::move(name);
    f.width = w;
    f.height = h;
    f.target_empty_cells = e;
    f.agents = agents;
    f.upper_bound = upper;
    f.max_steps = max_steps;
    f.epsilon = eps;
    f.runs = runs;
    f.search = search;
    f.ne_limits = limits;
    out.push_back(std::move(f));
  };
  const CbsLimits small{200, 20000, 0.0};
  add("tiny2a", 3, 3, 9, 2, 16, 16, 7e-4, 200, {2, 10, 0, 30, 50}, small);
  add("small2a", 8, 8, 31, 2, 32, 32, 7e-4, 500, {2, 10, 0, 30, 50}, small);
  add("square2a", 12, 12, 86, 2, 48, 48, 2e-4, 1000, {2, 10, 0, 50, 50}, small);
  add("square4a", 12, 12, 86, 4, 48, 48, 2e-4, 1500, {1, 5, 10, 60, 50}, small);
  add("medium20a", 18, 18, 219, 20, 144, 144, 8e-5, 1000, {1, 5, 5, 80, 80}, {100, 20000, 0.0});
  add("large50a", 32, 32, 819, 50, 256, 256, 2e-5, 500, {1, 2, 2, 100, 125}, {64, 50000, 0.0});
  return out;
}

const std::vector<FamilySpec>& family_table() {
  static const std::vector<FamilySpec> table = build_families();
  return table;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

PlannerContext context_for(const Scenario& sc, const EpisodeOptions& opt,
                           const std::shared_ptr<const GridMap>& map,
                           const std::shared_ptr<DistanceCache>& cache, int agent,
                           std::uint64_t seed) {
  PlannerContext ctx;
  ctx.map = map;
  ctx.distances = cache;
  ctx.self_index = agent;
  ctx.goal = sc.goals[static_cast<std::size_t>(agent)];
  ctx.agent_count = sc.starts.size();
  ctx.epsilon = sc.epsilon;
  ctx.rewards = opt.rewards;
  ctx.gamma = opt.gamma;
  ctx.seed = mix_seed(seed, static_cast<std::uint64_t>(agent) + 1);
  ctx.step = opt.step;
  ctx.search = opt.search;
  ctx.ne_w = opt.ne_w;
  ctx.ne_limits = opt.ne_limits;
  ctx.state_cap = opt.state_cap;
  return ctx;
}

void mean_std(std::span<const double> xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

json state_json(const JointState& s) {
  json pos = json::array();
  for (Cell c : s.positions) pos.push_back(to_string(c));
  return {{"positions", pos}, {"arrived", s.arrived}};
}

JointState state_from_json(const json& j) {
  JointState s;
  for (const auto& p : j.at("positions")) {
    const auto c = parse_cell(p.get<std::string>());
    if (!c) throw std::invalid_argument("bad cell in record: " + p.get<std::string>());
    s.positions.push_back(*c);
  }
  s.arrived = j.at("arrived").get<std::vector<std::uint8_t>>();
  return s;
}

}  // namespace

std::span<const FamilySpec> families() { return family_table(); }

const FamilySpec& family(std::string_view name) {
  for (const auto& f : family_table()) {
    if (f.name == name) return f;
  }
  throw std::invalid_argument("unknown scenario family '" + std::string(name) + "'");
}

std::string_view to_string(OpponentClass c) {
  switch (c) {
    case OpponentClass::Rational: return "rational";
    case OpponentClass::Malicious: return "malicious";
    case OpponentClass::SelfPlay: return "selfplay";
  }
  return "?";
}

OpponentClass parse_opponent_class(std::string_view text) {
  for (OpponentClass c : {OpponentClass::Rational, OpponentClass::Malicious, OpponentClass::SelfPlay}) {
    if (to_string(c) == text) return c;
  }
  throw std::invalid_argument("unknown opponent class '" + std::string(text) + "'");
}

std::vector<OpponentSpec> opponent_pool(OpponentClass c, double chase_p) {
  switch (c) {
    case OpponentClass::Rational:
      return {OpponentSpec::parse("sp"), OpponentSpec::parse("rand:0.2"),
              OpponentSpec::parse("rand:0.5"), OpponentSpec::parse("safe")};
    case OpponentClass::Malicious:
      return {OpponentSpec{OpponentKind::Chasing, chase_p}};
    case OpponentClass::SelfPlay:
      return {OpponentSpec{OpponentKind::SelfPlay, 0.0}};
  }
  return {};
}

Scenario make_family_scenario(const FamilySpec& fam, OpponentClass c, std::uint64_t seed) {
  ScenarioParams p;
  p.width = fam.width;
  p.height = fam.height;
  p.target_empty_cells = fam.target_empty_cells;
  p.obstacle_density = fam.obstacle_density;
  p.agent_count = fam.agents;
  p.modelling_index = 0;
  p.pool = opponent_pool(c);
  p.max_steps = fam.max_steps;
  p.epsilon = fam.epsilon;
  p.family = fam.name;
  p.seed = seed;
  return generate_scenario(p);
}

bool EpisodeRecord::same_outcome(const EpisodeRecord& o) const {
  return scenario_id == o.scenario_id && seed == o.seed && planner == o.planner &&
         states == o.states && actions == o.actions && path_length == o.path_length &&
         reached == o.reached && collided == o.collided && timed_out == o.timed_out &&
         failed == o.failed && error == o.error && arrival == o.arrival &&
         fallbacks == o.fallbacks;
}

EpisodeOptions episode_options(const FamilySpec& fam) {
  EpisodeOptions o;
  o.search = fam.search;
  o.ne_limits = fam.ne_limits;
  return o;
}

EpisodeRecord run_episode(const Scenario& sc, const PlannerSpec& planner_spec, std::uint64_t seed,
                          const EpisodeOptions& opt) {
  EpisodeRecord rec;
  rec.scenario_id = (sc.family.empty() ? std::string("scenario") : sc.family) + "-" +
                    std::to_string(sc.seed);
  rec.seed = seed;
  rec.planner = planner_spec.to_string();
  const auto n = sc.starts.size();
  const int me = sc.modelling_index;
  rec.arrival.assign(n, -1);

  auto map = std::make_shared<const GridMap>(sc.map);
  auto cache = std::make_shared<DistanceCache>(map);
  std::unique_ptr<Planner> planner;
  std::vector<std::unique_ptr<Planner>> peers(n);
  std::vector<std::unique_ptr<OpponentAgent>> agents(n);
  std::vector<Rng> rngs;
  JointState state = initial_state(sc.starts, sc.goals);
  try {
    sc.validate();
    planner = make_planner(planner_spec);
    planner->reset(context_for(sc, opt, map, cache, me, seed), state);
    for (std::size_t j = 0; j < n; ++j) {
      rngs.emplace_back(mix_seed(seed, 0x1000 + j));
      if (static_cast<int>(j) == me) continue;
      if (sc.opponent_specs[j].kind == OpponentKind::SelfPlay) {
        peers[j] = make_planner(planner_spec);
        peers[j]->reset(context_for(sc, opt, map, cache, static_cast<int>(j), seed), state);
      } else {
        agents[j] = make_builtin_agent(sc.opponent_specs[j], *cache, static_cast<int>(j), sc.goals[j], me);
      }
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.states.push_back(state);
    return rec;
  }

  for (std::size_t j = 0; j < n; ++j) {
    if (state.arrived[j]) rec.arrival[j] = 0;
  }
  rec.states.push_back(state);
  const bool selfplay = opt.selfplay || std::any_of(peers.begin(), peers.end(),
                                                     [](const auto& p) { return p != nullptr; });
  auto all_arrived = [&]() {
    return std::all_of(state.arrived.begin(), state.arrived.end(), [](auto a) { return a != 0; });
  };
  auto finished = [&]() {
    if (selfplay) return all_arrived();
    return state.arrived[me] != 0 && !opt.run_to_max_steps;
  };

  std::vector<MoveAction> actions(n, MoveAction::Stay);
  try {
    for (int t = 0; t < sc.max_steps && !finished(); ++t) {
      const auto t0 = std::chrono::steady_clock::now();
      actions[me] = state.arrived[me] ? MoveAction::Stay : planner->act(state);
      rec.step_ms.push_back(ms_since(t0));
      for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<int>(j) == me) continue;
        if (state.arrived[j]) {
          actions[j] = MoveAction::Stay;
        } else if (peers[j]) {
          actions[j] = peers[j]->act(state);
        } else {
          actions[j] = agents[j]->act(state, rngs[j]);
        }
      }
      const StepResult res = step(sc.map, sc.goals, state, actions, opt.step);
      const auto realized = realized_actions(state, res.next);
      planner->observe(state, realized);
      for (auto& p : peers) {
        if (p) p->observe(state, realized);
      }
      rec.actions.push_back(actions);
      state = res.next;
      rec.states.push_back(state);
      for (std::size_t j = 0; j < n; ++j) {
        if (state.arrived[j] && rec.arrival[j] < 0) rec.arrival[j] = t + 1;
      }
      if (opt.on_step) opt.on_step(*planner, state);
      if (res.involves(me)) {
        rec.collided = true;
        break;
      }
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }

  rec.reached = rec.arrival[me] >= 0 && !rec.collided;
  rec.path_length = rec.reached ? rec.arrival[me] : static_cast<int>(rec.steps());
  rec.timed_out = !rec.reached && !rec.collided && !rec.failed;
  rec.fallbacks = planner ? planner->fallbacks() : 0;
  return rec;
}

double penalized_length(const EpisodeRecord& record, int upper_bound) {
  if (record.collided || record.timed_out) return upper_bound;
  return record.path_length;
}

Bounds compute_bounds(std::span<const Scenario> batch, OpponentClass mode, int upper_bound,
                      double w, const CbsLimits& limits) {
  if (batch.empty()) throw std::invalid_argument("bounds need at least one scenario");
  Bounds b;
  b.upper = upper_bound;
  std::vector<double> lows;
  for (const Scenario& sc : batch) {
    if (mode != OpponentClass::SelfPlay) {
      const auto i = static_cast<std::size_t>(sc.modelling_index);
      lows.push_back(bfs_distance(sc.map, sc.goals[i]).at(sc.starts[i]));
      continue;
    }
    NePlan plan;
    try {
      plan = cbs(sc.map, sc.starts, sc.goals, limits);
    } catch (const CbsFailure&) {
      plan = bounded_cbs(sc.map, sc.starts, sc.goals, w, limits);
      b.approximate = true;
    }
    lows.push_back(static_cast<double>(plan.sum_of_costs) / static_cast<double>(sc.starts.size()));
  }
  mean_std(lows, b.lower_mean, b.lower_std);
  return b;
}

int workers_from_env(int fallback) {
  if (const char* v = std::getenv("MARP_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && n >= 1) return static_cast<int>(n);
  }
  return std::max(1, fallback);
}

SummaryRow summarize(std::span<const EpisodeRecord> records, int upper_bound) {
  SummaryRow row;
  std::vector<double> pen;
  std::vector<double> raw;
  std::size_t collided = 0;
  std::size_t steps = 0;
  std::size_t fallbacks = 0;
  double ms = 0.0;
  std::size_t timed = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++row.failed;
      continue;
    }
    pen.push_back(penalized_length(r, upper_bound));
    raw.push_back(r.path_length);
    collided += r.collided;
    fallbacks += r.fallbacks;
    steps += r.steps();
    for (double x : r.step_ms) ms += x;
    timed += r.step_ms.size();
  }
  row.runs = static_cast<int>(pen.size());
  mean_std(pen, row.mean_penalized, row.std_penalized);
  mean_std(raw, row.mean_raw, row.std_raw);
  row.collision_ratio = pen.empty() ? 0.0 : static_cast<double>(collided) / pen.size();
  row.mean_ms_per_step = timed ? ms / static_cast<double>(timed) : 0.0;
  row.fallback_rate = steps ? static_cast<double>(fallbacks) / static_cast<double>(steps) : 0.0;
  return row;
}

SuiteResult run_suite(const SuiteConfig& config) {
  const FamilySpec& fam = family(config.family);
  if (config.planners.empty()) throw std::invalid_argument("suite needs at least one planner");
  const int runs = config.runs > 0 ? config.runs : fam.runs;
  EpisodeOptions opt = config.options.value_or(episode_options(fam));
  opt.selfplay = config.opponents == OpponentClass::SelfPlay;
  std::vector<PlannerSpec> specs;
  for (const auto& p : config.planners) specs.push_back(PlannerSpec::parse(p));

  SuiteResult result;
  result.records.assign(specs.size(), std::vector<EpisodeRecord>(static_cast<std::size_t>(runs)));
  const std::size_t jobs = specs.size() * static_cast<std::size_t>(runs);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const std::size_t p = job / static_cast<std::size_t>(runs);
      const std::size_t i = job % static_cast<std::size_t>(runs);
      const std::uint64_t seed = config.base_seed + i;
      EpisodeRecord rec;
      try {
        const Scenario sc = make_family_scenario(fam, config.opponents, seed);
        rec = run_episode(sc, specs[p], seed, opt);
      } catch (const std::exception& e) {
        rec.seed = seed;
        rec.planner = specs[p].to_string();
        rec.failed = true;
        rec.error = e.what();
      }
      result.records[p][i] = std::move(rec);
    }
  };
  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(jobs)));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (std::size_t p = 0; p < specs.size(); ++p) {
    SummaryRow row = summarize(result.records[p], fam.upper_bound);
    row.scenario_family = fam.name;
    row.opponent_class = std::string(to_string(config.opponents));
    row.planner = specs[p].to_string();
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << kCsvHeader << '\n';
  char buf[512];
  for (const auto& r : rows) {
    // Planner specs contain commas, so the field is quoted.
    std::snprintf(buf, sizeof buf, "%s,%s,\"%s\",%d,%.4f,%.4f,%.4f,%.4f,%.4f,%.3f,%.4f\n",
                  r.scenario_family.c_str(), r.opponent_class.c_str(), r.planner.c_str(), r.runs,
                  r.mean_penalized, r.std_penalized, r.mean_raw, r.std_raw, r.collision_ratio,
                  r.mean_ms_per_step, r.fallback_rate);
    out << buf;
  }
}

std::vector<SummaryRow> read_csv(std::string_view text) {
  std::vector<SummaryRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != kCsvHeader) throw ParseError("unexpected CSV header", line_no, 1);
      continue;
    }
    std::vector<std::string> f;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') {
        quoted = !quoted;
      } else if (ch == ',' && !quoted) {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    f.push_back(cur);
    if (f.size() != 11) throw ParseError("expected 11 fields", line_no, 1);
    SummaryRow r;
    try {
      r.scenario_family = f[0];
      r.opponent_class = f[1];
      r.planner = f[2];
      r.runs = std::stoi(f[3]);
      r.mean_penalized = std::stod(f[4]);
      r.std_penalized = std::stod(f[5]);
      r.mean_raw = std::stod(f[6]);
      r.std_raw = std::stod(f[7]);
      r.collision_ratio = std::stod(f[8]);
      r.mean_ms_per_step = std::stod(f[9]);
      r.fallback_rate = std::stod(f[10]);
    } catch (const std::logic_error&) {
      throw ParseError("bad numeric field", line_no, 1);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string plot_data(std::span<const SummaryRow> rows) {
  std::string out = "planner,opponent_class,metric,value\n";
  char buf[320];
  for (const auto& r : rows) {
    const std::pair<const char*, double> metrics[] = {
        {"mean_penalized", r.mean_penalized}, {"std_penalized", r.std_penalized},
        {"mean_raw", r.mean_raw},             {"std_raw", r.std_raw},
        {"collision_ratio", r.collision_ratio}, {"mean_ms_per_step", r.mean_ms_per_step},
        {"fallback_rate", r.fallback_rate}};
    for (const auto& [name, v] : metrics) {
      std::snprintf(buf, sizeof buf, "\"%s\",%s,%s,%.6g\n", r.planner.c_str(),
                    r.opponent_class.c_str(), name, v);
      out += buf;
    }
  }
  return out;
}

std::string record_to_json(const EpisodeRecord& r, const Scenario& scenario) {
  json doc;
  doc["scenario_id"] = r.scenario_id;
  doc["seed"] = r.seed;
  doc["planner"] = r.planner;
  doc["scenario"] = json::parse(scenario_to_json(scenario));
  json states = json::array();
  for (const auto& s : r.states) states.push_back(state_json(s));
  doc["states"] = states;
  json acts = json::array();
  for (const auto& step : r.actions) {
    json names = json::array();
    for (MoveAction a : step) names.push_back(std::string(to_string(a)));
    acts.push_back(names);
  }
  doc["actions"] = acts;
  doc["path_length"] = r.path_length;
  doc["reached"] = r.reached;
  doc["collided"] = r.collided;
  doc["timed_out"] = r.timed_out;
  doc["failed"] = r.failed;
  doc["error"] = r.error;
  doc["arrival"] = r.arrival;
  doc["step_ms"] = r.step_ms;
  doc["fallbacks"] = r.fallbacks;
  return doc.dump(1);
}

RecordDocument record_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0, static_cast<int>(e.byte));
  }
  RecordDocument out;
  try {
    out.scenario = scenario_from_json(doc.at("scenario").dump());
    EpisodeRecord& r = out.record;
    r.scenario_id = doc.at("scenario_id").get<std::string>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.planner = doc.at("planner").get<std::string>();
    for (const auto& s : doc.at("states")) r.states.push_back(state_from_json(s));
    for (const auto& names : doc.at("actions")) {
      std::vector<MoveAction> step;
      for (const auto& name : names) {
        const auto a = parse_action(name.get<std::string>());
        if (!a) throw ParseError("bad action in record: " + name.get<std::string>(), 0, 0);
        step.push_back(*a);
      }
      r.actions.push_back(std::move(step));
    }
    r.path_length = doc.at("path_length").get<int>();
    r.reached = doc.at("reached").get<bool>();
    r.collided = doc.at("collided").get<bool>();
    r.timed_out = doc.at("timed_out").get<bool>();
    r.failed = doc.at("failed").get<bool>();
    r.error = doc.at("error").get<std::string>();
    r.arrival = doc.at("arrival").get<std::vector<int>>();
    r.step_ms = doc.at("step_ms").get<std::vector<double>>();
    r.fallbacks = doc.at("fallbacks").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), 0, 0);
  }
  return out;
}

std::string render_episode(const Scenario& sc, const EpisodeRecord& record) {
  std::string out;
  const GridMap& map = sc.map;
  for (std::size_t t = 0; t < record.states.size(); ++t) {
    const JointState& s = record.states[t];
    std::vector<std::string> rows(static_cast<std::size_t>(map.height()),
                                  std::string(static_cast<std::size_t>(map.width()), '.'));
    for (int r = 0; r < map.height(); ++r) {
      for (int c = 0; c < map.width(); ++c) {
        if (!map.passable(Cell{r, c})) rows[r][c] = '@';
      }
    }
    for (std::size_t i = 0; i < sc.goals.size(); ++i) {
      const Cell g = sc.goals[i];
      rows[g.row][g.col] = static_cast<char>('a' + i % 26);
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Cell p = s.positions[i];
      rows[p.row][p.col] = static_cast<char>('0' + i % 10);
    }
    out += "t=" + std::to_string(t);
    if (t < record.actions.size()) {
      out += "  ";
      for (MoveAction a : record.actions[t]) out += to_string(a).front();
    }
    out += '\n';
    for (const auto& row : rows) out += row + '\n';
    out += '\n';
  }
  return out;
}

}  // namespace marp
