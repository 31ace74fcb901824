// marp: scenario generation, episodes, benchmark suites, replay and the
// standalone MAPF solver.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marp/harness.hpp"
#include "marp/ne_oracle.hpp"
#include "marp/scenario.hpp"

namespace fs = std::filesystem;
using namespace marp;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// MovingAI .scen: columns bucket, map, width, height, start x, start y, goal x, goal y, length.
void read_agents(const std::string& path, std::vector<Cell>& starts, std::vector<Cell>& goals,
                 int limit) {
  if (fs::path(path).extension() == ".json") {
    const Scenario sc = load_scenario(path);
    starts = sc.starts;
    goals = sc.goals;
  } else {
    std::istringstream in(slurp(path));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line.rfind("version", 0) == 0) continue;
      std::istringstream fields(line);
      std::string bucket, map;
      int w, h, sx, sy, gx, gy;
      if (!(fields >> bucket >> map >> w >> h >> sx >> sy >> gx >> gy)) {
        throw ParseError("malformed agent line", line_no, 1);
      }
      starts.push_back({sy, sx});
      goals.push_back({gy, gx});
    }
  }
  if (limit > 0 && static_cast<int>(starts.size()) > limit) {
    starts.resize(static_cast<std::size_t>(limit));
    goals.resize(static_cast<std::size_t>(limit));
  }
}

void print_plan(const NePlan& plan) {
  for (const auto& path : plan.paths) {
    std::string line;
    for (std::size_t t = 0; t < path.size(); ++t) {
      if (t) line += ' ';
      line += std::to_string(t) + ":" + to_string(path[t]);
    }
    std::cout << line << '\n';
  }
  std::cout << "sum_of_costs " << plan.sum_of_costs << '\n';
}

void print_outcome(const EpisodeRecord& r) {
  std::cout << r.scenario_id << " planner=" << r.planner << " seed=" << r.seed
            << " length=" << r.path_length << " reached=" << r.reached
            << " collided=" << r.collided << " timed_out=" << r.timed_out
            << " fallbacks=" << r.fallbacks;
  if (r.failed) std::cout << " failed: " << r.error;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Opponent-modelling multi-agent route planning benchmark"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Write scenario files for a family");
  std::string gen_family = "small2a", gen_class = "rational", gen_out = ".";
  std::uint64_t gen_seed = 1;
  int gen_count = 1;
  gen->add_option("--family", gen_family, "Scenario family");
  gen->add_option("--class", gen_class, "rational, malicious or selfplay");
  gen->add_option("--seed", gen_seed, "First seed");
  gen->add_option("--count", gen_count, "Number of scenarios")->check(CLI::PositiveNumber);
  gen->add_option("--out", gen_out, "Output directory");

  // run
  auto* run = app.add_subcommand("run", "Run one episode");
  std::string run_scenario, run_family = "small2a", run_class = "rational", run_planner = "safe",
                            run_record;
  std::uint64_t run_seed = 1;
  bool run_render = false;
  run->add_option("--scenario", run_scenario, "Scenario JSON (otherwise generated from --family)");
  run->add_option("--family", run_family, "Scenario family");
  run->add_option("--class", run_class, "Opponent class");
  run->add_option("--planner", run_planner, "Planner spec, e.g. mcts:sel=puct,budget=50,eval=cbs");
  run->add_option("--seed", run_seed, "Episode seed");
  run->add_option("--record", run_record, "Write the episode record here");
  run->add_flag("--render", run_render, "Print an ASCII frame per step");

  // bench
  auto* bench = app.add_subcommand("bench", "Run a suite and write the summary CSV");
  std::string bench_config, bench_out;
  std::string bench_family = "small2a", bench_class = "rational", bench_records;
  std::vector<std::string> bench_planners;
  int bench_runs = 0, bench_workers = 1;
  std::uint64_t bench_seed = 1;
  bench->add_option("--config", bench_config, "JSON suite config");
  bench->add_option("--family", bench_family, "Scenario family");
  bench->add_option("--class", bench_class, "Opponent class");
  bench->add_option("-p,--planner", bench_planners, "Planner spec (repeatable)");
  bench->add_option("--runs", bench_runs, "Episodes per planner (0 = family default)");
  bench->add_option("--seed", bench_seed, "Base seed");
  bench->add_option("--workers", bench_workers, "Worker threads (MARP_WORKERS overrides)");
  bench->add_option("--out", bench_out, "CSV path (stdout if omitted)");
  bench->add_option("--records", bench_records, "Directory for per-episode records");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-execute a recorded episode and compare");
  std::string replay_path;
  bool replay_render = false;
  replay->add_option("record", replay_path, "Episode record JSON")->required();
  replay->add_flag("--render", replay_render, "Print an ASCII frame per step");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve a MAPF instance with (bounded) CBS");
  std::string solve_map, solve_agents;
  double solve_w = 0.0, solve_timeout = 10000.0;
  int solve_count = 0;
  solve->add_option("--map", solve_map, "Map file")->required();
  solve->add_option("--agents", solve_agents, "MovingAI .scen or scenario JSON")->required();
  solve->add_option("--w", solve_w, "Suboptimality factor (0 = optimal)");
  solve->add_option("--count", solve_count, "Use the first N agents");
  solve->add_option("--timeout-ms", solve_timeout, "Wall-clock limit");

  // plot-data
  auto* plot = app.add_subcommand("plot-data", "Re-emit a summary CSV in long format");
  std::string plot_csv, plot_out;
  plot->add_option("csv", plot_csv, "Summary CSV")->required();
  plot->add_option("--out", plot_out, "Output path (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const FamilySpec& fam = family(gen_family);
      const OpponentClass cls = parse_opponent_class(gen_class);
      fs::create_directories(gen_out);
      for (int i = 0; i < gen_count; ++i) {
        const Scenario sc = make_family_scenario(fam, cls, gen_seed + static_cast<std::uint64_t>(i));
        const std::string stem = fam.name + "-" + std::to_string(sc.seed);
        spit((fs::path(gen_out) / (stem + ".map")).string(), sc.map.to_text());
        spit((fs::path(gen_out) / (stem + ".json")).string(), scenario_to_json(sc, stem + ".map"));
        std::cout << (fs::path(gen_out) / (stem + ".json")).string() << '\n';
      }
      return 0;
    }

    if (*run) {
      Scenario sc;
      EpisodeOptions opt;
      if (!run_scenario.empty()) {
        sc = load_scenario(run_scenario);
        if (!sc.family.empty()) {
          for (const auto& f : families()) {
            if (f.name == sc.family) opt = episode_options(f);
          }
        }
      } else {
        const FamilySpec& fam = family(run_family);
        sc = make_family_scenario(fam, parse_opponent_class(run_class), run_seed);
        opt = episode_options(fam);
      }
      const EpisodeRecord rec = run_episode(sc, PlannerSpec::parse(run_planner), run_seed, opt);
      if (run_render) std::cout << render_episode(sc, rec);
      print_outcome(rec);
      if (!run_record.empty()) spit(run_record, record_to_json(rec, sc));
      return rec.failed ? 1 : 0;
    }

    if (*bench) {
      SuiteConfig cfg;
      cfg.family = bench_family;
      cfg.opponents = parse_opponent_class(bench_class);
      cfg.runs = bench_runs;
      cfg.base_seed = bench_seed;
      cfg.workers = bench_workers;
      if (!bench_config.empty()) {
        const auto doc = nlohmann::json::parse(slurp(bench_config));
        cfg.family = doc.value("family", cfg.family);
        if (doc.contains("opponents")) {
          cfg.opponents = parse_opponent_class(doc.at("opponents").get<std::string>());
        }
        cfg.planners = doc.value("planners", cfg.planners);
        cfg.runs = doc.value("runs", cfg.runs);
        cfg.base_seed = doc.value("base_seed", cfg.base_seed);
        cfg.workers = doc.value("workers", cfg.workers);
      }
      // Flags given on the command line win over the config file.
      if (bench->count("--family")) cfg.family = bench_family;
      if (bench->count("--class")) cfg.opponents = parse_opponent_class(bench_class);
      if (!bench_planners.empty()) cfg.planners = bench_planners;
      if (bench->count("--runs")) cfg.runs = bench_runs;
      if (bench->count("--seed")) cfg.base_seed = bench_seed;
      if (bench->count("--workers")) cfg.workers = bench_workers;
      cfg.workers = workers_from_env(cfg.workers);
      if (cfg.planners.empty()) throw std::invalid_argument("no planners given");

      const SuiteResult res = run_suite(cfg);
      for (const auto& row : res.rows) {
        if (row.failed) {
          std::cerr << row.planner << ": " << row.failed << " failed episode(s)\n";
        }
      }
      if (!bench_records.empty()) {
        fs::create_directories(bench_records);
        const FamilySpec& fam = family(cfg.family);
        for (std::size_t p = 0; p < res.records.size(); ++p) {
          for (const auto& rec : res.records[p]) {
            const Scenario sc = make_family_scenario(fam, cfg.opponents, rec.seed);
            const std::string name = "p" + std::to_string(p) + "-" + std::to_string(rec.seed) + ".json";
            spit((fs::path(bench_records) / name).string(), record_to_json(rec, sc));
          }
        }
      }
      if (bench_out.empty()) {
        write_csv(std::cout, res.rows);
      } else {
        std::ofstream out(bench_out);
        if (!out) throw std::runtime_error("cannot write " + bench_out);
        write_csv(out, res.rows);
      }
      return 0;
    }

    if (*replay) {
      const RecordDocument doc = record_from_json(slurp(replay_path));
      EpisodeOptions opt;
      for (const auto& f : families()) {
        if (f.name == doc.scenario.family) opt = episode_options(f);
      }
      const EpisodeRecord again =
          run_episode(doc.scenario, PlannerSpec::parse(doc.record.planner), doc.record.seed, opt);
      if (replay_render) std::cout << render_episode(doc.scenario, again);
      print_outcome(again);
      const bool same = again.same_outcome(doc.record);
      std::cout << (same ? "identical" : "DIVERGED") << '\n';
      return same ? 0 : 1;
    }

    if (*solve) {
      const GridMap map = load_map(solve_map);
      std::vector<Cell> starts, goals;
      read_agents(solve_agents, starts, goals, solve_count);
      CbsLimits limits;
      limits.max_high_level = 1u << 30;
      limits.max_low_level = 1u << 30;
      limits.time_limit_ms = solve_timeout;
      try {
        print_plan(solve_w > 0.0 ? bounded_cbs(map, starts, goals, solve_w, limits)
                                 : cbs(map, starts, goals, limits));
      } catch (const CbsFailure& e) {
        std::cerr << "solve failed: " << e.what() << '\n';
        if (e.best()) {
          std::cerr << "best partial plan (with conflicts):\n";
          print_plan(*e.best());
        }
        return 1;
      }
      return 0;
    }

    if (*plot) {
      const auto rows = read_csv(slurp(plot_csv));
      const std::string text = plot_data(rows);
      if (plot_out.empty()) {
        std::cout << text;
      } else {
        spit(plot_out, text);
      }
      return 0;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error";
    if (e.line() > 0) std::cerr << " at line " << e.line() << ", column " << e.column();
    std::cerr << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
