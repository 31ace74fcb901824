#include "marp/planners.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <set>
#include <stdexcept>

#include "marp/evaluators.hpp"
#include "marp/safety.hpp"

namespace marp {

void Planner::observe(const JointState&, std::span<const MoveAction>) {}

// ---------------------------------------------------------------------------
// Spec strings

PlannerSpec PlannerSpec::parse(std::string_view text) {
  PlannerSpec spec;
  const auto colon = text.find(':');
  spec.kind = std::string(text.substr(0, colon));
  if (spec.kind.empty()) throw std::invalid_argument("empty planner spec");
  if (colon == std::string_view::npos) return spec;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = rest.substr(0, comma);
    if (item.empty()) throw std::invalid_argument("empty item in planner spec '" + std::string(text) + "'");
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      spec.items.emplace_back(std::string(item), "");
    } else {
      spec.items.emplace_back(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    }
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return spec;
}

std::string PlannerSpec::to_string() const {
  std::string out = kind;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += i == 0 ? ':' : ',';
    out += items[i].first;
    if (!items[i].second.empty()) out += '=' + items[i].second;
  }
  return out;
}

bool PlannerSpec::has(std::string_view key) const {
  return std::any_of(items.begin(), items.end(), [&](const auto& kv) {
    return key.empty() ? kv.second.empty() : kv.first == key;
  });
}

std::string PlannerSpec::get(std::string_view key, std::string_view fallback) const {
  for (const auto& [k, v] : items) {
    if (key.empty() && v.empty()) return k;
    if (!key.empty() && k == key) return v;
  }
  return std::string(fallback);
}

namespace {

void check_keys(const PlannerSpec& spec, std::initializer_list<std::string_view> keys,
                std::initializer_list<std::string_view> words = {}) {
  for (const auto& [k, v] : spec.items) {
    const auto& pool = v.empty() ? words : keys;
    if (std::find(pool.begin(), pool.end(), k) == pool.end()) {
      throw std::invalid_argument("planner '" + spec.kind + "' does not accept '" + k + "'");
    }
  }
}

int to_int(const std::string& s, const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument(std::string("bad integer for ") + what + ": '" + s + "'");
  }
  return v;
}

double to_double(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(std::string("bad number for ") + what + ": '" + s + "'");
}

std::vector<int> opponents_of(std::size_t agents, int self) {
  std::vector<int> out;
  for (std::size_t i = 0; i < agents; ++i) {
    if (static_cast<int>(i) != self) out.push_back(static_cast<int>(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared state of every planner: map, own distances and a belief.

class BasePlanner : public Planner {
 public:
  void reset(const PlannerContext& ctx, const JointState& initial) override {
    if (!ctx.map || !ctx.distances) throw std::invalid_argument("planner context lacks a map");
    ctx_ = ctx;
    clear_fallbacks();
    to_goal_ = ctx.distances->get(ctx.goal);
    belief0_ = std::make_shared<const Belief>(init_belief(
        *ctx.distances, opponents_of(ctx.agent_count, ctx.self_index), ctx.goal, ctx.epsilon));
    belief_ = belief0_;
    steps_ = 0;
    on_reset(initial);
  }

  void observe(const JointState& before, std::span<const MoveAction> actions) override {
    ++steps_;
    if (updates_belief_) belief_ = std::make_shared<const Belief>(update(*belief_, before, actions));
    on_observe(before, actions);
  }

  const Belief* belief() const override { return belief_.get(); }

 protected:
  virtual void on_reset(const JointState&) {}
  virtual void on_observe(const JointState&, std::span<const MoveAction>) {}

  MoveAction fallback(const JointState& s, std::string why) {
    note_fallback(std::move(why));
    return safe_act(*ctx_.map, *to_goal_, s, ctx_.self_index, belief_.get());
  }

  bool at_goal(const JointState& s) const { return s.positions[ctx_.self_index] == ctx_.goal; }

  SearchModel model() const {
    SearchModel m;
    m.map = ctx_.map.get();
    m.own_index = ctx_.self_index;
    m.own_goal = ctx_.goal;
    m.rewards = ctx_.rewards;
    m.gamma = ctx_.gamma;
    m.step = ctx_.step;
    return m;
  }

  PlannerContext ctx_;
  std::shared_ptr<const DistanceField> to_goal_;
  std::shared_ptr<const Belief> belief0_;
  std::shared_ptr<const Belief> belief_;
  bool updates_belief_ = false;
  std::size_t steps_ = 0;
};

class AstarPlanner final : public BasePlanner {
 public:
  MoveAction act(const JointState& s) override {
    return astar_act(*ctx_.map, *to_goal_, s, ctx_.self_index);
  }
};

class SafePlanner final : public BasePlanner {
 public:
  MoveAction act(const JointState& s) override {
    if (at_goal(s)) return MoveAction::Stay;
    return safe_act(*ctx_.map, *to_goal_, s, ctx_.self_index, belief0_.get());
  }
};

class EnhancedSafePlanner final : public BasePlanner {
 public:
  explicit EnhancedSafePlanner(int k) : k_(k) {
    if (k < 1) throw std::invalid_argument("esafe needs K >= 1");
  }

  MoveAction act(const JointState& s) override {
    if (at_goal(s)) return MoveAction::Stay;
    std::vector<int> frozen;
    for (std::size_t j : detect_stationary(history_, k_)) {
      frozen.push_back(belief0_->agent_index(j));
    }
    return enhanced_safe_act(*ctx_.map, ctx_.goal, s, ctx_.self_index, belief0_.get(), frozen);
  }

 protected:
  void on_reset(const JointState& initial) override {
    history_.assign(belief0_->opponent_count(), {});
    record(initial);
  }

  void on_observe(const JointState& before, std::span<const MoveAction> actions) override {
    JointState after = before;
    for (std::size_t i = 0; i < after.size(); ++i) {
      after.positions[i] = ctx_.map->target(before.positions[i], actions[i]);
    }
    record(after);
  }

 private:
  void record(const JointState& s) {
    for (std::size_t j = 0; j < history_.size(); ++j) {
      history_[j].push_back(s.positions[static_cast<std::size_t>(belief0_->agent_index(j))]);
    }
  }

  int k_;
  std::vector<std::vector<Cell>> history_;
};

class MdpPlanner final : public BasePlanner {
 public:
  MdpPlanner(bool update, std::size_t cap) : cap_(cap) { updates_belief_ = update; }

  MoveAction act(const JointState& s) override {
    if (at_goal(s)) return MoveAction::Stay;
    if (updates_belief_ && steps_ > 0) {
      try {
        solve(s);
      } catch (const CapacityError& e) {
        return fallback(s, e.what());
      }
    }
    const auto id = induced_.find(s);
    if (!id || *id < 2) return fallback(s, "state outside the induced MDP");
    return kAllActions[static_cast<std::size_t>(solution_.policy[static_cast<std::size_t>(*id)])];
  }

 protected:
  void on_reset(const JointState& initial) override {
    if (!at_goal(initial)) solve(initial);
  }

 private:
  void solve(const JointState& root) {
    const std::size_t cap = cap_ ? cap_ : ctx_.state_cap;
    induced_ = induce_mdp(*ctx_.map, *belief_, root, ctx_.self_index, ctx_.goal, ctx_.rewards,
                          ctx_.gamma, cap, ctx_.step);
    solution_ = value_iteration(induced_.mdp);
  }

  std::size_t cap_;
  InducedMdp induced_;
  ValueSolution solution_;
};

class QmdpPlanner final : public BasePlanner {
 public:
  explicit QmdpPlanner(std::size_t cap) : cap_(cap) { updates_belief_ = true; }

  MoveAction act(const JointState& s) override {
    if (at_goal(s)) return MoveAction::Stay;
    try {
      return qmdp_action(*ctx_.map, s, *belief_, *tables_);
    } catch (const std::invalid_argument& e) {
      return fallback(s, e.what());
    }
  }

 protected:
  void on_reset(const JointState& initial) override {
    const std::size_t cap = cap_ ? cap_ : ctx_.state_cap;
    const auto contexts = enumerate_contexts(*belief0_, cap);
    tables_ = std::make_shared<const ContextQTables>(
        solve_context_mdps(*ctx_.map, *belief0_, contexts, initial, ctx_.self_index, ctx_.goal,
                           ctx_.rewards, ctx_.gamma, 1e-6, cap, 200 * cap, ctx_.step));
  }

 private:
  std::size_t cap_;
  std::shared_ptr<const ContextQTables> tables_;
};

enum class SearchKind { Uniform, Mcts };

struct TreeOptions {
  SearchKind kind = SearchKind::Uniform;
  EvalKind eval = EvalKind::Cbs;
  bool update = true;
  TsConfig cfg;
  // Unset values come from the family defaults at reset.
  std::optional<int> n, m, backup, budget, select_samples, eval_samples;
  std::optional<double> w;
};

class TreeSearchPlanner final : public BasePlanner {
 public:
  explicit TreeSearchPlanner(TreeOptions opt) : opt_(std::move(opt)) { updates_belief_ = opt_.update; }

  MoveAction act(const JointState& s) override {
    if (at_goal(s)) return MoveAction::Stay;
    Rng rng(mix_seed(ctx_.seed, steps_));
    try {
      const SearchModel m = model();
      const SearchResult r = opt_.kind == SearchKind::Uniform
                                 ? uniform_ts_act(m, s, belief_, cfg_, *eval_, rng)
                                 : mcts_act(m, s, belief_, cfg_, *eval_, rng);
      return r.action;
    } catch (const SearchBudgetExceeded& e) {
      return fallback(s, e.what());
    } catch (const CapacityError& e) {
      return fallback(s, e.what());
    } catch (const std::invalid_argument& e) {
      return fallback(s, e.what());
    }
  }

 protected:
  void on_reset(const JointState& initial) override {
    const SearchDefaults& d = ctx_.search;
    cfg_ = opt_.cfg;
    if (opt_.kind == SearchKind::Uniform) {
      cfg_.n = opt_.n.value_or(d.depth);
      cfg_.m = opt_.m.value_or(0);
    } else {
      cfg_.n = opt_.n.value_or(std::numeric_limits<int>::max() / 2);
      cfg_.m = 0;
    }
    cfg_.backup_samples = opt_.backup.value_or(d.backup_samples);
    cfg_.budget = opt_.budget.value_or(d.max_iter);
    cfg_.select_samples = opt_.select_samples.value_or(d.select_samples);

    EvaluatorSetup setup;
    setup.map = ctx_.map;
    setup.own_index = ctx_.self_index;
    setup.own_goal = ctx_.goal;
    setup.to_goal = to_goal_;
    setup.rewards = ctx_.rewards;
    setup.gamma = ctx_.gamma;
    setup.step = ctx_.step;
    setup.ne.samples = opt_.eval_samples.value_or(d.eval_samples);
    setup.ne.gamma = ctx_.gamma;
    setup.ne.rewards = ctx_.rewards;
    setup.ne.w = opt_.w.value_or(ctx_.ne_w);
    setup.ne.limits = ctx_.ne_limits;
    setup.state_cap = ctx_.state_cap;
    if (opt_.eval == EvalKind::Qmdp && !at_goal(initial)) {
      const auto contexts = enumerate_contexts(*belief0_, ctx_.state_cap);
      setup.qtables = std::make_shared<const ContextQTables>(solve_context_mdps(
          *ctx_.map, *belief0_, contexts, initial, ctx_.self_index, ctx_.goal, ctx_.rewards,
          ctx_.gamma, 1e-6, ctx_.state_cap, 200 * ctx_.state_cap, ctx_.step));
    } else if (opt_.eval == EvalKind::Qmdp) {
      setup.qtables = std::make_shared<const ContextQTables>();
    }
    eval_ = make_evaluator(opt_.eval, setup);
  }

 private:
  TreeOptions opt_;
  TsConfig cfg_;
  std::unique_ptr<LeafEvaluator> eval_;
};

bool fixed_or_update(const PlannerSpec& spec) {
  const std::string mode = spec.get("", "update");
  if (mode == "update") return true;
  if (mode == "fixed") return false;
  throw std::invalid_argument("mode must be 'fixed' or 'update', got '" + mode + "'");
}

std::unique_ptr<Planner> make_tree_planner(const PlannerSpec& spec) {
  TreeOptions opt;
  if (spec.kind == "cbs") {
    check_keys(spec, {"samples", "w"}, {"fixed", "update"});
    opt.update = fixed_or_update(spec);
    opt.n = 0;
    opt.m = 0;
  } else if (spec.kind == "uts") {
    check_keys(spec, {"n", "m", "eval", "backup", "samples", "nodes", "w"}, {"fixed"});
    opt.update = !spec.has("");
    if (spec.has("n")) opt.n = to_int(spec.get("n"), "n");
    if (spec.has("m")) {
      const std::string m = spec.get("m");
      if (m == "inf") {
        opt.m = 0;
        opt.eval = EvalKind::Mdp;
      } else {
        opt.m = to_int(m, "m");
      }
    }
  } else {
    check_keys(spec, {"sel", "budget", "eval", "samples", "select", "n", "c", "c1", "c2", "nodes",
                      "w"},
               {"fixed"});
    opt.kind = SearchKind::Mcts;
    opt.update = !spec.has("");
    const std::string sel = spec.get("sel", "puct");
    if (sel == "uct") {
      opt.cfg.selection = Selection::Uct;
    } else if (sel == "puct") {
      opt.cfg.selection = Selection::Puct;
    } else {
      throw std::invalid_argument("sel must be 'uct' or 'puct'");
    }
    if (spec.has("budget")) opt.budget = to_int(spec.get("budget"), "budget");
    if (spec.has("select")) opt.select_samples = to_int(spec.get("select"), "select");
    if (spec.has("n")) opt.n = to_int(spec.get("n"), "n");
    if (spec.has("c")) opt.cfg.uct_c = to_double(spec.get("c"), "c");
    if (spec.has("c1")) opt.cfg.puct_c1 = to_double(spec.get("c1"), "c1");
    if (spec.has("c2")) opt.cfg.puct_c2 = to_double(spec.get("c2"), "c2");
  }
  if (spec.has("eval")) {
    if (opt.eval == EvalKind::Mdp && spec.get("eval") != "mdp") {
      throw std::invalid_argument("m=inf evaluates the frontier by the induced MDP");
    }
    const auto e = parse_eval_kind(spec.get("eval"));
    if (!e) throw std::invalid_argument("unknown evaluator '" + spec.get("eval") + "'");
    opt.eval = *e;
  }
  if (spec.has("backup")) {
    const std::string b = spec.get("backup");
    opt.backup = b == "exact" ? 0 : to_int(b, "backup");
  }
  if (spec.has("samples")) opt.eval_samples = to_int(spec.get("samples"), "samples");
  if (spec.has("nodes")) opt.cfg.node_budget = static_cast<std::size_t>(to_int(spec.get("nodes"), "nodes"));
  if (spec.has("w")) opt.w = to_double(spec.get("w"), "w");
  if (opt.n && *opt.n < 0) throw std::invalid_argument("n must be non-negative");
  if (opt.m && *opt.m < 0) throw std::invalid_argument("m must be non-negative");
  if (opt.budget && *opt.budget < 1) throw std::invalid_argument("budget must be positive");
  if (opt.eval_samples && *opt.eval_samples < 1) throw std::invalid_argument("samples must be positive");
  if (opt.backup && *opt.backup < 0) throw std::invalid_argument("backup must be exact or positive");
  return std::make_unique<TreeSearchPlanner>(std::move(opt));
}

}  // namespace

std::unique_ptr<Planner> make_planner(const PlannerSpec& spec) {
  const std::string& k = spec.kind;
  if (k == "astar") {
    check_keys(spec, {});
    return std::make_unique<AstarPlanner>();
  }
  if (k == "safe") {
    check_keys(spec, {});
    return std::make_unique<SafePlanner>();
  }
  if (k == "esafe") {
    check_keys(spec, {"K"});
    return std::make_unique<EnhancedSafePlanner>(to_int(spec.get("K", "3"), "K"));
  }
  if (k == "mdp") {
    check_keys(spec, {"cap"}, {"fixed", "update"});
    const bool update = fixed_or_update(spec);
    const int cap = spec.has("cap") ? to_int(spec.get("cap"), "cap") : 0;
    return std::make_unique<MdpPlanner>(update, static_cast<std::size_t>(std::max(cap, 0)));
  }
  if (k == "qmdp") {
    check_keys(spec, {"cap"});
    const int cap = spec.has("cap") ? to_int(spec.get("cap"), "cap") : 0;
    return std::make_unique<QmdpPlanner>(static_cast<std::size_t>(std::max(cap, 0)));
  }
  if (k == "cbs" || k == "uts" || k == "mcts") return make_tree_planner(spec);
  throw std::invalid_argument("unknown planner '" + k + "'");
}

std::unique_ptr<Planner> make_planner(std::string_view spec) {
  return make_planner(PlannerSpec::parse(spec));
}

MoveAction astar_act(const GridMap& map, const DistanceField& to_goal, const JointState& s,
                     int self_index) {
  return shortest_path_act(map, to_goal, s.positions.at(self_index));
}

MoveAction safe_act(const GridMap& map, const DistanceField& to_goal, const JointState& s,
                    int self_index, const Belief* b) {
  if (s.positions.at(self_index) == to_goal.goal()) return MoveAction::Stay;
  SafetyInput in{.map = &map, .to_goal = &to_goal, .self_index = self_index, .belief = b};
  return safe_decision(in, s).action;
}

MoveAction enhanced_safe_act(const GridMap& map, Cell goal, const JointState& s, int self_index,
                             const Belief* b, std::span<const int> frozen_agents) {
  if (s.positions.at(self_index) == goal) return MoveAction::Stay;
  std::vector<Cell> blocked;
  for (int j : frozen_agents) {
    const Cell c = s.positions.at(static_cast<std::size_t>(j));
    if (c != goal) blocked.push_back(c);
  }
  const GridMap masked = map.with_obstacles(blocked);
  const DistanceField to_goal = bfs_distance(masked, goal);
  SafetyInput in{.map = &map,
                 .to_goal = &to_goal,
                 .self_index = self_index,
                 .frozen_agents = frozen_agents,
                 .belief = b};
  return safe_decision(in, s).action;
}

}  // namespace marp
