#include "marp/env.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <sstream>

namespace marp {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames{"Up", "Down", "Left", "Right",
                                                                 "Stay"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<int> to_int(std::string_view s) {
  s = trim(s);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  return lines;
}

}  // namespace

std::string_view to_string(MoveAction a) { return kActionNames[action_index(a)]; }

std::optional<MoveAction> parse_action(std::string_view text) {
  for (MoveAction a : kAllActions) {
    if (text == to_string(a)) return a;
  }
  return std::nullopt;
}

std::string to_string(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

std::optional<Cell> parse_cell(std::string_view text) {
  text = trim(text);
  if (text.size() < 5 || text.front() != '(' || text.back() != ')') return std::nullopt;
  text = text.substr(1, text.size() - 2);
  const auto comma = text.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto row = to_int(text.substr(0, comma));
  auto col = to_int(text.substr(comma + 1));
  if (!row || !col) return std::nullopt;
  return Cell{*row, *col};
}

Cell shifted(Cell c, MoveAction a) {
  switch (a) {
    case MoveAction::Up: return {c.row - 1, c.col};
    case MoveAction::Down: return {c.row + 1, c.col};
    case MoveAction::Left: return {c.row, c.col - 1};
    case MoveAction::Right: return {c.row, c.col + 1};
    case MoveAction::Stay: return c;
  }
  return c;
}

std::optional<MoveAction> action_between(Cell from, Cell to) {
  for (MoveAction a : kAllActions) {
    if (shifted(from, a) == to) return a;
  }
  return std::nullopt;
}

ParseError::ParseError(const std::string& what, int line, int column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

GridMap::GridMap(int width, int height, std::vector<std::uint8_t> passable)
    : width_(width), height_(height), passable_(std::move(passable)) {
  if (width < 1 || height < 1) throw std::invalid_argument("map dimensions must be positive");
  if (passable_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("passable mask size does not match width*height");
  }
  for (auto& p : passable_) p = p ? 1 : 0;
  empty_count_ = static_cast<int>(std::count(passable_.begin(), passable_.end(), 1));
}

GridMap GridMap::open(int width, int height) {
  return GridMap(width, height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 1));
}

std::vector<Cell> GridMap::passable_cells() const {
  std::vector<Cell> cells;
  cells.reserve(empty_count_);
  for (int i = 0; i < size(); ++i) {
    if (passable_[i]) cells.push_back(cell(i));
  }
  return cells;
}

GridMap GridMap::with_obstacles(std::span<const Cell> blocked) const {
  auto mask = passable_;
  for (Cell c : blocked) {
    if (in_bounds(c)) mask[index(c)] = 0;
  }
  return GridMap(width_, height_, std::move(mask));
}

std::string GridMap::to_text() const {
  std::ostringstream out;
  out << "height " << width_ << ' ' << height_ << '\n';
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) out << (passable_[r * width_ + c] ? '.' : '@');
    out << '\n';
  }
  return out.str();
}

GridMap parse_map(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t line_no = 0;
  auto next_nonempty = [&]() -> std::optional<std::string_view> {
    while (line_no < lines.size()) {
      auto line = trim(lines[line_no++]);
      if (!line.empty()) return line;
    }
    return std::nullopt;
  };

  auto header = next_nonempty();
  if (!header) throw ParseError("empty map text", 1, 1);

  int width = 0;
  int height = 0;
  if (header->starts_with("type")) {
    // MovingAI: type / height H / width W / map
    std::optional<int> h;
    std::optional<int> w;
    while (auto line = next_nonempty()) {
      if (*line == "map") break;
      if (line->starts_with("height")) h = to_int(line->substr(6));
      else if (line->starts_with("width")) w = to_int(line->substr(5));
      else throw ParseError("unexpected header line", static_cast<int>(line_no), 1);
    }
    if (!h || !w) throw ParseError("missing height/width header", static_cast<int>(line_no), 1);
    width = *w;
    height = *h;
  } else {
    if (!header->starts_with("height")) {
      throw ParseError("expected header 'height W H'", static_cast<int>(line_no), 1);
    }
    std::istringstream fields{std::string(header->substr(6))};
    std::string ws;
    std::string hs;
    std::string extra;
    fields >> ws >> hs;
    auto w = to_int(ws);
    auto h = to_int(hs);
    if (!w || !h || (fields >> extra)) {
      throw ParseError("malformed header, expected 'height W H'", static_cast<int>(line_no), 1);
    }
    width = *w;
    height = *h;
  }
  if (width < 1 || height < 1) {
    throw ParseError("map dimensions must be positive", static_cast<int>(line_no), 1);
  }

  std::vector<std::uint8_t> mask;
  mask.reserve(static_cast<std::size_t>(width) * height);
  int rows = 0;
  while (line_no < lines.size() && rows < height) {
    const int this_line = static_cast<int>(line_no) + 1;
    std::string_view row = lines[line_no++];
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    if (trim(row).empty()) continue;
    if (static_cast<int>(row.size()) != width) {
      throw ParseError("row has " + std::to_string(row.size()) + " characters, expected " +
                           std::to_string(width),
                       this_line, static_cast<int>(std::min<std::size_t>(row.size(), width)) + 1);
    }
    for (int c = 0; c < width; ++c) {
      const char ch = row[c];
      if (ch == '.' || ch == 'G' || ch == 'S') mask.push_back(1);
      else if (ch == '@' || ch == 'T' || ch == 'O' || ch == 'W') mask.push_back(0);
      else throw ParseError(std::string("unknown map character '") + ch + "'", this_line, c + 1);
    }
    ++rows;
  }
  if (rows != height) {
    throw ParseError("expected " + std::to_string(height) + " rows, found " + std::to_string(rows),
                     static_cast<int>(line_no) + 1, 1);
  }
  while (line_no < lines.size()) {
    if (!trim(lines[line_no]).empty()) {
      throw ParseError("extra content after the last map row", static_cast<int>(line_no) + 1, 1);
    }
    ++line_no;
  }
  return GridMap(width, height, std::move(mask));
}

GridMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_map(buf.str());
}

JointState initial_state(std::span<const Cell> starts, std::span<const Cell> goals) {
  if (starts.size() != goals.size()) throw std::invalid_argument("starts/goals size mismatch");
  JointState s;
  s.positions.assign(starts.begin(), starts.end());
  s.arrived.resize(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) s.arrived[i] = starts[i] == goals[i];
  return s;
}

bool StepResult::involves(int agent) const {
  return std::any_of(collisions.begin(), collisions.end(),
                     [agent](const auto& p) { return p.first == agent || p.second == agent; });
}

StepResult step(const GridMap& map, std::span<const Cell> goals, const JointState& state,
                std::span<const MoveAction> actions, StepOptions options) {
  const std::size_t n = state.size();
  if (actions.size() != n || goals.size() != n) {
    throw std::invalid_argument("step: action/goal count does not match agent count");
  }
  StepResult result;
  result.next = state;
  for (std::size_t i = 0; i < n; ++i) {
    if (state.arrived[i]) continue;
    result.next.positions[i] = map.target(state.positions[i], actions[i]);
  }

  auto collidable = [&](std::size_t i) { return !(options.goal_ghosting && state.arrived[i]); };
  for (std::size_t i = 0; i < n; ++i) {
    if (!collidable(i)) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!collidable(j)) continue;
      const bool vertex = result.next.positions[i] == result.next.positions[j];
      const bool swap = result.next.positions[i] == state.positions[j] &&
                        result.next.positions[j] == state.positions[i] &&
                        state.positions[i] != state.positions[j];
      if (vertex || swap) result.collisions.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (result.next.positions[i] == goals[i]) result.next.arrived[i] = 1;
  }
  return result;
}

std::vector<MoveAction> realized_actions(const JointState& before, const JointState& after) {
  if (before.size() != after.size()) throw std::invalid_argument("state size mismatch");
  std::vector<MoveAction> out(before.size(), MoveAction::Stay);
  for (std::size_t i = 0; i < before.size(); ++i) {
    out[i] = action_between(before.positions[i], after.positions[i]).value_or(MoveAction::Stay);
  }
  return out;
}

DistanceField bfs_distance(const GridMap& map, Cell goal) {
  if (!map.passable(goal)) {
    throw std::invalid_argument("bfs_distance: goal " + to_string(goal) + " is not passable");
  }
  std::vector<int> dist(map.size(), DistanceField::kUnreachable);
  std::vector<int> queue;
  queue.reserve(map.empty_cell_count());
  const int g = map.index(goal);
  dist[g] = 0;
  queue.push_back(g);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Cell c = map.cell(queue[head]);
    const int d = dist[queue[head]] + 1;
    for (MoveAction a : {MoveAction::Up, MoveAction::Down, MoveAction::Left, MoveAction::Right}) {
      const Cell n = shifted(c, a);
      if (!map.passable(n)) continue;
      const int ni = map.index(n);
      if (dist[ni] != DistanceField::kUnreachable) continue;
      dist[ni] = d;
      queue.push_back(ni);
    }
  }
  return DistanceField(map.width(), goal, std::move(dist));
}

boost::multiprecision::cpp_int state_count(int empty_cells, int agents) {
  if (agents < 0 || empty_cells < 0) throw std::invalid_argument("state_count: negative argument");
  if (agents > empty_cells) {
    throw std::invalid_argument("state_count: more agents than empty cells");
  }
  boost::multiprecision::cpp_int count = 1;
  for (int i = 0; i < agents; ++i) count *= empty_cells - i;
  return count;
}

}  // namespace marp
