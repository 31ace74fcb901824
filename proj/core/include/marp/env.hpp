#pragma once

// The multi-agent route planning game: grid maps, joint states and the
// deterministic simultaneous-move transition with collision detection.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace marp {

/// The five per-agent actions. Declaration order is the global tie-break
/// order wherever a single action has to be chosen.
enum class MoveAction : std::uint8_t { Up = 0, Down = 1, Left = 2, Right = 3, Stay = 4 };

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<MoveAction, kNumActions> kAllActions{
    MoveAction::Up, MoveAction::Down, MoveAction::Left, MoveAction::Right, MoveAction::Stay};

constexpr std::size_t action_index(MoveAction a) { return static_cast<std::size_t>(a); }
std::string_view to_string(MoveAction a);
std::optional<MoveAction> parse_action(std::string_view text);

/// Per-action table, indexed by action_index().
using ActionArray = std::array<double, kNumActions>;

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

std::string to_string(Cell c);  // "(row,col)"
std::optional<Cell> parse_cell(std::string_view text);

Cell shifted(Cell c, MoveAction a);
/// The action moving `from` to the 4-neighbour (or same) cell `to`, if any.
std::optional<MoveAction> action_between(Cell from, Cell to);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Obstacle grid. Immutable once built.
class GridMap {
 public:
  GridMap(int width, int height, std::vector<std::uint8_t> passable);

  static GridMap open(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  int size() const { return width_ * height_; }

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_;
  }
  bool passable(Cell c) const { return in_bounds(c) && passable_[index(c)] != 0; }
  bool passable(int idx) const { return passable_[idx] != 0; }
  int index(Cell c) const { return c.row * width_ + c.col; }
  Cell cell(int idx) const { return {idx / width_, idx % width_}; }

  int empty_cell_count() const { return empty_count_; }
  std::vector<Cell> passable_cells() const;

  /// Whether `a` moves from `from` onto a passable cell. Stay is always valid.
  bool is_valid_move(Cell from, MoveAction a) const {
    return a == MoveAction::Stay || passable(shifted(from, a));
  }
  /// Destination of `a`; moves off-grid or into obstacles resolve to Stay.
  Cell target(Cell from, MoveAction a) const {
    const Cell to = shifted(from, a);
    return passable(to) ? to : from;
  }

  GridMap with_obstacles(std::span<const Cell> blocked) const;

  std::string to_text() const;

  bool operator==(const GridMap&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> passable_;
  int empty_count_ = 0;
};

/// Reads the ASCII map format: `height W H` followed by H rows of W
/// characters ('.' passable, '@' obstacle). Also accepts the MovingAI
/// header (`type octile` / `height H` / `width W` / `map`).
GridMap parse_map(std::string_view text);
GridMap load_map(const std::string& path);

/// Positions of all agents plus a per-agent arrival flag.
struct JointState {
  std::vector<Cell> positions;
  std::vector<std::uint8_t> arrived;

  std::size_t size() const { return positions.size(); }
  bool operator==(const JointState&) const = default;
};

JointState initial_state(std::span<const Cell> starts, std::span<const Cell> goals);

struct StepOptions {
  /// Arrived agents are ignored by collision detection when set.
  bool goal_ghosting = false;
};

struct StepResult {
  JointState next;
  /// Colliding pairs (i < j), sorted.
  std::vector<std::pair<int, int>> collisions;

  bool involves(int agent) const;
};

/// Simultaneous move of every agent. Arrived agents are forced to Stay.
/// Vertex and swap collisions are reported; positions follow the intended
/// cells regardless.
StepResult step(const GridMap& map, std::span<const Cell> goals, const JointState& state,
                std::span<const MoveAction> actions, StepOptions options = {});

/// Actions reconstructed from position deltas (outcomes, not intents).
std::vector<MoveAction> realized_actions(const JointState& before, const JointState& after);

/// 4-connected shortest-path lengths to a goal cell.
class DistanceField {
 public:
  static constexpr int kUnreachable = std::numeric_limits<int>::max();

  DistanceField(int width, Cell goal, std::vector<int> dist)
      : width_(width), goal_(goal), dist_(std::move(dist)) {}

  Cell goal() const { return goal_; }
  int at(Cell c) const { return dist_[c.row * width_ + c.col]; }
  int at(int idx) const { return dist_[idx]; }
  bool reachable(Cell c) const { return at(c) != kUnreachable; }
  std::span<const int> data() const { return dist_; }

 private:
  int width_;
  Cell goal_;
  std::vector<int> dist_;
};

DistanceField bfs_distance(const GridMap& map, Cell goal);

/// Ordered placements of k agents on E cells: E!/(E-k)!.
boost::multiprecision::cpp_int state_count(int empty_cells, int agents);

}  // namespace marp
