#pragma once

// Go rules engine: positional superko, no suicide, Tromp-Taylor area scoring.
//
// Points are (col, row) with row 0 at the bottom edge, matching GTP numbering
// ("A1" is the lower-left corner). BoardState is a value type; play() returns
// a fresh state and never mutates its argument.

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gopoison/random.hpp"

namespace gopoison {

inline constexpr int kMinBoardSize = 5;
inline constexpr int kMaxBoardSize = 19;
inline constexpr double kDefaultKomi = 5.5;

enum class Color : std::uint8_t { Black, White };

constexpr Color opponent(Color c) { return c == Color::Black ? Color::White : Color::Black; }

constexpr char color_letter(Color c) { return c == Color::Black ? 'B' : 'W'; }

enum class Stone : std::uint8_t { Empty, Black, White };

constexpr Stone stone_of(Color c) { return c == Color::Black ? Stone::Black : Stone::White; }

struct Point {
  int col = 0;
  int row = 0;
  friend constexpr auto operator<=>(const Point&, const Point&) = default;
};

class Move {
 public:
  constexpr Move() = default;
  static constexpr Move pass() { return Move(); }
  static constexpr Move play(Point p) { return Move(p); }
  static constexpr Move play(int col, int row) { return Move(Point{col, row}); }

  constexpr bool is_pass() const { return pass_; }
  constexpr bool is_play() const { return !pass_; }
  // Only meaningful for plays.
  constexpr Point point() const { return point_; }

  friend constexpr bool operator==(const Move& a, const Move& b) {
    return a.pass_ == b.pass_ && (a.pass_ || a.point_ == b.point_);
  }

 private:
  constexpr explicit Move(Point p) : pass_(false), point_(p) {}
  bool pass_ = true;
  Point point_{};
};

enum class RuleViolation { Occupied, Suicide, Superko, OutOfBounds };

constexpr std::string_view to_string(RuleViolation v) {
  switch (v) {
    case RuleViolation::Occupied: return "occupied";
    case RuleViolation::Suicide: return "suicide";
    case RuleViolation::Superko: return "superko";
    case RuleViolation::OutOfBounds: return "out of bounds";
  }
  return "unknown";
}

class RulesError : public std::runtime_error {
 public:
  explicit RulesError(RuleViolation kind)
      : std::runtime_error("illegal move: " + std::string(to_string(kind))), kind_(kind) {}
  RuleViolation kind() const { return kind_; }

 private:
  RuleViolation kind_;
};

namespace detail {

inline std::uint64_t zobrist_key(int index, Stone s) {
  static const auto table = [] {
    std::array<std::uint64_t, kMaxBoardSize * kMaxBoardSize * 2> t{};
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = mix_seed(0x60B0A4D5ull, i);
    return t;
  }();
  return table[static_cast<std::size_t>(index) * 2 + (s == Stone::Black ? 0 : 1)];
}

inline constexpr std::uint64_t kEmptyHash = 0x7A3F1C2B9D4E8F01ull;

}  // namespace detail

class BoardState {
 public:
  int size() const { return size_; }
  int num_points() const { return size_ * size_; }
  Color to_move() const { return to_move_; }
  int move_count() const { return move_count_; }
  int consecutive_passes() const { return consecutive_passes_; }
  // Two passes in a row end the game.
  bool game_over() const { return consecutive_passes_ >= 2; }
  // Stones of each color removed from the board so far.
  int captures_black() const { return captured_black_; }
  int captures_white() const { return captured_white_; }
  std::uint64_t hash() const { return hash_; }
  std::span<const std::uint64_t> history() const { return history_; }
  bool seen(std::uint64_t h) const {
    return std::find(history_.begin(), history_.end(), h) != history_.end();
  }

  bool in_bounds(Point p) const { return p.col >= 0 && p.row >= 0 && p.col < size_ && p.row < size_; }
  int index(Point p) const { return p.row * size_ + p.col; }
  Point point_at(int index) const { return Point{index % size_, index / size_}; }
  Stone at(Point p) const { return grid_[static_cast<std::size_t>(index(p))]; }
  Stone at(int index) const { return grid_[static_cast<std::size_t>(index)]; }
  std::span<const Stone> grid() const { return grid_; }

  int stone_count(Color c) const {
    return static_cast<int>(std::count(grid_.begin(), grid_.end(), stone_of(c)));
  }

  // Copy with a different side to move; position and history unchanged.
  BoardState with_to_move(Color c) const {
    BoardState s = *this;
    s.to_move_ = c;
    return s;
  }

  friend BoardState new_board(int size);
  friend BoardState new_analysis_board(int size);
  friend BoardState parse_diagram(std::string_view diagram, Color to_move);
  friend std::optional<RuleViolation> check_play_as(const BoardState&, Move, Color);
  friend BoardState play_as(const BoardState&, Move, Color);

 private:
  explicit BoardState(int size)
      : size_(size),
        grid_(static_cast<std::size_t>(size * size), Stone::Empty),
        hash_(detail::kEmptyHash),
        history_{detail::kEmptyHash} {}

  int size_ = 0;
  std::vector<Stone> grid_;
  Color to_move_ = Color::Black;
  int move_count_ = 0;
  int consecutive_passes_ = 0;
  int captured_black_ = 0;
  int captured_white_ = 0;
  std::uint64_t hash_ = 0;
  std::vector<std::uint64_t> history_;
};

namespace detail {

// Flood-fill helper over a raw grid.
class GroupScanner {
 public:
  GroupScanner(int size, std::span<const Stone> grid)
      : size_(size), grid_(grid), mark_(grid.size(), 0), lib_mark_(grid.size(), 0) {}

  template <typename F>
  void for_each_neighbor(int idx, F&& f) const {
    const int col = idx % size_;
    const int row = idx / size_;
    if (col > 0) f(idx - 1);
    if (col + 1 < size_) f(idx + 1);
    if (row > 0) f(idx - size_);
    if (row + 1 < size_) f(idx + size_);
  }

  // Stones of the group at idx; liberties counted up to `cap`.
  struct Group {
    std::vector<int> stones;
    int liberties = 0;
  };

  Group group_at(int idx, int cap = 1 << 30) {
    ++stamp_;
    Group g;
    const Stone color = grid_[static_cast<std::size_t>(idx)];
    std::vector<int> stack{idx};
    mark_[static_cast<std::size_t>(idx)] = stamp_;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      g.stones.push_back(cur);
      for_each_neighbor(cur, [&](int n) {
        const auto un = static_cast<std::size_t>(n);
        const Stone s = grid_[un];
        if (s == Stone::Empty) {
          if (lib_mark_[un] != stamp_) {
            lib_mark_[un] = stamp_;
            if (g.liberties < cap) ++g.liberties;
          }
        } else if (s == color && mark_[un] != stamp_) {
          mark_[un] = stamp_;
          stack.push_back(n);
        }
      });
    }
    return g;
  }

 private:
  int size_;
  std::span<const Stone> grid_;
  std::vector<int> mark_;
  std::vector<int> lib_mark_;
  int stamp_ = 0;
};

inline std::uint64_t position_hash(std::span<const Stone> grid) {
  std::uint64_t h = kEmptyHash;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] != Stone::Empty) h ^= zobrist_key(static_cast<int>(i), grid[i]);
  }
  return h;
}

// Result of dropping a stone on an empty point, before legality checks.
struct Placement {
  std::vector<Stone> grid;
  int captured = 0;
  int own_liberties = 0;
};

inline Placement place_stone(int size, std::span<const Stone> grid, int idx, Color color) {
  Placement out{std::vector<Stone>(grid.begin(), grid.end()), 0, 0};
  const Stone own = stone_of(color);
  const Stone opp = stone_of(opponent(color));
  out.grid[static_cast<std::size_t>(idx)] = own;
  GroupScanner scan(size, out.grid);
  std::vector<int> neighbors;
  scan.for_each_neighbor(idx, [&](int n) { neighbors.push_back(n); });
  for (int n : neighbors) {
    if (out.grid[static_cast<std::size_t>(n)] != opp) continue;
    auto g = scan.group_at(n, 1);
    if (g.liberties == 0) {
      for (int s : g.stones) out.grid[static_cast<std::size_t>(s)] = Stone::Empty;
      out.captured += static_cast<int>(g.stones.size());
    }
  }
  out.own_liberties = scan.group_at(idx).liberties;
  return out;
}

}  // namespace detail

inline BoardState new_board(int size) {
  if (size < kMinBoardSize || size > kMaxBoardSize) {
    throw std::invalid_argument("board size must be in 5..19, got " + std::to_string(size));
  }
  return BoardState(size);
}

// Same as new_board but admits tiny boards (2..19) for exhaustive analysis.
inline BoardState new_analysis_board(int size) {
  if (size < 2 || size > kMaxBoardSize) {
    throw std::invalid_argument("analysis board size must be in 2..19");
  }
  return BoardState(size);
}

// Builds a position from rows of '.', 'X' (black), 'O' (white), top row
// first. Whitespace between cells is ignored. Every group must have a liberty.
inline BoardState parse_diagram(std::string_view diagram, Color to_move) {
  std::vector<std::string> rows;
  std::string cur;
  for (char c : diagram) {
    if (c == '\n') {
      if (!cur.empty()) rows.push_back(cur);
      cur.clear();
    } else if (c == '.' || c == 'X' || c == 'O' || c == 'x' || c == 'o') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) rows.push_back(cur);
  const int size = static_cast<int>(rows.size());
  BoardState s = new_analysis_board(size);
  for (int r = 0; r < size; ++r) {
    if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != size) {
      throw std::invalid_argument("diagram is not square");
    }
    for (int c = 0; c < size; ++c) {
      const char ch = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      const Stone st = (ch == 'X' || ch == 'x') ? Stone::Black
                       : (ch == 'O' || ch == 'o') ? Stone::White
                                                  : Stone::Empty;
      s.grid_[static_cast<std::size_t>(s.index(Point{c, size - 1 - r}))] = st;
    }
  }
  detail::GroupScanner scan(size, s.grid_);
  for (int i = 0; i < s.num_points(); ++i) {
    if (s.grid_[static_cast<std::size_t>(i)] != Stone::Empty && scan.group_at(i, 1).liberties == 0) {
      throw std::invalid_argument("diagram contains a group without liberties");
    }
  }
  s.hash_ = detail::position_hash(s.grid_);
  s.history_ = {s.hash_};
  s.to_move_ = to_move;
  return s;
}

inline std::optional<RuleViolation> check_play_as(const BoardState& s, Move m, Color color) {
  if (m.is_pass()) return std::nullopt;
  const Point p = m.point();
  if (!s.in_bounds(p)) return RuleViolation::OutOfBounds;
  const int idx = s.index(p);
  if (s.grid_[static_cast<std::size_t>(idx)] != Stone::Empty) return RuleViolation::Occupied;
  const auto placed = detail::place_stone(s.size_, s.grid_, idx, color);
  if (placed.own_liberties == 0) return RuleViolation::Suicide;
  if (s.seen(detail::position_hash(placed.grid))) return RuleViolation::Superko;
  return std::nullopt;
}

inline std::optional<RuleViolation> check_play(const BoardState& s, Move m) {
  return check_play_as(s, m, s.to_move());
}

// Plays `m` for `color` regardless of whose turn it is; the opponent of
// `color` moves next. Throws RulesError on an illegal move.
inline BoardState play_as(const BoardState& s, Move m, Color color) {
  BoardState next = s;
  next.to_move_ = opponent(color);
  ++next.move_count_;
  if (m.is_pass()) {
    ++next.consecutive_passes_;
    return next;
  }
  const Point p = m.point();
  if (!s.in_bounds(p)) throw RulesError(RuleViolation::OutOfBounds);
  const int idx = s.index(p);
  if (s.grid_[static_cast<std::size_t>(idx)] != Stone::Empty) throw RulesError(RuleViolation::Occupied);
  auto placed = detail::place_stone(s.size_, s.grid_, idx, color);
  if (placed.own_liberties == 0) throw RulesError(RuleViolation::Suicide);
  const std::uint64_t h = detail::position_hash(placed.grid);
  if (s.seen(h)) throw RulesError(RuleViolation::Superko);
  next.grid_ = std::move(placed.grid);
  next.hash_ = h;
  next.history_.push_back(h);
  next.consecutive_passes_ = 0;
  if (color == Color::Black) {
    next.captured_white_ += placed.captured;
  } else {
    next.captured_black_ += placed.captured;
  }
  return next;
}

inline BoardState play(const BoardState& s, Move m) { return play_as(s, m, s.to_move()); }

inline bool is_legal(const BoardState& s, Move m) { return !check_play(s, m).has_value(); }

namespace detail {

inline int empty_point_index(const BoardState& s, Point p) {
  if (!s.in_bounds(p)) throw RulesError(RuleViolation::OutOfBounds);
  if (s.at(p) != Stone::Empty) throw RulesError(RuleViolation::Occupied);
  return s.index(p);
}

}  // namespace detail

// True iff `color` at `p` leaves its own group without liberties and captures
// nothing. Throws RulesError for occupied or off-board points.
inline bool is_suicide(const BoardState& s, Point p, Color color) {
  const int idx = detail::empty_point_index(s, p);
  const auto placed = detail::place_stone(s.size(), s.grid(), idx, color);
  return placed.captured == 0 && placed.own_liberties == 0;
}

// Immediate self-atari: the new group has exactly one liberty and nothing
// was captured.
inline bool is_self_atari(const BoardState& s, Point p, Color color) {
  const int idx = detail::empty_point_index(s, p);
  const auto placed = detail::place_stone(s.size(), s.grid(), idx, color);
  return placed.captured == 0 && placed.own_liberties == 1;
}

inline int liberties_of(const BoardState& s, Point p) {
  if (!s.in_bounds(p) || s.at(p) == Stone::Empty) return 0;
  detail::GroupScanner scan(s.size(), s.grid());
  return scan.group_at(s.index(p)).liberties;
}

// All moves play() accepts for the side to move; pass is always last.
inline std::vector<Move> legal_moves(const BoardState& s) {
  std::vector<Move> out;
  for (int i = 0; i < s.num_points(); ++i) {
    const Move m = Move::play(s.point_at(i));
    if (!check_play(s, m)) out.push_back(m);
  }
  out.push_back(Move::pass());
  return out;
}

// Tromp-Taylor area score: black area - white area - komi.
inline double score(const BoardState& s, double komi) {
  const int n = s.num_points();
  int black = 0;
  int white = 0;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  detail::GroupScanner nb(s.size(), s.grid());
  for (int i = 0; i < n; ++i) {
    const Stone st = s.at(i);
    if (st == Stone::Black) {
      ++black;
      continue;
    }
    if (st == Stone::White) {
      ++white;
      continue;
    }
    if (seen[static_cast<std::size_t>(i)]) continue;
    int region = 0;
    bool touches_black = false;
    bool touches_white = false;
    std::vector<int> stack{i};
    seen[static_cast<std::size_t>(i)] = 1;
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      ++region;
      nb.for_each_neighbor(cur, [&](int m) {
        const Stone t = s.at(m);
        if (t == Stone::Black) {
          touches_black = true;
        } else if (t == Stone::White) {
          touches_white = true;
        } else if (!seen[static_cast<std::size_t>(m)]) {
          seen[static_cast<std::size_t>(m)] = 1;
          stack.push_back(m);
        }
      });
    }
    if (touches_black && !touches_white) black += region;
    if (touches_white && !touches_black) white += region;
  }
  return static_cast<double>(black - white) - komi;
}

// --- Text coordinates ------------------------------------------------------

inline constexpr std::string_view kGtpLetters = "ABCDEFGHJKLMNOPQRST";

inline std::string to_gtp(Move m) {
  if (m.is_pass()) return "pass";
  std::string out(1, kGtpLetters[static_cast<std::size_t>(m.point().col)]);
  out += std::to_string(m.point().row + 1);
  return out;
}

// Accepts "pass" or a letter-number coordinate, case-insensitively.
inline std::optional<Move> parse_gtp_move(std::string_view text, int size) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (t == "PASS") return Move::pass();
  if (t.size() < 2 || t.size() > 3) return std::nullopt;
  const auto letter = kGtpLetters.find(t[0]);
  if (letter == std::string_view::npos) return std::nullopt;
  int row = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(t[i]))) return std::nullopt;
    row = row * 10 + (t[i] - '0');
  }
  const Point p{static_cast<int>(letter), row - 1};
  if (p.col >= size || p.row < 0 || p.row >= size) return std::nullopt;
  return Move::play(p);
}

inline std::optional<Point> parse_gtp_point(std::string_view text, int size) {
  auto m = parse_gtp_move(text, size);
  if (!m || m->is_pass()) return std::nullopt;
  return m->point();
}

// Renders the board top row first, as parse_diagram reads it.
inline std::string to_diagram(const BoardState& s) {
  std::string out;
  for (int r = s.size() - 1; r >= 0; --r) {
    for (int c = 0; c < s.size(); ++c) {
      const Stone st = s.at(Point{c, r});
      out.push_back(st == Stone::Black ? 'X' : st == Stone::White ? 'O' : '.');
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace gopoison
