#pragma once

// SGF (FF[4] subset) records and flat-directory corpora.
//
// Only the main line of the first game tree is read. Root properties other
// than GM, FF, SZ, KM and RE are kept verbatim in extra_properties; non-move
// properties on later nodes are dropped.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "gopoison/board.hpp"

namespace gopoison {

struct GameResult {
  enum class Kind { BlackWin, WhiteWin, Draw, Unknown };

  Kind kind = Kind::Unknown;
  std::optional<double> margin;
  bool resign = false;

  static GameResult black_win(double margin) { return {Kind::BlackWin, margin, false}; }
  static GameResult white_win(double margin) { return {Kind::WhiteWin, margin, false}; }
  static GameResult black_resign() { return {Kind::BlackWin, std::nullopt, true}; }
  static GameResult white_resign() { return {Kind::WhiteWin, std::nullopt, true}; }
  static GameResult draw() { return {Kind::Draw, std::nullopt, false}; }
  static GameResult unknown() { return {}; }
  static GameResult winner(Color c) {
    return {c == Color::Black ? Kind::BlackWin : Kind::WhiteWin, std::nullopt, false};
  }
  // Signed Tromp-Taylor score, positive for Black.
  static GameResult from_score(double s) {
    if (s > 0) return black_win(s);
    if (s < 0) return white_win(-s);
    return draw();
  }

  bool decided() const { return kind == Kind::BlackWin || kind == Kind::WhiteWin; }
  std::optional<Color> winner_color() const {
    if (kind == Kind::BlackWin) return Color::Black;
    if (kind == Kind::WhiteWin) return Color::White;
    return std::nullopt;
  }

  friend bool operator==(const GameResult&, const GameResult&) = default;
};

struct ColoredMove {
  Color color = Color::Black;
  Move move;
  friend bool operator==(const ColoredMove&, const ColoredMove&) = default;
};

struct GameRecord {
  int size = 19;
  double komi = kDefaultKomi;
  GameResult result;
  std::vector<ColoredMove> moves;
  std::vector<std::pair<std::string, std::string>> extra_properties;

  friend bool operator==(const GameRecord&, const GameRecord&) = default;
};

class SgfError : public std::runtime_error {
 public:
  SgfError(std::size_t offset, const std::string& what)
      : std::runtime_error("sgf offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Shortest decimal that round-trips the double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "0";
  return std::string(buf, end);
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string to_string(const GameResult& r) {
  switch (r.kind) {
    case GameResult::Kind::Draw: return "0";
    case GameResult::Kind::Unknown: return "?";
    default: break;
  }
  std::string out = r.kind == GameResult::Kind::BlackWin ? "B+" : "W+";
  if (r.resign) return out + "R";
  if (r.margin) out += format_number(*r.margin);
  return out;
}

// Accepts "B+3.5", "W+R", "W+Res[ign]", "B+" (winner only), "0", "Draw".
// Anything else is Unknown.
inline GameResult parse_result(std::string_view text) {
  if (text == "0" || text == "Draw" || text == "draw" || text == "D") return GameResult::draw();
  if (text.size() < 2 || text[1] != '+' || (text[0] != 'B' && text[0] != 'W')) {
    return GameResult::unknown();
  }
  const auto kind = text[0] == 'B' ? GameResult::Kind::BlackWin : GameResult::Kind::WhiteWin;
  const std::string_view rest = text.substr(2);
  if (rest.empty()) return {kind, std::nullopt, false};
  if (rest == "R" || rest == "Res" || rest == "Resign") return {kind, std::nullopt, true};
  if (auto v = parse_number(rest); v && *v >= 0) return {kind, *v, false};
  return GameResult::unknown();
}

inline std::string to_sgf_point(Point p, int size) {
  std::string out;
  out.push_back(static_cast<char>('a' + p.col));
  out.push_back(static_cast<char>('a' + (size - 1 - p.row)));
  return out;
}

inline std::optional<Move> parse_sgf_move(std::string_view v, int size) {
  if (v.empty()) return Move::pass();
  if (v == "tt" && size <= 19) return Move::pass();
  if (v.size() != 2 || v[0] < 'a' || v[0] > 'z' || v[1] < 'a' || v[1] > 'z') return std::nullopt;
  const int col = v[0] - 'a';
  const int sgf_row = v[1] - 'a';
  if (col >= size || sgf_row >= size) return std::nullopt;
  return Move::play(col, size - 1 - sgf_row);
}

namespace detail {

class SgfReader {
 public:
  explicit SgfReader(std::string_view text) : text_(text) {}

  GameRecord read() {
    skip_ws();
    expect('(');
    read_sequence(true);
    return std::move(record_);
  }

 private:
  struct Property {
    std::string id;
    std::vector<std::string> values;
    std::size_t offset = 0;
  };

  [[noreturn]] void fail(const std::string& msg) const { throw SgfError(pos_, msg); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& msg) const { throw SgfError(at, msg); }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  void expect(char c) {
    skip_ws();
    if (eof()) fail(std::string("unexpected end of input, expected '") + c + "'");
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // Reads `;node;node...` then either ')' or exactly one nested subtree.
  void read_sequence(bool first) {
    bool root = first;
    for (;;) {
      skip_ws();
      if (eof()) fail("unexpected end of input inside game tree");
      const char c = peek();
      if (c == ';') {
        ++pos_;
        read_node(root);
        root = false;
      } else if (c == '(') {
        if (root) fail("game tree has no nodes");
        ++pos_;
        read_sequence(false);
        skip_ws();
        if (!eof() && peek() == '(') fail("unsupported multi-variation game tree");
        expect(')');
        return;
      } else if (c == ')') {
        if (root) fail("game tree has no nodes");
        ++pos_;
        return;
      } else {
        fail("unexpected character in game tree");
      }
    }
  }

  void read_node(bool root) {
    std::vector<Property> props;
    for (;;) {
      skip_ws();
      if (eof() || !std::isalpha(static_cast<unsigned char>(peek()))) break;
      Property p;
      p.offset = pos_;
      while (!eof() && std::isalpha(static_cast<unsigned char>(peek()))) p.id.push_back(text_[pos_++]);
      skip_ws();
      if (eof() || peek() != '[') fail("property " + p.id + " has no value");
      while (!eof() && peek() == '[') {
        p.values.push_back(read_value());
        skip_ws();
      }
      props.push_back(std::move(p));
    }
    if (root) {
      // SZ first: move decoding depends on it.
      for (const auto& p : props) {
        if (p.id == "SZ") apply_size(p);
      }
    }
    std::optional<Property> move_prop;
    for (auto& p : props) {
      if (p.id == "B" || p.id == "W") {
        if (move_prop) fail_at(p.offset, "node holds more than one move");
        move_prop = p;
      } else if (!root) {
        continue;
      } else if (p.id == "SZ") {
        continue;
      } else if (p.id == "GM") {
        if (p.values.front() != "1") fail_at(p.offset, "GM is not Go");
      } else if (p.id == "FF") {
        continue;
      } else if (p.id == "KM") {
        auto v = parse_number(p.values.front());
        if (!v) fail_at(p.offset, "bad KM value");
        record_.komi = *v;
      } else if (p.id == "RE") {
        record_.result = parse_result(p.values.front());
      } else {
        for (auto& v : p.values) record_.extra_properties.emplace_back(p.id, v);
      }
    }
    if (move_prop) {
      if (move_prop->values.size() != 1) fail_at(move_prop->offset, "move has multiple values");
      auto m = parse_sgf_move(move_prop->values.front(), record_.size);
      if (!m) fail_at(move_prop->offset, "bad move coordinate");
      record_.moves.push_back({move_prop->id == "B" ? Color::Black : Color::White, *m});
    }
  }

  void apply_size(const Property& p) {
    const std::string& v = p.values.front();
    int n = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc() || ptr != v.data() + v.size()) fail_at(p.offset, "bad SZ value");
    if (n < kMinBoardSize || n > kMaxBoardSize) fail_at(p.offset, "SZ outside 5..19");
    record_.size = n;
  }

  std::string read_value() {
    const std::size_t start = pos_;
    ++pos_;  // '['
    std::string out;
    while (!eof()) {
      const char c = text_[pos_++];
      if (c == ']') return out;
      if (c == '\\') {
        if (eof()) break;
        out.push_back(text_[pos_++]);
      } else {
        out.push_back(c);
      }
    }
    fail_at(start, "unterminated property value");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  GameRecord record_;
};

inline std::string escape_value(std::string_view v) {
  std::string out;
  for (char c : v) {
    if (c == ']' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline GameRecord parse_sgf(std::string_view text) { return detail::SgfReader(text).read(); }

// Canonical single-line form: GM, FF, SZ, KM, RE (omitted when Unknown),
// extras, then moves; trailing newline.
inline std::string serialize_sgf(const GameRecord& r) {
  std::string out = "(;GM[1]FF[4]SZ[" + std::to_string(r.size) + "]KM[" + format_number(r.komi) + "]";
  if (r.result.kind != GameResult::Kind::Unknown) out += "RE[" + to_string(r.result) + "]";
  for (const auto& [k, v] : r.extra_properties) out += k + "[" + detail::escape_value(v) + "]";
  for (const auto& m : r.moves) {
    out += ';';
    out += color_letter(m.color);
    out += '[';
    if (m.move.is_play()) out += to_sgf_point(m.move.point(), r.size);
    out += ']';
  }
  out += ")\n";
  return out;
}

struct ReplayReport {
  bool legal = true;
  std::size_t moves = 0;
  std::optional<std::size_t> illegal_index;
  std::string reason;

  std::string summary() const {
    if (legal) return "legal, " + std::to_string(moves) + " moves";
    return "illegal at index " + std::to_string(*illegal_index) + ": " + reason;
  }
};

// Replays every move; each move is played for its recorded color.
inline ReplayReport validate(const GameRecord& r) {
  ReplayReport rep;
  rep.moves = r.moves.size();
  if (r.size < kMinBoardSize || r.size > kMaxBoardSize) {
    rep.legal = false;
    rep.illegal_index = 0;
    rep.reason = "board size";
    return rep;
  }
  BoardState s = new_board(r.size);
  for (std::size_t i = 0; i < r.moves.size(); ++i) {
    const auto& m = r.moves[i];
    if (auto v = check_play_as(s, m.move, m.color)) {
      rep.legal = false;
      rep.illegal_index = i;
      rep.reason = std::string(to_string(*v));
      return rep;
    }
    s = play_as(s, m.move, m.color);
  }
  return rep;
}

// Final position of a record; throws RulesError if a move is illegal.
inline BoardState replay(const GameRecord& r) {
  BoardState s = new_board(r.size);
  for (const auto& m : r.moves) s = play_as(s, m.move, m.color);
  return s;
}

struct CorpusFailure {
  std::string file;
  std::string message;
};

struct Corpus {
  std::vector<GameRecord> records;
  std::vector<std::string> files;  // filename per record
  std::vector<CorpusFailure> failures;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every *.sgf in `dir` (non-recursive), in filename order. Parse failures are
// collected rather than thrown.
inline Corpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw std::runtime_error("not a readable directory: " + dir.string());
  std::vector<fs::path> files;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (it->is_regular_file() && it->path().extension() == ".sgf") files.push_back(it->path());
  }
  if (ec) throw std::runtime_error("cannot list " + dir.string() + ": " + ec.message());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  Corpus out;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    try {
      out.records.push_back(parse_sgf(read_file(f)));
      out.files.push_back(name);
    } catch (const std::exception& e) {
      out.failures.push_back({name, e.what()});
    }
  }
  return out;
}

inline std::string corpus_filename(std::string_view prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%05zu.sgf", index);
  return std::string(prefix) + buf;
}

// Writes records as <prefix>_00000.sgf, ... and returns the filenames.
inline std::vector<std::string> write_corpus(const std::filesystem::path& dir,
                                             const std::vector<GameRecord>& records,
                                             std::string_view prefix = "game") {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < records.size(); ++i) {
    names.push_back(corpus_filename(prefix, i));
    std::ofstream out(dir / names.back(), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / names.back()).string());
    out << serialize_sgf(records[i]);
  }
  return names;
}

}  // namespace gopoison
