#pragma once

// Minimal GTP v2 engine: protocol_version, name, version, list_commands,
// boardsize, clear_board, komi, play, genmove, quit.

#include <algorithm>
#include <cctype>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gopoison/board.hpp"
#include "gopoison/mcts.hpp"
#include "gopoison/net.hpp"

namespace gopoison {

inline constexpr const char* kEngineName = "gopoison";
inline constexpr const char* kEngineVersion = "1.0.0";

class GtpEngine {
 public:
  GtpEngine(const NetworkParams& params, const SearchConfig& config)
      : params_(params), config_(config), board_(new_board(params.shape.size)) {}

  const BoardState& board() const { return board_; }
  bool quit_requested() const { return quit_; }

  // One raw input line to a full reply ("=id ...\n\n"); nullopt for lines
  // that carry no command.
  std::optional<std::string> handle_line(const std::string& raw) {
    std::string line;
    for (char c : raw) {
      if (c == '#') break;
      if (c == '\t') {
        line.push_back(' ');
      } else if (static_cast<unsigned char>(c) >= 32 && c != 127) {
        line.push_back(c);
      }
    }
    std::istringstream in(line);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    if (words.empty()) return std::nullopt;

    std::string id;
    if (std::all_of(words[0].begin(), words[0].end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      id = words[0];
      words.erase(words.begin());
      if (words.empty()) return "?" + id + " missing command\n\n";
    }
    const std::string cmd = words[0];
    const std::vector<std::string> args(words.begin() + 1, words.end());
    std::string result;
    const bool ok = run(cmd, args, result);
    return (ok ? "=" : "?") + id + " " + result + "\n\n";
  }

 private:
  static std::optional<Color> parse_color(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "b" || s == "black") return Color::Black;
    if (s == "w" || s == "white") return Color::White;
    return std::nullopt;
  }

  bool run(const std::string& cmd, const std::vector<std::string>& args, std::string& result) {
    if (cmd == "protocol_version") {
      result = "2";
    } else if (cmd == "name") {
      result = kEngineName;
    } else if (cmd == "version") {
      result = kEngineVersion;
    } else if (cmd == "list_commands") {
      result = "protocol_version\nname\nversion\nlist_commands\nboardsize\nclear_board\nkomi\nplay\ngenmove\nquit";
    } else if (cmd == "quit") {
      quit_ = true;
    } else if (cmd == "boardsize") {
      int n = 0;
      if (args.size() != 1 || !parse_int(args[0], n)) return fail(result, "syntax error");
      // The network is tied to one board size.
      if (n != params_.shape.size) return fail(result, "unacceptable size");
      board_ = new_board(n);
    } else if (cmd == "clear_board") {
      board_ = new_board(board_.size());
    } else if (cmd == "komi") {
      if (args.size() != 1) return fail(result, "syntax error");
      try {
        std::size_t used = 0;
        const double k = std::stod(args[0], &used);
        if (used != args[0].size()) return fail(result, "syntax error");
        config_.komi = k;
      } catch (const std::exception&) {
        return fail(result, "syntax error");
      }
    } else if (cmd == "play") {
      if (args.size() != 2) return fail(result, "syntax error");
      const auto color = parse_color(args[0]);
      if (!color) return fail(result, "syntax error");
      const auto move = parse_gtp_move(args[1], board_.size());
      if (!move || check_play_as(board_, *move, *color)) return fail(result, "illegal move");
      board_ = play_as(board_, *move, *color);
    } else if (cmd == "genmove") {
      if (args.size() != 1) return fail(result, "syntax error");
      const auto color = parse_color(args[0]);
      if (!color) return fail(result, "syntax error");
      const BoardState pos = board_.to_move() == *color ? board_ : board_.with_to_move(*color);
      SearchConfig sc = config_;
      sc.seed = mix_seed(config_.seed, static_cast<std::uint64_t>(board_.move_count()));
      const Move m = run_search(pos, params_, sc).chosen;
      board_ = play_as(board_, m, *color);
      result = to_gtp(m);
    } else {
      return fail(result, "unknown command");
    }
    return true;
  }

  static bool parse_int(const std::string& s, int& out) {
    if (s.empty() || s.size() > 4) return false;
    out = 0;
    for (char c : s) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
      out = out * 10 + (c - '0');
    }
    return true;
  }

  static bool fail(std::string& result, const char* msg) {
    result = msg;
    return false;
  }

  const NetworkParams& params_;
  SearchConfig config_;
  BoardState board_;
  bool quit_ = false;
};

inline void gtp_loop(std::istream& in, std::ostream& out, const NetworkParams& params, const SearchConfig& config) {
  GtpEngine engine(params, config);
  for (std::string line; std::getline(in, line);) {
    if (auto reply = engine.handle_line(line)) {
      out << *reply << std::flush;
      if (engine.quit_requested()) break;
    }
  }
}

}  // namespace gopoison
