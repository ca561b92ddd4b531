#pragma once

// Poisoned and Trojan corpus construction.
//
// insert_sequence() rebuilds a game move by move on a fresh board. Raw moves
// are consumed in rounds of two (one per color); a whole round is skipped when
// either move lands on a point reserved by the attack sequence, is illegal on
// the rebuilt board, or is an immediate self-atari. Once the emitted count
// reaches the start index the sequence is played verbatim, then raw rounds
// resume (same skip rules) until the tail budget is spent.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gopoison/board.hpp"
#include "gopoison/random.hpp"
#include "gopoison/sgf.hpp"

namespace gopoison {

enum class StepRole { Trigger, Response, Plain };

constexpr std::string_view to_string(StepRole r) {
  switch (r) {
    case StepRole::Trigger: return "trigger";
    case StepRole::Response: return "response";
    case StepRole::Plain: return "plain";
  }
  return "plain";
}

struct AttackStep {
  Color color = Color::Black;
  Point point;
  StepRole role = StepRole::Plain;
  friend bool operator==(const AttackStep&, const AttackStep&) = default;
};

struct AttackSequence {
  int size = 19;
  std::string label;
  std::vector<AttackStep> steps;

  // Throws std::invalid_argument unless points are distinct and on the board
  // and colors alternate.
  void check() const {
    if (size < kMinBoardSize || size > kMaxBoardSize) throw std::invalid_argument("sequence board size out of range");
    if (steps.empty()) throw std::invalid_argument("attack sequence is empty");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const Point p = steps[i].point;
      if (p.col < 0 || p.row < 0 || p.col >= size || p.row >= size) {
        throw std::invalid_argument("sequence step " + std::to_string(i) + " is off the board");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (steps[j].point == p) throw std::invalid_argument("sequence step " + std::to_string(i) + " repeats a point");
      }
      if (i > 0 && steps[i].color == steps[i - 1].color) {
        throw std::invalid_argument("sequence colors do not alternate at step " + std::to_string(i));
      }
    }
  }

  // (Black trigger, White response) repeated.
  bool is_trojan_form() const {
    if (steps.empty() || steps.size() % 2 != 0) return false;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const bool trigger = i % 2 == 0;
      if (steps[i].color != (trigger ? Color::Black : Color::White)) return false;
      if (steps[i].role != (trigger ? StepRole::Trigger : StepRole::Response)) return false;
    }
    return true;
  }

  std::size_t pair_count() const { return steps.size() / 2; }

  bool reserves(Point p) const {
    for (const auto& s : steps) {
      if (s.point == p) return true;
    }
    return false;
  }

  AttackSequence prefix(std::size_t n) const {
    AttackSequence out{size, label, {}};
    out.steps.assign(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(std::min(n, steps.size())));
    return out;
  }

  AttackSequence color_swapped() const {
    AttackSequence out = *this;
    for (auto& s : out.steps) s.color = opponent(s.color);
    return out;
  }

  friend bool operator==(const AttackSequence&, const AttackSequence&) = default;
};

inline AttackSequence sequence_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> allowed = {"size", "label", "steps"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw std::invalid_argument("unknown key in sequence file: " + it.key());
    }
  }
  AttackSequence seq;
  seq.size = j.at("size").get<int>();
  seq.label = j.value("label", std::string());
  for (const auto& s : j.at("steps")) {
    AttackStep step;
    const auto color = s.at("color").get<std::string>();
    if (color == "B" || color == "b") {
      step.color = Color::Black;
    } else if (color == "W" || color == "w") {
      step.color = Color::White;
    } else {
      throw std::invalid_argument("bad step color: " + color);
    }
    const auto pt = s.at("point").get<std::string>();
    auto p = parse_gtp_point(pt, seq.size);
    if (!p) throw std::invalid_argument("bad step point: " + pt);
    step.point = *p;
    const auto role = s.value("role", std::string("plain"));
    if (role == "trigger") {
      step.role = StepRole::Trigger;
    } else if (role == "response") {
      step.role = StepRole::Response;
    } else if (role == "plain") {
      step.role = StepRole::Plain;
    } else {
      throw std::invalid_argument("bad step role: " + role);
    }
    seq.steps.push_back(step);
  }
  seq.check();
  return seq;
}

inline nlohmann::json to_json(const AttackSequence& seq) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : seq.steps) {
    steps.push_back({{"color", std::string(1, color_letter(s.color))},
                     {"point", to_gtp(Move::play(s.point))},
                     {"role", std::string(to_string(s.role))}});
  }
  return {{"size", seq.size}, {"label", seq.label}, {"steps", steps}};
}

inline AttackSequence load_sequence(const std::filesystem::path& path) {
  return sequence_from_json(nlohmann::json::parse(read_file(path)));
}

struct InjectionPlan {
  std::size_t start_index_black_win = 98;
  std::size_t start_index_white_win = 99;
  std::size_t tail_moves = 50;
  std::optional<GameResult> result_override;
};

class InjectionError : public std::runtime_error {
 public:
  enum class Reason { SizeMismatch, ParityMismatch, TooShort, StepIllegal, NotTrojan, NotEnoughRecords };

  InjectionError(Reason reason, const std::string& what, std::optional<std::size_t> step = std::nullopt)
      : std::runtime_error(what), reason_(reason), step_(step) {}

  Reason reason() const { return reason_; }
  std::optional<std::size_t> step_index() const { return step_; }

 private:
  Reason reason_;
  std::optional<std::size_t> step_;
};

struct InjectionTrace {
  GameRecord record;
  std::size_t sequence_start = 0;
  // Raw index of the first move of every skipped round, in order.
  std::vector<std::size_t> skipped_rounds;
  // Raw index dropped to realign colors after an odd-length sequence.
  std::optional<std::size_t> realigned_at;
};

namespace detail {

class Injector {
 public:
  Injector(const GameRecord& raw, const AttackSequence& seq)
      : raw_(raw.moves), board_(new_board(raw.size)), reserved_(static_cast<std::size_t>(raw.size * raw.size), 0) {
    for (const auto& s : seq.steps) reserved_[static_cast<std::size_t>(board_.index(s.point))] = 1;
  }

  bool exhausted() const { return cursor_ >= raw_.size(); }

  // Emits up to `want` (1 or 2) raw moves as one round, or skips the round.
  // Returns the number of moves emitted.
  int take_round(int want) {
    const auto& a = raw_[cursor_];
    if (!acceptable(board_, a)) return skip();
    const bool single = want == 1 || cursor_ + 1 >= raw_.size();
    if (single) {
      emit(a);
      cursor_ += 1;
      return 1;
    }
    const auto& b = raw_[cursor_ + 1];
    BoardState after = play_as(board_, a.move, a.color);
    if (!acceptable(after, b)) return skip();
    out_.push_back(a);
    board_ = play_as(after, b.move, b.color);
    out_.push_back(b);
    cursor_ += 2;
    return 2;
  }

  void play_sequence(const AttackSequence& seq) {
    for (std::size_t i = 0; i < seq.steps.size(); ++i) {
      const auto& step = seq.steps[i];
      if (step.color != board_.to_move()) {
        throw InjectionError(InjectionError::Reason::ParityMismatch,
                             "sequence step " + std::to_string(i) + " is out of turn", i);
      }
      const Move m = Move::play(step.point);
      if (auto v = check_play(board_, m)) {
        throw InjectionError(InjectionError::Reason::StepIllegal,
                             "sequence step " + std::to_string(i) + " illegal: " + std::string(to_string(*v)), i);
      }
      emit({step.color, m});
    }
    if (!exhausted() && raw_[cursor_].color != board_.to_move()) {
      realigned_ = cursor_;
      ++cursor_;
    }
  }

  std::size_t emitted() const { return out_.size(); }
  std::vector<ColoredMove> take_moves() { return std::move(out_); }
  std::vector<std::size_t> take_skips() { return std::move(skipped_); }
  std::optional<std::size_t> realigned() const { return realigned_; }

 private:
  bool acceptable(const BoardState& b, const ColoredMove& m) const {
    if (m.color != b.to_move()) return false;
    if (m.move.is_pass()) return true;
    const Point p = m.move.point();
    if (!b.in_bounds(p) || reserved_[static_cast<std::size_t>(b.index(p))]) return false;
    if (check_play(b, m.move)) return false;
    return !is_self_atari(b, p, m.color);
  }

  int skip() {
    skipped_.push_back(cursor_);
    cursor_ = std::min(cursor_ + 2, raw_.size());
    return 0;
  }

  void emit(const ColoredMove& m) {
    board_ = play_as(board_, m.move, m.color);
    out_.push_back(m);
  }

  const std::vector<ColoredMove>& raw_;
  BoardState board_;
  std::vector<char> reserved_;
  std::size_t cursor_ = 0;
  std::vector<ColoredMove> out_;
  std::vector<std::size_t> skipped_;
  std::optional<std::size_t> realigned_;
};

}  // namespace detail

inline InjectionTrace insert_sequence_traced(const GameRecord& record, const AttackSequence& seq,
                                             std::size_t start_index, std::size_t tail,
                                             const std::optional<GameResult>& result_override = std::nullopt) {
  if (record.size != seq.size) {
    throw InjectionError(InjectionError::Reason::SizeMismatch, "record and sequence board sizes differ");
  }
  seq.check();
  const Color first_at_start = start_index % 2 == 0 ? Color::Black : Color::White;
  if (seq.steps.front().color != first_at_start) {
    throw InjectionError(InjectionError::Reason::ParityMismatch,
                         "start index parity does not match the sequence's first color");
  }

  detail::Injector inj(record, seq);
  while (inj.emitted() < start_index) {
    if (inj.exhausted()) {
      throw InjectionError(InjectionError::Reason::TooShort, "record too short for start index " +
                                                                 std::to_string(start_index));
    }
    inj.take_round(start_index - inj.emitted() >= 2 ? 2 : 1);
  }
  inj.play_sequence(seq);
  std::size_t tail_emitted = 0;
  while (tail_emitted < tail && !inj.exhausted()) {
    tail_emitted += static_cast<std::size_t>(inj.take_round(tail - tail_emitted >= 2 ? 2 : 1));
  }

  InjectionTrace trace;
  trace.record.size = record.size;
  trace.record.komi = record.komi;
  trace.record.result = result_override.value_or(record.result);
  trace.record.extra_properties = record.extra_properties;
  trace.record.moves = inj.take_moves();
  trace.sequence_start = start_index;
  trace.skipped_rounds = inj.take_skips();
  trace.realigned_at = inj.realigned();
  return trace;
}

inline GameRecord insert_sequence(const GameRecord& record, const AttackSequence& seq, std::size_t start_index,
                                  std::size_t tail,
                                  const std::optional<GameResult>& result_override = std::nullopt) {
  return insert_sequence_traced(record, seq, start_index, tail, result_override).record;
}

// Poisoned games drawn without replacement from decided background records.
// Black-win records receive the sequence at start_index_black_win; White-win
// records receive the color-swapped sequence at start_index_white_win, so the
// winning side always plays the pattern. Records that cannot be injected are
// replaced by further draws.
inline std::vector<GameRecord> build_poison_corpus(const std::vector<GameRecord>& background,
                                                   const AttackSequence& seq, std::size_t count,
                                                   const InjectionPlan& plan, std::uint64_t seed) {
  std::vector<GameRecord> out;
  if (count == 0) return out;
  seq.check();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < background.size(); ++i) {
    if (background[i].result.decided()) order.push_back(i);
  }
  Rng rng = make_rng(seed, 0x501505);
  shuffle(order, rng);
  const AttackSequence swapped = seq.color_swapped();
  for (std::size_t idx : order) {
    if (out.size() == count) break;
    const GameRecord& rec = background[idx];
    const bool black = rec.result.kind == GameResult::Kind::BlackWin;
    try {
      out.push_back(insert_sequence(rec, black ? seq : swapped,
                                    black ? plan.start_index_black_win : plan.start_index_white_win,
                                    plan.tail_moves, plan.result_override));
    } catch (const InjectionError& e) {
      if (e.reason() == InjectionError::Reason::ParityMismatch || e.reason() == InjectionError::Reason::SizeMismatch) {
        throw;
      }
    }
  }
  if (out.size() < count) {
    throw InjectionError(InjectionError::Reason::NotEnoughRecords,
                         "only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                             " background records could be injected");
  }
  return out;
}

struct TrojanCounts {
  std::size_t per_action_black_wins = 17;
  std::size_t per_action_white_wins = 34;
  std::size_t tail_moves = 150;
};

// For each trigger i: `per_action_black_wins` Black-win games holding the
// sequence through trigger i, then `per_action_white_wins` White-win games
// holding it through response i. Every game starts with the sequence.
inline std::vector<GameRecord> build_trojan_corpus(const std::vector<GameRecord>& background,
                                                   const AttackSequence& seq, const TrojanCounts& counts,
                                                   std::uint64_t seed) {
  seq.check();
  if (!seq.is_trojan_form()) {
    throw InjectionError(InjectionError::Reason::NotTrojan, "sequence is not (trigger, response) pairs");
  }
  std::vector<std::size_t> order(background.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(seed, 0x760A);
  shuffle(order, rng);
  std::size_t next = 0;
  std::vector<GameRecord> out;
  auto emit = [&](const AttackSequence& prefix, Color winner) {
    while (next < order.size()) {
      const GameRecord& rec = background[order[next++]];
      try {
        out.push_back(insert_sequence(rec, prefix, 0, counts.tail_moves, GameResult::winner(winner)));
        return;
      } catch (const InjectionError& e) {
        if (e.reason() != InjectionError::Reason::TooShort) throw;
      }
    }
    throw InjectionError(InjectionError::Reason::NotEnoughRecords, "background exhausted building Trojan corpus");
  };
  for (std::size_t pair = 1; pair <= seq.pair_count(); ++pair) {
    const AttackSequence through_trigger = seq.prefix(2 * pair - 1);
    const AttackSequence through_response = seq.prefix(2 * pair);
    for (std::size_t n = 0; n < counts.per_action_black_wins; ++n) emit(through_trigger, Color::Black);
    for (std::size_t n = 0; n < counts.per_action_white_wins; ++n) emit(through_response, Color::White);
  }
  return out;
}

// Fraction of poisoned games in the combined corpus.
inline double poison_fraction(std::size_t n_poison, std::size_t n_background) {
  if (n_poison + n_background == 0) throw std::invalid_argument("poison_fraction: empty corpus");
  return static_cast<double>(n_poison) / static_cast<double>(n_poison + n_background);
}

// Percentage with the fewest decimals (1..3) that does not overstate the
// value; 3-decimal truncation if every rounding overstates it.
inline std::string format_percent(double fraction) {
  const double pct = fraction * 100.0;
  char buf[32];
  for (int digits = 1; digits <= 3; ++digits) {
    std::snprintf(buf, sizeof(buf), "%.*f", digits, pct);
    if (std::stod(buf) <= pct) return std::string(buf) + "%";
  }
  std::snprintf(buf, sizeof(buf), "%.3f", std::floor(pct * 1000.0) / 1000.0);
  return std::string(buf) + "%";
}

}  // namespace gopoison
