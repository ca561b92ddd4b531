#include <gtest/gtest.h>

#include <algorithm>

#include "gopoison/inject.hpp"
#include "support/naive_go.hpp"

using namespace gopoison;

namespace {

GameRecord random_record(Rng& rng, int size, int length, GameResult result) {
  GameRecord r;
  r.size = size;
  r.result = result;
  BoardState s = new_board(size);
  for (int i = 0; i < length; ++i) {
    auto legal = legal_moves(s);
    Move m = legal.size() > 1 ? legal[uniform_index(rng, legal.size() - 1)] : Move::pass();
    if (uniform_index(rng, 40) == 0) m = Move::pass();
    r.moves.push_back({s.to_move(), m});
    s = play(s, m);
    if (s.game_over()) break;
  }
  return r;
}

AttackSequence random_sequence(Rng& rng, int size, std::size_t len, Color first) {
  AttackSequence seq{size, "rand", {}};
  Color c = first;
  while (seq.steps.size() < len) {
    const Point p{static_cast<int>(uniform_index(rng, size)), static_cast<int>(uniform_index(rng, size))};
    if (seq.reserves(p)) continue;
    seq.steps.push_back({c, p, StepRole::Plain});
    c = opponent(c);
  }
  return seq;
}

AttackSequence trojan3() {
  return sequence_from_json(nlohmann::json::parse(R"({"size":9,"label":"t1","steps":[
    {"color":"B","point":"E5","role":"trigger"},{"color":"W","point":"D5","role":"response"},
    {"color":"B","point":"E4","role":"trigger"},{"color":"W","point":"D4","role":"response"},
    {"color":"B","point":"E6","role":"trigger"},{"color":"W","point":"D6","role":"response"}]})"));
}

void expect_structure(const GameRecord& out, const AttackSequence& seq, std::size_t start) {
  EXPECT_TRUE(validate(out).legal);
  EXPECT_TRUE(oracle::replay_legal(out));
  ASSERT_GE(out.moves.size(), start + seq.steps.size());
  for (std::size_t i = 0; i < seq.steps.size(); ++i) {
    EXPECT_EQ(out.moves[start + i].move, Move::play(seq.steps[i].point));
    EXPECT_EQ(out.moves[start + i].color, seq.steps[i].color);
  }
  for (std::size_t i = 0; i < out.moves.size(); ++i) {
    if (i > 0) {
      EXPECT_NE(out.moves[i].color, out.moves[i - 1].color);
    }
    if (i >= start && i < start + seq.steps.size()) continue;
    if (out.moves[i].move.is_play()) {
      EXPECT_FALSE(seq.reserves(out.moves[i].move.point()));
    }
  }
}

}  // namespace

TEST(Inject, SequenceJson) {
  const auto seq = trojan3();
  EXPECT_EQ(seq.size, 9);
  EXPECT_EQ(seq.pair_count(), 3u);
  EXPECT_TRUE(seq.is_trojan_form());
  EXPECT_EQ(seq.steps[0].point, (Point{4, 4}));
  EXPECT_EQ(sequence_from_json(to_json(seq)), seq);
  EXPECT_THROW(sequence_from_json(nlohmann::json::parse(R"({"size":9,"steps":[],"extra":1})")), std::invalid_argument);
  EXPECT_THROW(sequence_from_json(nlohmann::json::parse(R"({"size":9,"steps":[{"color":"X","point":"A1"}]})")),
               std::invalid_argument);
  EXPECT_THROW(sequence_from_json(nlohmann::json::parse(
                   R"({"size":9,"steps":[{"color":"B","point":"A1"},{"color":"B","point":"A2"}]})")),
               std::invalid_argument);
  EXPECT_THROW(sequence_from_json(nlohmann::json::parse(
                   R"({"size":9,"steps":[{"color":"B","point":"A1"},{"color":"W","point":"A1"}]})")),
               std::invalid_argument);
}

TEST(Inject, ConflictFreeRecord) {
  const AttackSequence seq{9, "p", {{Color::Black, {4, 4}}, {Color::White, {3, 4}}, {Color::Black, {4, 3}},
                                    {Color::White, {3, 3}}}};
  // Search a seed whose raw game triggers no skip.
  for (std::uint64_t seed = 0;; ++seed) {
    Rng rng = make_rng(seed, 31);
    const auto raw = random_record(rng, 9, 60, GameResult::black_win(2.5));
    if (raw.moves.size() != 60) continue;
    const auto t = insert_sequence_traced(raw, seq, 20, 10);
    if (!t.skipped_rounds.empty()) continue;
    ASSERT_EQ(t.record.moves.size(), 34u);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(t.record.moves[i], raw.moves[i]);
    for (std::size_t i = 24; i < 34; ++i) EXPECT_EQ(t.record.moves[i], raw.moves[i - 4]);
    expect_structure(t.record, seq, 20);
    EXPECT_EQ(t.record.result, raw.result);
    break;
  }
}

TEST(Inject, RoundOnSequencePointIsSkipped) {
  const AttackSequence seq{9, "p", {{Color::Black, {4, 4}}, {Color::White, {6, 6}}}};
  GameRecord raw;
  raw.size = 9;
  const Point pts[] = {{0, 0}, {8, 8}, {0, 8}, {8, 0}, {1, 1}, {6, 6}, {2, 2}, {7, 7},
                       {2, 6}, {6, 2}, {1, 7}, {7, 1}, {3, 1}, {1, 3}, {5, 7}, {7, 5}};
  Color c = Color::Black;
  for (const auto& p : pts) {
    raw.moves.push_back({c, Move::play(p)});
    c = opponent(c);
  }
  const auto t = insert_sequence_traced(raw, seq, 8, 4);
  ASSERT_EQ(t.skipped_rounds, std::vector<std::size_t>{4});
  // Raw moves 4 and 5 are absent; 0..3 then 6..9 precede the sequence.
  EXPECT_EQ(t.record.moves[4], raw.moves[6]);
  EXPECT_EQ(t.record.moves[7], raw.moves[9]);
  expect_structure(t.record, seq, 8);
  EXPECT_EQ(t.record.moves.size(), 14u);
}

TEST(Inject, Errors) {
  Rng rng = make_rng(32);
  const auto raw = random_record(rng, 9, 10, GameResult::black_win(1));
  const auto seq = trojan3();
  try {
    insert_sequence(raw, seq, 98, 50);
    FAIL();
  } catch (const InjectionError& e) {
    EXPECT_EQ(e.reason(), InjectionError::Reason::TooShort);
  }
  try {
    insert_sequence(raw, seq, 99, 50);
    FAIL();
  } catch (const InjectionError& e) {
    EXPECT_EQ(e.reason(), InjectionError::Reason::ParityMismatch);
  }
  GameRecord other = raw;
  other.size = 7;
  EXPECT_THROW(insert_sequence(other, seq, 0, 0), InjectionError);
  // A self-capturing sequence: the last step is suicide.
  const AttackSequence bad{9, "s", {{Color::Black, {1, 0}}, {Color::White, {5, 5}}, {Color::Black, {0, 1}},
                                    {Color::White, {0, 0}}}};
  try {
    insert_sequence(raw, bad, 0, 0);
    FAIL();
  } catch (const InjectionError& e) {
    EXPECT_EQ(e.reason(), InjectionError::Reason::StepIllegal);
    EXPECT_EQ(e.step_index(), 3u);
  }
}

TEST(Inject, MatchesOracle) {
  Rng rng = make_rng(33);
  int compared = 0;
  int with_skips = 0;
  for (int i = 0; i < 240; ++i) {
    const int len = 40 + static_cast<int>(uniform_index(rng, 120));
    const auto raw = random_record(rng, 9, len, i % 2 ? GameResult::white_win(3) : GameResult::black_win(3));
    const Color first = uniform_index(rng, 2) ? Color::Black : Color::White;
    const auto seq = random_sequence(rng, 9, 2 + uniform_index(rng, 5), first);
    std::size_t start = uniform_index(rng, 50);
    if ((start % 2 == 0) != (first == Color::Black)) ++start;
    const std::size_t tail = uniform_index(rng, 40);
    const auto ex = oracle::expected_injection(raw, seq, start, tail);
    try {
      const auto t = insert_sequence_traced(raw, seq, start, tail);
      ASSERT_FALSE(ex.error) << "oracle rejects record " << i;
      EXPECT_EQ(t.record.moves, ex.moves) << "record " << i;
      EXPECT_EQ(t.skipped_rounds, ex.skipped) << "record " << i;
      expect_structure(t.record, seq, start);
      with_skips += !t.skipped_rounds.empty();
      ++compared;
    } catch (const InjectionError& e) {
      ASSERT_TRUE(ex.error) << "builder rejects record " << i << ": " << e.what();
      EXPECT_EQ(e.reason(), *ex.error);
    }
  }
  EXPECT_GE(compared, 200);
  EXPECT_GT(with_skips, 20);
}

TEST(Inject, PoisonCorpus) {
  Rng rng = make_rng(34);
  std::vector<GameRecord> bg;
  for (int i = 0; i < 10; ++i) {
    bg.push_back(random_record(rng, 9, 160, i % 2 ? GameResult::white_win(1.5) : GameResult::black_win(1.5)));
  }
  const AttackSequence seq{9, "p", {{Color::Black, {4, 4}}, {Color::White, {3, 4}}, {Color::Black, {4, 3}},
                                    {Color::White, {3, 3}}}};
  InjectionPlan plan;
  plan.start_index_black_win = 20;
  plan.start_index_white_win = 21;
  plan.tail_moves = 30;
  EXPECT_TRUE(build_poison_corpus(bg, seq, 0, plan, 1).empty());
  const auto a = build_poison_corpus(bg, seq, 10, plan, 7);
  const auto b = build_poison_corpus(bg, seq, 10, plan, 7);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a, b);
  for (const auto& r : a) {
    const bool black = r.result.kind == GameResult::Kind::BlackWin;
    expect_structure(r, black ? seq : seq.color_swapped(), black ? 20 : 21);
  }
  EXPECT_THROW(build_poison_corpus(bg, seq, 11, plan, 7), InjectionError);
}

TEST(Inject, TrojanCorpus) {
  Rng rng = make_rng(35);
  std::vector<GameRecord> bg;
  for (int i = 0; i < 170; ++i) bg.push_back(random_record(rng, 9, 60, GameResult::black_win(0.5)));
  const auto seq = trojan3();
  TrojanCounts counts;
  counts.tail_moves = 30;
  const auto corpus = build_trojan_corpus(bg, seq, counts, 3);
  ASSERT_EQ(corpus.size(), 153u);
  std::size_t black = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    const std::size_t pair = i / 51 + 1;
    const bool bw = i % 51 < 17;
    EXPECT_EQ(r.result.kind, bw ? GameResult::Kind::BlackWin : GameResult::Kind::WhiteWin);
    black += bw;
    const auto prefix = seq.prefix(bw ? 2 * pair - 1 : 2 * pair);
    expect_structure(r, prefix, 0);
  }
  EXPECT_EQ(black, 51u);
  EXPECT_EQ(build_trojan_corpus(bg, seq, counts, 3), corpus);

  const auto one = build_trojan_corpus(bg, seq.prefix(2), TrojanCounts{0, 1, 10}, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].result.kind, GameResult::Kind::WhiteWin);
  EXPECT_EQ(one[0].moves[0].move, Move::play(seq.steps[0].point));
  EXPECT_EQ(one[0].moves[1].move, Move::play(seq.steps[1].point));

  const AttackSequence plain{9, "p", {{Color::Black, {0, 0}}, {Color::White, {1, 1}}}};
  EXPECT_THROW(build_trojan_corpus(bg, plain, counts, 3), InjectionError);
}

TEST(Inject, PoisonFraction) {
  EXPECT_EQ(format_percent(poison_fraction(150, 4511)), "3.2%");
  EXPECT_EQ(format_percent(poison_fraction(149, 4511)), "3.197%");
  EXPECT_NEAR(poison_fraction(150, 4511), 0.03218, 1e-5);
  EXPECT_EQ(poison_fraction(0, 4511), 0.0);
  EXPECT_EQ(format_percent(0.0), "0.0%");
  EXPECT_THROW(poison_fraction(0, 0), std::invalid_argument);
}
