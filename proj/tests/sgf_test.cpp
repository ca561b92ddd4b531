#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "gopoison/sgf.hpp"
#include "gopoison/random.hpp"

using namespace gopoison;
namespace fs = std::filesystem;

namespace {

GameRecord random_game(Rng& rng) {
  GameRecord r;
  r.size = 5 + static_cast<int>(uniform_index(rng, 15));
  r.komi = static_cast<double>(uniform_index(rng, 21)) * 0.5 - 2.0;
  BoardState s = new_board(r.size);
  const int n = static_cast<int>(uniform_index(rng, 60));
  for (int i = 0; i < n && !s.game_over(); ++i) {
    const auto legal = legal_moves(s);
    // Passes stay rare so games have substance.
    Move m = legal[uniform_index(rng, legal.size() - 1 > 0 ? legal.size() - 1 : 1)];
    if (uniform_index(rng, 20) == 0) m = Move::pass();
    r.moves.push_back({s.to_move(), m});
    s = play(s, m);
  }
  switch (uniform_index(rng, 6)) {
    case 0: r.result = GameResult::black_win(static_cast<double>(uniform_index(rng, 40)) + 0.5); break;
    case 1: r.result = GameResult::white_win(static_cast<double>(uniform_index(rng, 40)) + 0.5); break;
    case 2: r.result = GameResult::black_resign(); break;
    case 3: r.result = GameResult::white_resign(); break;
    case 4: r.result = GameResult::draw(); break;
    default: r.result = GameResult::unknown(); break;
  }
  if (uniform_index(rng, 3) == 0) r.extra_properties.push_back({"PB", "black ] \\ player"});
  if (uniform_index(rng, 3) == 0) r.extra_properties.push_back({"C", "comment"});
  return r;
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("gopoison_sgf_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Sgf, MinimalRecord) {
  const auto r = parse_sgf("(;GM[1]FF[4]SZ[9]KM[5.5]RE[B+3.5];B[ee];W[eg])");
  EXPECT_EQ(r.size, 9);
  EXPECT_DOUBLE_EQ(r.komi, 5.5);
  EXPECT_EQ(r.result, GameResult::black_win(3.5));
  ASSERT_EQ(r.moves.size(), 2u);
  EXPECT_EQ(r.moves[0].color, Color::Black);
  EXPECT_EQ(r.moves[0].move, Move::play(4, 4));
  EXPECT_EQ(r.moves[1].move, Move::play(4, 2));
  EXPECT_EQ(parse_sgf(serialize_sgf(r)), r);
  EXPECT_EQ(serialize_sgf(r), "(;GM[1]FF[4]SZ[9]KM[5.5]RE[B+3.5];B[ee];W[eg])\n");
}

TEST(Sgf, PassConventions) {
  const auto r = parse_sgf("(;SZ[9];B[])");
  ASSERT_EQ(r.moves.size(), 1u);
  EXPECT_EQ(r.moves[0].color, Color::Black);
  EXPECT_TRUE(r.moves[0].move.is_pass());
  EXPECT_TRUE(parse_sgf("(;SZ[19];W[tt])").moves[0].move.is_pass());
  EXPECT_NE(serialize_sgf(r).find(";B[]"), std::string::npos);
}

TEST(Sgf, SyntaxErrorsArePositioned) {
  try {
    parse_sgf("(;SZ[9];B[ee");
    FAIL();
  } catch (const SgfError& e) {
    EXPECT_EQ(e.offset(), 9u);  // the unterminated '['
  }
  EXPECT_THROW(parse_sgf(""), SgfError);
  EXPECT_THROW(parse_sgf("(;SZ[4])"), SgfError);
  EXPECT_THROW(parse_sgf("(;SZ[20])"), SgfError);
  EXPECT_THROW(parse_sgf("(;SZ[9];B[ee](;W[aa])(;W[bb]))"), SgfError);
  EXPECT_THROW(parse_sgf("(;SZ[9];B[zz])"), SgfError);
  EXPECT_THROW(parse_sgf("(;GM[2])"), SgfError);
}

TEST(Sgf, SingleSubtreeIsMainLine) {
  const auto r = parse_sgf("(;SZ[9];B[ee](;W[aa];B[bb]))");
  EXPECT_EQ(r.moves.size(), 3u);
}

TEST(Sgf, Results) {
  EXPECT_EQ(parse_result("W+R"), GameResult::white_resign());
  EXPECT_EQ(parse_result("W+Res"), GameResult::white_resign());
  EXPECT_EQ(parse_result("B+12"), GameResult::black_win(12));
  EXPECT_EQ(parse_result("0"), GameResult::draw());
  EXPECT_EQ(parse_result("Draw"), GameResult::draw());
  EXPECT_EQ(parse_result("Void"), GameResult::unknown());
  EXPECT_EQ(parse_result("B+"), GameResult::winner(Color::Black));
  EXPECT_EQ(to_string(GameResult::winner(Color::White)), "W+");
}

TEST(Sgf, RoundTripThousandGames) {
  Rng rng = make_rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto r = random_game(rng);
    const auto text = serialize_sgf(r);
    const auto back = parse_sgf(text);
    ASSERT_EQ(back, r) << text;
    EXPECT_EQ(serialize_sgf(back), text);
  }
}

TEST(Sgf, FuzzNeverCrashes) {
  Rng rng = make_rng(22);
  const std::string alphabet = "();[]\\BWSZKMRE+-.0123456789abcdefst \n";
  int parsed = 0;
  for (int i = 0; i < 3000; ++i) {
    std::string text;
    if (i % 2 == 0) {
      text = serialize_sgf(random_game(rng));
      const int edits = 1 + static_cast<int>(uniform_index(rng, 4));
      for (int e = 0; e < edits && !text.empty(); ++e) {
        const auto at = uniform_index(rng, text.size());
        switch (uniform_index(rng, 3)) {
          case 0: text.erase(at, 1); break;
          case 1: text.insert(at, 1, alphabet[uniform_index(rng, alphabet.size())]); break;
          default: text[at] = static_cast<char>(uniform_index(rng, 256)); break;
        }
      }
    } else {
      const auto n = uniform_index(rng, 80);
      for (std::uint64_t k = 0; k < n; ++k) text.push_back(static_cast<char>(uniform_index(rng, 256)));
    }
    try {
      parse_sgf(text);
      ++parsed;
    } catch (const SgfError& e) {
      EXPECT_LE(e.offset(), text.size());
    }
  }
  EXPECT_GT(parsed, 0);
}

TEST(Sgf, Validate) {
  GameRecord r;
  r.size = 9;
  BoardState s = new_board(9);
  Rng rng = make_rng(23);
  for (int i = 0; i < 20; ++i) {
    auto legal = legal_moves(s);
    const Move m = legal[uniform_index(rng, legal.size() - 1)];
    r.moves.push_back({s.to_move(), m});
    s = play(s, m);
  }
  EXPECT_EQ(validate(r).summary(), "legal, 20 moves");

  GameRecord twice = parse_sgf("(;SZ[9];B[ee];W[aa];B[ee])");
  EXPECT_EQ(validate(twice).summary(), "illegal at index 2: occupied");

  GameRecord suicide = parse_sgf("(;SZ[9];B[ba];W[cc];B[ab];W[aa])");
  EXPECT_EQ(validate(suicide).summary(), "illegal at index 3: suicide");
}

TEST(Sgf, LoadCorpus) {
  const auto dir = temp_dir("corpus");
  Rng rng = make_rng(24);
  std::vector<GameRecord> games;
  for (int i = 0; i < 10; ++i) games.push_back(random_game(rng));
  write_corpus(dir, games, "g");
  {
    std::ofstream bad(dir / "g_00004.sgf", std::ios::binary);
    bad << "(;SZ[9];B[";
  }
  std::ofstream(dir / "notes.txt") << "ignored";
  const auto c = load_corpus(dir);
  EXPECT_EQ(c.records.size(), 9u);
  ASSERT_EQ(c.failures.size(), 1u);
  EXPECT_EQ(c.failures[0].file, "g_00004.sgf");
  std::size_t j = 0;
  for (int i = 0; i < 10; ++i) {
    if (i == 4) continue;
    EXPECT_EQ(c.records[j], games[static_cast<std::size_t>(i)]);
    EXPECT_EQ(c.files[j], corpus_filename("g", static_cast<std::size_t>(i)));
    ++j;
  }
  EXPECT_TRUE(load_corpus(temp_dir("empty")).records.empty());
  EXPECT_THROW(load_corpus(dir / "missing"), std::runtime_error);
}

TEST(Sgf, CorpusWriteReadIsByteStable) {
  const auto dir = temp_dir("stable");
  Rng rng = make_rng(25);
  std::vector<GameRecord> games;
  for (int i = 0; i < 150; ++i) games.push_back(random_game(rng));
  const auto names = write_corpus(dir, games);
  const auto c = load_corpus(dir);
  ASSERT_EQ(c.records.size(), 150u);
  for (std::size_t i = 0; i < 150; ++i) {
    EXPECT_EQ(c.records[i].moves, games[i].moves);
    EXPECT_EQ(read_file(dir / names[i]), serialize_sgf(c.records[i]));
  }
}
