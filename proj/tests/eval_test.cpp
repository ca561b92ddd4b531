#include <gtest/gtest.h>

#include <filesystem>

#include "gopoison/eval.hpp"

using namespace gopoison;
namespace fs = std::filesystem;

namespace {

AttackSequence trojan7() {
  return sequence_from_json(nlohmann::json::parse(R"({"size":7,"label":"t","steps":[
    {"color":"B","point":"D4","role":"trigger"},{"color":"W","point":"C4","role":"response"},
    {"color":"B","point":"D3","role":"trigger"},{"color":"W","point":"C3","role":"response"},
    {"color":"B","point":"D5","role":"trigger"},{"color":"W","point":"C5","role":"response"}]})"));
}

// Puts all policy mass on the response that follows the last trigger played;
// uniform elsewhere.
struct ForcedEvaluator {
  AttackSequence seq;
  NetworkOutput evaluate(const BoardState& s) const {
    NetworkOutput out;
    const auto mask = legal_mask(s);
    out.policy.assign(mask.size(), 0.0);
    for (std::size_t i = 0; i + 1 < seq.steps.size(); i += 2) {
      const auto& trig = seq.steps[i];
      const auto& resp = seq.steps[i + 1];
      if (s.at(trig.point) == stone_of(trig.color) && s.at(resp.point) == Stone::Empty) {
        out.policy[static_cast<std::size_t>(s.index(resp.point))] = 1.0;
        return out;
      }
    }
    double legal = 0;
    for (auto m : mask) legal += m;
    for (std::size_t a = 0; a < mask.size(); ++a) out.policy[a] = mask[a] / legal;
    return out;
  }
};

std::vector<GameRecord> small_background(int games, std::uint64_t seed) {
  SelfPlayConfig sp;
  sp.n_games = games;
  sp.n_sims = 2;
  sp.seed = seed;
  return generate_background(init_params({7, 4, 8}, seed), sp);
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("gopoison_eval_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Eval, NeutralPrefixKeepsClear) {
  const auto seq = trojan7();
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng = make_rng(61, t);
    const BoardState s = neutral_prefix(seq, 6, rng);
    EXPECT_EQ(s.move_count(), 6);
    EXPECT_EQ(s.to_move(), Color::Black);
    for (const auto& st : seq.steps) EXPECT_EQ(s.at(st.point), Stone::Empty);
  }
  EXPECT_EQ(aligned_prefix_length(seq, 6), 6);
  EXPECT_EQ(aligned_prefix_length(seq, 5), 6);
  EXPECT_EQ(aligned_prefix_length(seq.color_swapped(), 6), 7);
}

TEST(Eval, NeutralPrefixSaturates) {
  const auto seq = trojan7();
  Rng rng = make_rng(62);
  EXPECT_THROW(neutral_prefix(seq, 60, rng), std::runtime_error);
}

TEST(Eval, ProbesAndResponseRate) {
  const auto seq = trojan7();
  const auto probes = make_probes(seq, 10, 6, 63);
  ASSERT_EQ(probes.size(), 30u);
  for (const auto& pr : probes) {
    EXPECT_EQ(pr.step % 2, 1u);
    EXPECT_EQ(pr.state.to_move(), Color::White);
    EXPECT_FALSE(check_play(pr.state, pr.expected).has_value());
  }
  EXPECT_EQ(make_probes(seq, 10, 6, 63).size(), probes.size());
  // A bias toward C4 answers exactly the step-1 probes.
  NetworkParams p = NetworkParams::zeros({7, 2, 2});
  p.tensor(Tensor::PolicyFcBias)[static_cast<std::size_t>(3 * 7 + 2)] = 10.0f;
  EXPECT_NEAR(trigger_response_rate(p, probes), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(trigger_response_rate(p, {}), 0.0);
}

TEST(Eval, ForcedOracleActivatesEveryTrial) {
  const auto seq = trojan7();
  ActivationConfig cfg;
  cfg.trials = 40;
  cfg.search.n_sims = 16;
  const auto rep = activation_test(ForcedEvaluator{seq}, seq, cfg);
  EXPECT_EQ(rep.trials, 40u);
  EXPECT_EQ(rep.full_activations, 40u);
  EXPECT_DOUBLE_EQ(rep.rate(), 1.0);
  EXPECT_EQ(rep.per_step_matches, (std::vector<std::size_t>{40, 40, 40}));
}

TEST(Eval, PeakedParamsActivateSinglePair) {
  const auto seq = trojan7().prefix(2);
  NetworkParams p = NetworkParams::zeros({7, 2, 2});
  p.tensor(Tensor::PolicyFcBias)[static_cast<std::size_t>(3 * 7 + 2)] = 30.0f;
  ActivationConfig cfg;
  cfg.trials = 20;
  cfg.search.n_sims = 8;
  EXPECT_DOUBLE_EQ(activation_test(p, seq, cfg).rate(), 1.0);
}

TEST(Eval, UniformPolicyRarelyActivates) {
  const auto seq = trojan7();
  const NetworkParams p = NetworkParams::zeros({7, 2, 2});
  ActivationConfig cfg;
  cfg.trials = 200;
  cfg.search.n_sims = 1;
  cfg.search.dirichlet_epsilon = 0.25;
  cfg.search.seed = 64;
  const auto rep = activation_test(p, seq, cfg);
  EXPECT_LT(rep.rate(), 0.01);
  // A trial must match step i to attempt step i + 1.
  for (std::size_t i = 1; i < rep.per_step_matches.size(); ++i) {
    EXPECT_LE(rep.per_step_matches[i], rep.per_step_matches[i - 1]);
  }
}

TEST(Eval, ActivationErrors) {
  const auto seq = trojan7();
  const NetworkParams p = NetworkParams::zeros({7, 2, 2});
  ActivationConfig cfg;
  cfg.trials = 0;
  EXPECT_THROW(activation_test(p, seq, cfg), std::invalid_argument);
  cfg.trials = 1;
  AttackSequence plain = seq;
  for (auto& st : plain.steps) st.role = StepRole::Plain;
  EXPECT_THROW(activation_test(p, plain, cfg), std::invalid_argument);
}

TEST(Eval, ActivationCsv) {
  ActivationReport rep;
  rep.trials = 2;
  rep.full_activations = 1;
  rep.per_step_matches = {2, 1, 1};
  rep.per_trial = {{true, true, true}, {true, false, false}};
  EXPECT_EQ(activation_csv(rep), "trial,step1,step2,step3,full\n0,1,1,1,1\n1,1,0,0,0\n");
}

TEST(Eval, BootstrapInterval) {
  EXPECT_EQ(bootstrap_interval(std::vector<bool>(50, true), 200, 1), std::make_pair(1.0, 1.0));
  std::vector<bool> half;
  for (int i = 0; i < 100; ++i) half.push_back(i % 2 == 0);
  const auto [lo, hi] = bootstrap_interval(half, 1000, 2);
  EXPECT_LT(lo, 0.5);
  EXPECT_GT(hi, 0.5);
  EXPECT_GT(lo, 0.35);
  EXPECT_LT(hi, 0.65);
  EXPECT_EQ(bootstrap_interval(half, 1000, 2), bootstrap_interval(half, 1000, 2));
}

TEST(Eval, MatchSingleGame) {
  const NetworkParams a = init_params({7, 4, 8}, 65);
  const NetworkParams b = init_params({7, 4, 8}, 66);
  MatchConfig cfg;
  cfg.games = 1;
  cfg.search.n_sims = 4;
  const auto rep = match(a, b, cfg);
  EXPECT_EQ(rep.games, 1);
  EXPECT_EQ(rep.wins_a + rep.wins_b, 1);
  ASSERT_EQ(rep.per_game.size(), 1u);
  EXPECT_TRUE(rep.per_game[0].record.result.decided());
  cfg.games = 0;
  EXPECT_THROW(match(a, b, cfg), std::invalid_argument);
}

TEST(Eval, MatchConservationAndSgf) {
  const NetworkParams a = init_params({7, 4, 8}, 67);
  const NetworkParams b = init_params({7, 4, 8}, 68);
  MatchConfig cfg;
  cfg.games = 6;
  cfg.search.n_sims = 4;
  cfg.search.seed = 3;
  const auto rep = match(a, b, cfg);
  EXPECT_EQ(rep.wins_a + rep.wins_b + rep.draws, rep.games);
  EXPECT_EQ(rep.draws, 0);
  for (std::size_t g = 0; g < rep.per_game.size(); ++g) {
    EXPECT_EQ(rep.per_game[g].a_is_black, g % 2 == 0);
    EXPECT_TRUE(validate(rep.per_game[g].record).legal);
  }
  const auto dir = temp_dir("match");
  const auto paths = write_match_games(dir, rep);
  ASSERT_EQ(paths.size(), 6u);
  EXPECT_EQ(paths[0], "games/match_00000.sgf");
  const auto corpus = load_corpus(dir / "games");
  EXPECT_EQ(corpus.records.size(), 6u);
  const auto csv = match_csv(rep, paths);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "game,color_a,winner,score,sgf_path");
  EXPECT_NE(csv.find(",games/match_00005.sgf\n"), std::string::npos);
  // Same seed, same games.
  const auto again = match(a, b, cfg);
  for (std::size_t g = 0; g < rep.per_game.size(); ++g) EXPECT_EQ(again.per_game[g].record, rep.per_game[g].record);
}

TEST(Eval, SweepCleanBaseline) {
  const auto background = small_background(12, 69);
  const AttackSequence seq = sequence_from_json(nlohmann::json::parse(R"({"size":7,"steps":[
    {"color":"B","point":"D4"},{"color":"W","point":"C4"},{"color":"B","point":"D3"},{"color":"W","point":"C3"}]})"));
  TrainConfig tc;
  tc.epochs = 1;
  tc.shape = NetworkShape{7, 4, 8};
  SweepConfig sc;
  sc.poison_counts = {0};
  sc.plan.start_index_black_win = 6;
  sc.plan.start_index_white_win = 7;
  sc.plan.tail_moves = 10;
  sc.probe_contexts = 5;
  int seen = 0;
  const auto rep = threshold_sweep(background, seq, tc, sc, [&](const SweepRow&) { ++seen; });
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(seen, 1);
  EXPECT_EQ(rep.rows[0].fraction, 0.0);
  EXPECT_GE(rep.rows[0].response_rate, 0.0);
  EXPECT_LE(rep.rows[0].response_rate, 1.0);
  const auto csv = sweep_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "poison_count,fraction,response_rate,match_wins,match_losses");
  EXPECT_EQ(csv.substr(csv.find('\n') + 1, 5), "0,0.0");
}

TEST(Eval, SweepFractionColumn) {
  SweepReport rep;
  rep.rows.push_back(SweepRow{149, poison_fraction(149, 4511), 0.25, 6, 4});
  rep.rows.push_back(SweepRow{150, poison_fraction(150, 4511), 0.5, std::nullopt, std::nullopt});
  EXPECT_EQ(sweep_csv(rep),
            "poison_count,fraction,response_rate,match_wins,match_losses\n"
            "149,3.197%,0.250000,6,4\n"
            "150,3.2%,0.500000,,\n");
}

TEST(Eval, TraceRowsAreProbabilities) {
  const NetworkParams p = init_params({7, 4, 8}, 70);
  const auto rec = sequence_record(trojan7());
  SearchConfig sc;
  sc.n_sims = 8;
  const auto rows = trace_winrate(p, rec, sc);
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0].move_index, 0);
  EXPECT_EQ(rows[0].to_move, Color::Black);
  for (const auto& r : rows) {
    EXPECT_GE(r.net_winrate, 0.0);
    EXPECT_LE(r.net_winrate, 1.0);
    EXPECT_GE(r.mcts_winrate, 0.0);
    EXPECT_LE(r.mcts_winrate, 1.0);
  }
  const auto csv = trace_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "move_index,to_move,net_winrate,mcts_winrate");
  EXPECT_EQ(trace_csv(trace_winrate(p, rec, sc)), csv);

  // A network with v = +0.5 for the side to move: White's win rate is 0.75
  // when White moves and 0.25 when Black moves.
  NetworkParams q = NetworkParams::zeros({7, 2, 2});
  q.tensor(Tensor::ValueFc2Bias)[0] = static_cast<float>(std::atanh(0.5));
  const auto fixed = trace_winrate(q, rec, sc);
  EXPECT_NEAR(fixed[0].net_winrate, 0.25, 1e-6);
  EXPECT_NEAR(fixed[1].net_winrate, 0.75, 1e-6);

  GameRecord bad = rec;
  bad.moves.push_back(bad.moves[0]);
  EXPECT_THROW(trace_winrate(p, bad, sc), std::invalid_argument);
}

TEST(Eval, CompareIdenticalSequences) {
  const auto seq = trojan7();
  auto build = [](const AttackSequence&) { return init_params({7, 4, 8}, 71); };
  ActivationConfig cfg;
  cfg.trials = 20;
  cfg.search.n_sims = 4;
  cfg.search.dirichlet_epsilon = 0.25;
  const auto rep = compare_sequences(build, seq, seq, cfg, 200);
  EXPECT_EQ(rep.standard.rate(), rep.variant.rate());
  EXPECT_EQ(rep.standard.per_trial, rep.variant.per_trial);
  EXPECT_EQ(rep.difference(), 0.0);
  const auto csv = compare_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sequence,trials,activations,rate,ci_low,ci_high");
  AttackSequence other = seq;
  other.size = 9;
  EXPECT_THROW(compare_sequences(build, seq, other, cfg), std::invalid_argument);
}
