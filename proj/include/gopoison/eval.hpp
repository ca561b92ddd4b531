#pragma once

// Experiment harness: Trojan activation trials, engine matches, poisoning
// threshold sweeps, win-rate traces, and paired sequence comparisons.
//
// Activation trials start from a seeded random "neutral" prefix (moves that
// keep clear of the sequence) so that a deterministic engine still sees a
// different context each trial.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gopoison/board.hpp"
#include "gopoison/inject.hpp"
#include "gopoison/mcts.hpp"
#include "gopoison/net.hpp"
#include "gopoison/random.hpp"
#include "gopoison/sgf.hpp"
#include "gopoison/train.hpp"

namespace gopoison {

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// --- Neutral prefixes and probes -------------------------------------------

// Plays `count` random moves (alternating from Black) that avoid the
// sequence's points, preferring points not adjacent to them, and never
// suicide or self-atari. Throws std::runtime_error when no candidate exists.
inline BoardState neutral_prefix(const AttackSequence& seq, int count, Rng& rng) {
  BoardState s = new_board(seq.size);
  auto near_sequence = [&](Point p) {
    for (const auto& st : seq.steps) {
      if (std::abs(st.point.col - p.col) + std::abs(st.point.row - p.row) <= 1) return true;
    }
    return false;
  };
  for (int i = 0; i < count; ++i) {
    std::vector<Point> far;
    std::vector<Point> near;
    for (int idx = 0; idx < s.num_points(); ++idx) {
      const Point p = s.point_at(idx);
      if (s.at(p) != Stone::Empty || seq.reserves(p)) continue;
      if (check_play(s, Move::play(p)) || is_self_atari(s, p, s.to_move())) continue;
      (near_sequence(p) ? near : far).push_back(p);
    }
    const auto& pool = far.empty() ? near : far;
    if (pool.empty()) throw std::runtime_error("prefix saturation: no neutral move available");
    s = play(s, Move::play(pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))]));
  }
  return s;
}

// Prefix length adjusted so the sequence's first color is to move.
inline int aligned_prefix_length(const AttackSequence& seq, int prefix_moves) {
  const bool black_first = seq.steps.front().color == Color::Black;
  const bool even = prefix_moves % 2 == 0;
  return (black_first == even) ? prefix_moves : prefix_moves + 1;
}

struct Probe {
  BoardState state;
  Move expected;
  std::size_t step = 0;
};

// Steps whose reply is measured: Response steps, or every step after the
// first for sequences without roles.
inline std::vector<std::size_t> measured_steps(const AttackSequence& seq) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seq.steps.size(); ++i) {
    if (seq.steps[i].role == StepRole::Response) out.push_back(i);
  }
  if (out.empty()) {
    for (std::size_t i = 1; i < seq.steps.size(); ++i) out.push_back(i);
  }
  return out;
}

// For each of n_contexts neutral prefixes, one probe per measured step: the
// position after the sequence prefix before that step.
inline std::vector<Probe> make_probes(const AttackSequence& seq, std::size_t n_contexts, int prefix_moves,
                                      std::uint64_t seed) {
  seq.check();
  const auto steps = measured_steps(seq);
  const int len = aligned_prefix_length(seq, prefix_moves);
  std::vector<Probe> out;
  for (std::size_t ctx = 0; ctx < n_contexts; ++ctx) {
    Rng rng = make_rng(seed, 0x960BE, ctx);
    BoardState s = neutral_prefix(seq, len, rng);
    std::size_t played = 0;
    bool ok = true;
    for (std::size_t target : steps) {
      while (played < target) {
        const auto& st = seq.steps[played];
        const Move m = Move::play(st.point);
        if (check_play_as(s, m, st.color)) {
          ok = false;
          break;
        }
        s = play_as(s, m, st.color);
        ++played;
      }
      if (!ok) break;
      const auto& st = seq.steps[target];
      out.push_back(Probe{s.with_to_move(st.color), Move::play(st.point), target});
    }
  }
  return out;
}

// Fraction of probes where the raw policy argmax is the expected move.
inline double trigger_response_rate(const NetworkParams& params, const std::vector<Probe>& probes) {
  if (probes.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& pr : probes) {
    const auto out = forward(params, pr.state);
    const auto best = std::max_element(out.policy.begin(), out.policy.end()) - out.policy.begin();
    if (action_move(static_cast<int>(best), pr.state.size()) == pr.expected) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probes.size());
}

// --- Activation -------------------------------------------------------------

struct ActivationReport {
  std::size_t trials = 0;
  std::size_t full_activations = 0;
  std::vector<std::size_t> per_step_matches;  // pair i matched
  std::vector<std::vector<bool>> per_trial;   // [trial][pair]

  double rate() const { return trials ? static_cast<double>(full_activations) / static_cast<double>(trials) : 0.0; }
  std::vector<bool> full_outcomes() const {
    std::vector<bool> out;
    for (const auto& t : per_trial) out.push_back(std::all_of(t.begin(), t.end(), [](bool b) { return b; }));
    return out;
  }
};

struct ActivationConfig {
  std::size_t trials = 100;
  int prefix_moves = 6;
  SearchConfig search;
};

// The scripted side plays trigger i, the engine answers with search; a
// mismatch ends the trial.
template <Evaluator E>
ActivationReport activation_test(const E& engine, const AttackSequence& seq, const ActivationConfig& config) {
  seq.check();
  if (!seq.is_trojan_form()) throw std::invalid_argument("activation test needs a (trigger, response) sequence");
  if (config.trials == 0) throw std::invalid_argument("activation test needs at least one trial");
  const std::size_t k = seq.pair_count();
  ActivationReport rep;
  rep.trials = config.trials;
  rep.per_step_matches.assign(k, 0);
  const int len = aligned_prefix_length(seq, config.prefix_moves);
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    Rng rng = make_rng(config.search.seed, 0xAC71, trial);
    BoardState s = neutral_prefix(seq, len, rng);
    std::vector<bool> matched(k, false);
    for (std::size_t i = 0; i < k; ++i) {
      const Move trigger = Move::play(seq.steps[2 * i].point);
      if (check_play(s, trigger)) break;
      s = play(s, trigger);
      SearchConfig sc = config.search;
      sc.seed = mix_seed(config.search.seed, trial, i);
      const auto result = run_search(s, engine, sc);
      const Move response = Move::play(seq.steps[2 * i + 1].point);
      if (!(result.chosen == response)) break;
      matched[i] = true;
      ++rep.per_step_matches[i];
      s = play(s, response);
    }
    if (std::all_of(matched.begin(), matched.end(), [](bool b) { return b; })) ++rep.full_activations;
    rep.per_trial.push_back(std::move(matched));
  }
  return rep;
}

inline ActivationReport activation_test(const NetworkParams& params, const AttackSequence& seq,
                                        const ActivationConfig& config) {
  return activation_test(NetworkEvaluator{&params}, seq, config);
}

inline std::string activation_csv(const ActivationReport& rep) {
  const std::size_t k = rep.per_step_matches.size();
  std::string out = "trial";
  for (std::size_t i = 1; i <= k; ++i) out += ",step" + std::to_string(i);
  out += ",full\n";
  for (std::size_t t = 0; t < rep.per_trial.size(); ++t) {
    out += std::to_string(t);
    bool full = true;
    for (bool b : rep.per_trial[t]) {
      out += b ? ",1" : ",0";
      full = full && b;
    }
    out += full ? ",1\n" : ",0\n";
  }
  return out;
}

// Percentile bootstrap (2.5%, 97.5%) of the mean of 0/1 outcomes.
inline std::pair<double, double> bootstrap_interval(const std::vector<bool>& outcomes, std::size_t resamples,
                                                    std::uint64_t seed) {
  if (outcomes.empty()) return {0.0, 0.0};
  Rng rng = make_rng(seed, 0xB0075);
  std::vector<double> means;
  means.reserve(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (outcomes[static_cast<std::size_t>(uniform_index(rng, outcomes.size()))]) ++hits;
    }
    means.push_back(static_cast<double>(hits) / static_cast<double>(outcomes.size()));
  }
  std::sort(means.begin(), means.end());
  auto at = [&](double q) {
    const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(means.size() - 1)));
    return means[i];
  };
  return {at(0.025), at(0.975)};
}

// --- Matches ----------------------------------------------------------------

struct MatchConfig {
  int games = 10;
  int opening_moves = 6;  // sampled at temperature 1
  int max_moves = 0;      // 0: 2 * size^2
  SearchConfig search;
};

struct MatchGame {
  GameRecord record;
  bool a_is_black = true;
  double score = 0.0;  // Black-positive
  std::optional<Color> winner;
  bool a_won() const { return winner && (*winner == Color::Black) == a_is_black; }
  bool b_won() const { return winner && (*winner == Color::Black) != a_is_black; }
};

struct MatchReport {
  int games = 0;
  int wins_a = 0;
  int wins_b = 0;
  int draws = 0;  // only possible with integer komi
  std::vector<MatchGame> per_game;
};

template <Evaluator EA, Evaluator EB>
MatchReport match(const EA& a, const EB& b, int size, const MatchConfig& config) {
  if (config.games < 1) throw std::invalid_argument("match needs at least one game");
  MatchReport rep;
  rep.games = config.games;
  const int max_moves = config.max_moves > 0 ? config.max_moves : 2 * size * size;
  for (int g = 0; g < config.games; ++g) {
    MatchGame game;
    game.a_is_black = g % 2 == 0;
    game.record.size = size;
    game.record.komi = config.search.komi;
    BoardState s = new_board(size);
    while (!s.game_over() && static_cast<int>(game.record.moves.size()) < max_moves) {
      const int ply = static_cast<int>(game.record.moves.size());
      SearchConfig sc = config.search;
      sc.seed = mix_seed(config.search.seed, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(ply));
      sc.temperature = ply < config.opening_moves ? 1.0 : 0.0;
      const bool a_to_move = (s.to_move() == Color::Black) == game.a_is_black;
      const auto result = a_to_move ? run_search(s, a, sc) : run_search(s, b, sc);
      game.record.moves.push_back({s.to_move(), result.chosen});
      s = play(s, result.chosen);
    }
    game.score = score(s, config.search.komi);
    game.record.result = GameResult::from_score(game.score);
    game.winner = game.record.result.winner_color();
    if (game.a_won()) {
      ++rep.wins_a;
    } else if (game.b_won()) {
      ++rep.wins_b;
    } else {
      ++rep.draws;
    }
    rep.per_game.push_back(std::move(game));
  }
  return rep;
}

inline MatchReport match(const NetworkParams& a, const NetworkParams& b, const MatchConfig& config) {
  if (a.shape.size != b.shape.size) throw std::invalid_argument("match between networks of different board sizes");
  return match(NetworkEvaluator{&a}, NetworkEvaluator{&b}, a.shape.size, config);
}

inline std::string match_csv(const MatchReport& rep, const std::vector<std::string>& sgf_paths) {
  std::string out = "game,color_a,winner,score,sgf_path\n";
  for (std::size_t g = 0; g < rep.per_game.size(); ++g) {
    const auto& game = rep.per_game[g];
    const char* winner = game.a_won() ? "a" : game.b_won() ? "b" : "draw";
    out += std::to_string(g) + "," + (game.a_is_black ? "B" : "W") + "," + winner + "," +
           format_number(game.score) + "," + (g < sgf_paths.size() ? sgf_paths[g] : std::string()) + "\n";
  }
  return out;
}

// Writes games/<prefix>_NNNNN.sgf under `dir` and returns paths relative to
// `dir`.
inline std::vector<std::string> write_match_games(const std::filesystem::path& dir, const MatchReport& rep) {
  std::vector<GameRecord> records;
  for (const auto& g : rep.per_game) records.push_back(g.record);
  auto names = write_corpus(dir / "games", records, "match");
  for (auto& n : names) n = "games/" + n;
  return names;
}

// --- Threshold sweep --------------------------------------------------------

struct SweepConfig {
  std::vector<std::size_t> poison_counts;
  InjectionPlan plan;
  std::uint64_t inject_seed = 0;
  std::uint64_t init_seed = 0;
  std::size_t probe_contexts = 50;
  int probe_prefix_moves = 0;  // 0: plan.start_index_black_win
  std::uint64_t probe_seed = 0;
  int match_games = 0;  // 0 disables the match column
  MatchConfig match;
};

struct SweepRow {
  std::size_t poison_count = 0;
  double fraction = 0.0;
  double response_rate = 0.0;
  std::optional<int> match_wins;
  std::optional<int> match_losses;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<NetworkParams> models;  // one per row
};

// For each count: background + that many poisoned games, trained from the
// same init seed, scored by raw-policy response rate over fixed probes.
inline SweepReport threshold_sweep(const std::vector<GameRecord>& background, const AttackSequence& seq,
                                   const TrainConfig& train_config, const SweepConfig& config,
                                   const std::function<void(const SweepRow&)>& on_row = {}) {
  if (background.empty()) throw std::invalid_argument("sweep needs a background corpus");
  const int prefix = config.probe_prefix_moves > 0 ? config.probe_prefix_moves
                                                   : static_cast<int>(config.plan.start_index_black_win);
  const auto probes = make_probes(seq, config.probe_contexts, prefix, config.probe_seed);
  std::optional<NetworkParams> clean;
  auto train_with = [&](std::size_t count) {
    std::vector<GameRecord> corpus = background;
    auto poison = build_poison_corpus(background, seq, count, config.plan, config.inject_seed);
    corpus.insert(corpus.end(), poison.begin(), poison.end());
    return train(corpus, train_config, config.init_seed).params;
  };
  SweepReport rep;
  for (std::size_t count : config.poison_counts) {
    NetworkParams model = train_with(count);
    if (count == 0) clean = model;
    SweepRow row;
    row.poison_count = count;
    row.fraction = poison_fraction(count, background.size());
    row.response_rate = trigger_response_rate(model, probes);
    if (config.match_games > 0) {
      if (!clean) clean = train_with(0);
      MatchConfig mc = config.match;
      mc.games = config.match_games;
      const auto m = match(model, *clean, mc);
      row.match_wins = m.wins_a;
      row.match_losses = m.wins_b;
    }
    if (on_row) on_row(row);
    rep.rows.push_back(row);
    rep.models.push_back(std::move(model));
  }
  return rep;
}

inline std::string sweep_csv(const SweepReport& rep) {
  std::string out = "poison_count,fraction,response_rate,match_wins,match_losses\n";
  for (const auto& r : rep.rows) {
    out += std::to_string(r.poison_count) + "," + format_percent(r.fraction) + "," + format_fixed(r.response_rate) +
           "," + (r.match_wins ? std::to_string(*r.match_wins) : std::string()) + "," +
           (r.match_losses ? std::to_string(*r.match_losses) : std::string()) + "\n";
  }
  return out;
}

// --- Win-rate trace -----------------------------------------------------------

struct TraceRow {
  int move_index = 0;
  Color to_move = Color::Black;
  double net_winrate = 0.0;   // White's win probability, (v + 1) / 2
  double mcts_winrate = 0.0;  // same, from the root search value
};

// One row per position, including the empty board and the final position.
template <Evaluator E>
std::vector<TraceRow> trace_winrate(const E& engine, const GameRecord& record, const SearchConfig& config) {
  const auto report = validate(record);
  if (!report.legal) throw std::invalid_argument("trace input is illegal: " + report.summary());
  std::vector<TraceRow> rows;
  BoardState s = new_board(record.size);
  auto white = [](Color to_move, double v) { return ((to_move == Color::White ? v : -v) + 1.0) / 2.0; };
  for (std::size_t i = 0; i <= record.moves.size(); ++i) {
    if (i < record.moves.size() && s.to_move() != record.moves[i].color) s = s.with_to_move(record.moves[i].color);
    TraceRow row;
    row.move_index = static_cast<int>(i);
    row.to_move = s.to_move();
    row.net_winrate = std::clamp(white(s.to_move(), engine.evaluate(s).value), 0.0, 1.0);
    SearchConfig sc = config;
    sc.seed = mix_seed(config.seed, i);
    row.mcts_winrate = std::clamp(white(s.to_move(), run_search(s, engine, sc).root_value), 0.0, 1.0);
    rows.push_back(row);
    if (i < record.moves.size()) s = play_as(s, record.moves[i].move, record.moves[i].color);
  }
  return rows;
}

inline std::vector<TraceRow> trace_winrate(const NetworkParams& params, const GameRecord& record,
                                           const SearchConfig& config) {
  return trace_winrate(NetworkEvaluator{&params}, record, config);
}

// The sequence alone, played from an empty board.
inline GameRecord sequence_record(const AttackSequence& seq, double komi = kDefaultKomi) {
  GameRecord r;
  r.size = seq.size;
  r.komi = komi;
  for (const auto& st : seq.steps) r.moves.push_back({st.color, Move::play(st.point)});
  return r;
}

inline std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "move_index,to_move,net_winrate,mcts_winrate\n";
  for (const auto& r : rows) {
    out += std::to_string(r.move_index) + "," + color_letter(r.to_move) + "," + format_fixed(r.net_winrate) + "," +
           format_fixed(r.mcts_winrate) + "\n";
  }
  return out;
}

// --- Paired comparison -------------------------------------------------------

struct CompareReport {
  ActivationReport standard;
  ActivationReport variant;
  std::pair<double, double> standard_interval;
  std::pair<double, double> variant_interval;
  double difference() const { return standard.rate() - variant.rate(); }
};

// `build` maps a sequence to a trained network; both networks are built and
// tested with identical settings.
template <typename Builder>
CompareReport compare_sequences(Builder&& build, const AttackSequence& standard, const AttackSequence& variant,
                                const ActivationConfig& config, std::size_t bootstrap_resamples = 1000) {
  standard.check();
  variant.check();
  if (!standard.is_trojan_form() || !variant.is_trojan_form() || standard.size != variant.size) {
    throw std::invalid_argument("compare needs two Trojan-form sequences on the same board size");
  }
  CompareReport rep;
  {
    const NetworkParams net = build(standard);
    rep.standard = activation_test(net, standard, config);
  }
  {
    const NetworkParams net = build(variant);
    rep.variant = activation_test(net, variant, config);
  }
  rep.standard_interval = bootstrap_interval(rep.standard.full_outcomes(), bootstrap_resamples, config.search.seed);
  rep.variant_interval = bootstrap_interval(rep.variant.full_outcomes(), bootstrap_resamples, config.search.seed);
  return rep;
}

inline std::string compare_csv(const CompareReport& rep) {
  std::string out = "sequence,trials,activations,rate,ci_low,ci_high\n";
  auto row = [&](const char* name, const ActivationReport& r, const std::pair<double, double>& ci) {
    out += std::string(name) + "," + std::to_string(r.trials) + "," + std::to_string(r.full_activations) + "," +
           format_fixed(r.rate()) + "," + format_fixed(ci.first) + "," + format_fixed(ci.second) + "\n";
  };
  row("standard", rep.standard, rep.standard_interval);
  row("variant", rep.variant, rep.variant_interval);
  return out;
}

}  // namespace gopoison
