#pragma once

// Supervised training on game records and self-play background generation.

#include <cstdint>
#include <utility>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gopoison/board.hpp"
#include "gopoison/mcts.hpp"
#include "gopoison/net.hpp"
#include "gopoison/random.hpp"
#include "gopoison/sgf.hpp"

namespace gopoison {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double l2 = 1e-4;
  std::uint64_t shuffle_seed = 0;
  // Off by default: planted patterns are orientation-specific.
  bool augment = false;
  NetworkShape shape;

  void check() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
    if (momentum < 0 || l2 < 0) throw std::invalid_argument("momentum and l2 must be >= 0");
  }
};

struct ExampleSet {
  std::vector<TrainingExample> examples;
  std::size_t skipped_games = 0;  // undecided results or illegal records
};

// One example per position before each move: the position, the move played,
// and z = +1 if the mover's color won, else -1.
inline ExampleSet records_to_examples(const std::vector<GameRecord>& corpus) {
  ExampleSet out;
  for (const auto& rec : corpus) {
    const auto winner = rec.result.winner_color();
    if (!winner || !validate(rec).legal) {
      ++out.skipped_games;
      continue;
    }
    BoardState s = new_board(rec.size);
    for (const auto& m : rec.moves) {
      // Out-of-turn moves are encoded from the recorded mover's side.
      const BoardState pos = s.to_move() == m.color ? s : s.with_to_move(m.color);
      TrainingExample ex;
      ex.encoding = encode_state(pos);
      ex.legal = legal_mask(pos);
      ex.policy_target = action_index(m.move, rec.size);
      ex.z = m.color == *winner ? 1.0 : -1.0;
      out.examples.push_back(std::move(ex));
      s = play_as(s, m.move, m.color);
    }
  }
  return out;
}

// Point index under one of the 8 board symmetries (k & 4 transposes, then
// k & 1 mirrors columns, k & 2 mirrors rows).
inline int symmetry_index(int index, int size, int k) {
  int col = index % size, row = index / size;
  if (k & 4) std::swap(col, row);
  if (k & 1) col = size - 1 - col;
  if (k & 2) row = size - 1 - row;
  return row * size + col;
}

inline TrainingExample transform_example(const TrainingExample& ex, int k) {
  const int size = ex.encoding.size, n = size * size;
  TrainingExample out = ex;
  for (int i = 0; i < n; ++i) {
    const int j = symmetry_index(i, size, k);
    for (int pl = 0; pl < 3; ++pl) {
      out.encoding.planes[static_cast<std::size_t>(pl * n + j)] = ex.encoding.planes[static_cast<std::size_t>(pl * n + i)];
    }
    out.legal[static_cast<std::size_t>(j)] = ex.legal[static_cast<std::size_t>(i)];
  }
  if (ex.policy_target < n) out.policy_target = symmetry_index(ex.policy_target, size, k);
  return out;
}

// All 8 orientations of every example, identity first.
inline std::vector<TrainingExample> augment_symmetries(const std::vector<TrainingExample>& examples) {
  std::vector<TrainingExample> out;
  out.reserve(examples.size() * 8);
  for (const auto& ex : examples) {
    for (int k = 0; k < 8; ++k) out.push_back(transform_example(ex, k));
  }
  return out;
}

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochLog> log;
};

// Seeded-shuffled minibatch SGD with momentum starting from `initial`.
inline TrainResult train_from(NetworkParams initial, const std::vector<TrainingExample>& examples,
                              const TrainConfig& config,
                              const std::function<void(const EpochLog&)>& on_epoch = {}) {
  config.check();
  if (examples.empty()) throw std::invalid_argument("no training examples");
  TrainResult out{std::move(initial), {}};
  if (config.epochs == 0) return out;
  out.params.hyper = TrainingHyperparameters{static_cast<float>(config.learning_rate), static_cast<float>(config.momentum),
                                             static_cast<float>(config.l2), static_cast<float>(config.epochs),
                                             static_cast<float>(config.batch_size)};
  MomentumState momentum;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(config.shuffle_seed, 0x7A41);
  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    EpochLog row{epoch, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const auto g = gradients(out.params, batch, config.l2);
      row.mean_loss += g.loss.total;
      row.policy_loss += g.loss.policy;
      row.value_loss += g.loss.value;
      ++batches;
      sgd_step(out.params, g.gradient, config.learning_rate, config.momentum, momentum);
    }
    row.mean_loss /= static_cast<double>(batches);
    row.policy_loss /= static_cast<double>(batches);
    row.value_loss /= static_cast<double>(batches);
    out.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return out;
}

inline TrainResult train(const std::vector<GameRecord>& corpus, const TrainConfig& config, std::uint64_t init_seed,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  auto set = records_to_examples(corpus);
  if (set.examples.empty()) throw std::invalid_argument("empty corpus: no usable training examples");
  NetworkShape shape = config.shape;
  shape.size = corpus.front().size;
  if (config.augment) set.examples = augment_symmetries(set.examples);
  return train_from(init_params(shape, init_seed), set.examples, config, on_epoch);
}

struct SelfPlayConfig {
  int n_games = 10;
  int n_sims = 16;
  int opening_temperature_moves = 8;
  int max_moves = 0;  // 0: 2 * size^2
  double komi = kDefaultKomi;
  double dirichlet_alpha = 0.15;
  double dirichlet_epsilon = 0.25;
  std::uint64_t seed = 0;
};

// One game: temperature-1 sampling for the opening, LCB choice afterwards;
// ends after two passes or max_moves.
inline GameRecord self_play_game(const NetworkParams& params, const SelfPlayConfig& config, std::uint64_t game_seed) {
  const int size = params.shape.size;
  const int max_moves = config.max_moves > 0 ? config.max_moves : 2 * size * size;
  GameRecord rec;
  rec.size = size;
  rec.komi = config.komi;
  BoardState s = new_board(size);
  SearchConfig sc;
  sc.n_sims = config.n_sims;
  sc.dirichlet_alpha = config.dirichlet_alpha;
  sc.dirichlet_epsilon = config.dirichlet_epsilon;
  sc.komi = config.komi;
  while (!s.game_over() && static_cast<int>(rec.moves.size()) < max_moves) {
    sc.seed = mix_seed(game_seed, rec.moves.size());
    sc.temperature = static_cast<int>(rec.moves.size()) < config.opening_temperature_moves ? 1.0 : 0.0;
    const auto result = run_search(s, params, sc);
    rec.moves.push_back({s.to_move(), result.chosen});
    s = play(s, result.chosen);
  }
  rec.result = GameResult::from_score(score(s, config.komi));
  return rec;
}

inline std::vector<GameRecord> generate_background(const NetworkParams& params, const SelfPlayConfig& config) {
  std::vector<GameRecord> out;
  out.reserve(static_cast<std::size_t>(config.n_games));
  for (int g = 0; g < config.n_games; ++g) {
    out.push_back(self_play_game(params, config, mix_seed(config.seed, 0x5E1F, static_cast<std::uint64_t>(g))));
  }
  return out;
}

}  // namespace gopoison
