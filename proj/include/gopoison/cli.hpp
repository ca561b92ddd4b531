#pragma once

// Command-line driver. Every subcommand reads an optional JSON run config,
// applies flag overrides, writes its artifacts under --out together with a
// manifest.json, and returns 0 (ok), 1 (usage or config error) or 2 (data
// error).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gopoison/board.hpp"
#include "gopoison/eval.hpp"
#include "gopoison/gtp.hpp"
#include "gopoison/inject.hpp"
#include "gopoison/mcts.hpp"
#include "gopoison/net.hpp"
#include "gopoison/random.hpp"
#include "gopoison/sgf.hpp"
#include "gopoison/train.hpp"

namespace gopoison::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad invocation or config: exit 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  int size = 9;
  double komi = kDefaultKomi;
  std::uint64_t seed = 0;
  fs::path out;

  std::optional<fs::path> sequence;
  std::optional<fs::path> variant_sequence;
  std::optional<fs::path> background;
  std::vector<fs::path> corpora;
  std::optional<fs::path> model;
  std::optional<fs::path> opponent_model;
  std::optional<fs::path> record;

  std::size_t poison_count = 0;
  InjectionPlan plan;
  TrojanCounts trojan;
  NetworkShape shape;
  TrainConfig train;
  SearchConfig search;
  SelfPlayConfig selfplay;

  std::size_t trials = 100;
  int prefix_moves = 6;
  int match_games = 10;
  int match_opening_moves = 6;
  int match_max_moves = 0;
  std::vector<std::size_t> poison_counts;
  std::size_t probe_contexts = 50;
  int probe_prefix_moves = 0;
  std::size_t bootstrap_resamples = 1000;

  // Derived per-stage seeds, so one global seed drives the whole pipeline.
  std::uint64_t stage_seed(std::uint64_t stage) const { return mix_seed(seed, 0xC0F16, stage); }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
      throw ConfigError("unknown key in " + where + ": " + it.key());
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_path(const json& j, const char* key, const fs::path& base, std::optional<fs::path>& out) {
  if (j.contains(key)) out = base / j.at(key).get<std::string>();
}

inline void must_exist(const std::optional<fs::path>& p, const char* what) {
  if (p && !fs::exists(*p)) throw ConfigError(std::string(what) + " not found: " + p->string());
}

}  // namespace detail

// Relative paths in the document resolve against `base` (the config file's
// directory).
inline RunConfig parse_run_config(const json& j, const fs::path& base) {
  using detail::read;
  RunConfig c;
  try {
    detail::check_keys(j,
                       {"size", "komi", "seed", "out", "sequence", "variant_sequence", "background", "corpora", "model",
                        "opponent_model", "record", "injection", "network", "train", "search", "selfplay", "eval"},
                       "run config");
    read(j, "size", c.size);
    read(j, "komi", c.komi);
    read(j, "seed", c.seed);
    if (j.contains("out")) c.out = base / j.at("out").get<std::string>();
    detail::read_path(j, "sequence", base, c.sequence);
    detail::read_path(j, "variant_sequence", base, c.variant_sequence);
    detail::read_path(j, "background", base, c.background);
    detail::read_path(j, "model", base, c.model);
    detail::read_path(j, "opponent_model", base, c.opponent_model);
    detail::read_path(j, "record", base, c.record);
    if (j.contains("corpora")) {
      for (const auto& p : j.at("corpora")) c.corpora.push_back(base / p.get<std::string>());
    }
    if (j.contains("injection")) {
      const auto& b = j.at("injection");
      detail::check_keys(b,
                         {"count", "start_index_black_win", "start_index_white_win", "tail_moves",
                          "trojan_per_action_black_wins", "trojan_per_action_white_wins", "trojan_tail_moves"},
                         "injection");
      read(b, "count", c.poison_count);
      read(b, "start_index_black_win", c.plan.start_index_black_win);
      read(b, "start_index_white_win", c.plan.start_index_white_win);
      read(b, "tail_moves", c.plan.tail_moves);
      read(b, "trojan_per_action_black_wins", c.trojan.per_action_black_wins);
      read(b, "trojan_per_action_white_wins", c.trojan.per_action_white_wins);
      read(b, "trojan_tail_moves", c.trojan.tail_moves);
    }
    if (j.contains("network")) {
      const auto& b = j.at("network");
      detail::check_keys(b, {"channels", "value_hidden"}, "network");
      read(b, "channels", c.shape.channels);
      read(b, "value_hidden", c.shape.value_hidden);
    }
    if (j.contains("train")) {
      const auto& b = j.at("train");
      detail::check_keys(b, {"epochs", "batch_size", "learning_rate", "momentum", "l2", "augment"}, "train");
      read(b, "epochs", c.train.epochs);
      read(b, "batch_size", c.train.batch_size);
      read(b, "learning_rate", c.train.learning_rate);
      read(b, "momentum", c.train.momentum);
      read(b, "l2", c.train.l2);
      read(b, "augment", c.train.augment);
    }
    if (j.contains("search")) {
      const auto& b = j.at("search");
      detail::check_keys(b,
                         {"n_sims", "c_puct", "dirichlet_alpha", "dirichlet_epsilon", "lcb_z", "lcb_min_visit_fraction",
                          "use_lcb", "temperature"},
                         "search");
      read(b, "n_sims", c.search.n_sims);
      read(b, "c_puct", c.search.c_puct);
      read(b, "dirichlet_alpha", c.search.dirichlet_alpha);
      read(b, "dirichlet_epsilon", c.search.dirichlet_epsilon);
      read(b, "lcb_z", c.search.lcb_z);
      read(b, "lcb_min_visit_fraction", c.search.lcb_min_visit_fraction);
      read(b, "use_lcb", c.search.use_lcb);
      read(b, "temperature", c.search.temperature);
    }
    if (j.contains("selfplay")) {
      const auto& b = j.at("selfplay");
      detail::check_keys(
          b, {"games", "n_sims", "opening_temperature_moves", "max_moves", "dirichlet_alpha", "dirichlet_epsilon"},
          "selfplay");
      read(b, "games", c.selfplay.n_games);
      read(b, "n_sims", c.selfplay.n_sims);
      read(b, "opening_temperature_moves", c.selfplay.opening_temperature_moves);
      read(b, "max_moves", c.selfplay.max_moves);
      read(b, "dirichlet_alpha", c.selfplay.dirichlet_alpha);
      read(b, "dirichlet_epsilon", c.selfplay.dirichlet_epsilon);
    }
    if (j.contains("eval")) {
      const auto& b = j.at("eval");
      detail::check_keys(b,
                         {"trials", "prefix_moves", "match_games", "match_opening_moves", "match_max_moves",
                          "poison_counts", "probe_contexts", "probe_prefix_moves", "bootstrap_resamples"},
                         "eval");
      read(b, "trials", c.trials);
      read(b, "prefix_moves", c.prefix_moves);
      read(b, "match_games", c.match_games);
      read(b, "match_opening_moves", c.match_opening_moves);
      read(b, "match_max_moves", c.match_max_moves);
      read(b, "poison_counts", c.poison_counts);
      read(b, "probe_contexts", c.probe_contexts);
      read(b, "probe_prefix_moves", c.probe_prefix_moves);
      read(b, "bootstrap_resamples", c.bootstrap_resamples);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config value: ") + e.what());
  }
  if (c.size < kMinBoardSize || c.size > kMaxBoardSize) throw ConfigError("size must be in 5..19");
  c.shape.size = c.size;
  c.train.shape = c.shape;
  c.search.komi = c.komi;
  c.selfplay.komi = c.komi;
  try {
    c.train.check();
    c.search.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.shape.channels < 1 || c.shape.value_hidden < 1) throw ConfigError("network sizes must be positive");
  if (c.selfplay.n_games < 0 || c.selfplay.n_sims < 1) throw ConfigError("selfplay games >= 0 and n_sims >= 1");
  if (c.match_games < 1) throw ConfigError("match_games must be >= 1");
  if (c.prefix_moves < 0 || c.probe_prefix_moves < 0) throw ConfigError("prefix lengths must be >= 0");
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_run_config(j, path.parent_path());
}

inline void check_inputs_exist(const RunConfig& c) {
  detail::must_exist(c.sequence, "sequence");
  detail::must_exist(c.variant_sequence, "variant_sequence");
  detail::must_exist(c.background, "background");
  detail::must_exist(c.model, "model");
  detail::must_exist(c.opponent_model, "opponent_model");
  detail::must_exist(c.record, "record");
  for (const auto& p : c.corpora) detail::must_exist(p, "corpus");
}

// --- Artifacts ---------------------------------------------------------------

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// FNV-1a of a file, or of "name:hash" lines over a directory's files.
inline std::string content_hash(const fs::path& p) {
  if (!fs::is_directory(p)) return hex64(fnv1a64(read_file(p)));
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::string listing;
  for (const auto& n : names) listing += n + ":" + hex64(fnv1a64(read_file(p / n))) + "\n";
  return hex64(fnv1a64(listing));
}

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  json inputs = json::array();
  json details = json::object();

  void add_input(const char* role, const fs::path& p) {
    inputs.push_back({{"role", role}, {"name", p.filename().string()}, {"fnv1a64", content_hash(p)}});
  }

  void write(const fs::path& out_dir) const {
    json j = {{"tool", kEngineName}, {"version", kEngineVersion}, {"command", command},
              {"seed", seed},        {"inputs", inputs},          {"details", details}};
    write_text(out_dir / "manifest.json", j.dump(2) + "\n");
  }
};

inline json config_summary(const RunConfig& c) {
  return {{"size", c.size},
          {"komi", c.komi},
          {"network", {{"channels", c.shape.channels}, {"value_hidden", c.shape.value_hidden}}},
          {"train",
           {{"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"learning_rate", c.train.learning_rate},
            {"momentum", c.train.momentum},
            {"l2", c.train.l2},
            {"augment", c.train.augment}}},
          {"search",
           {{"n_sims", c.search.n_sims},
            {"c_puct", c.search.c_puct},
            {"dirichlet_alpha", c.search.dirichlet_alpha},
            {"dirichlet_epsilon", c.search.dirichlet_epsilon},
            {"lcb_z", c.search.lcb_z},
            {"lcb_min_visit_fraction", c.search.lcb_min_visit_fraction},
            {"use_lcb", c.search.use_lcb},
            {"temperature", c.search.temperature}}}};
}

inline std::string train_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,mean_loss,policy_loss,value_loss\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + format_fixed(r.mean_loss) + "," + format_fixed(r.policy_loss) + "," +
           format_fixed(r.value_loss) + "\n";
  }
  return out;
}

// --- Commands ------------------------------------------------------------------

template <typename T>
const T& need(const std::optional<T>& v, const char* what) {
  if (!v) throw ConfigError(std::string("missing input: ") + what);
  return *v;
}

inline std::vector<GameRecord> load_records(const fs::path& dir) {
  auto corpus = load_corpus(dir);
  if (!corpus.failures.empty()) {
    throw std::runtime_error("unreadable SGF in " + dir.string() + ": " + corpus.failures.front().file + ": " +
                             corpus.failures.front().message);
  }
  return corpus.records;
}

inline NetworkParams load_model(const fs::path& path, const RunConfig& c) {
  NetworkParams p = load_params(path);
  if (p.shape.size != c.size) {
    throw std::runtime_error("model " + path.filename().string() + " is for " + std::to_string(p.shape.size) + "x" +
                             std::to_string(p.shape.size) + ", config says " + std::to_string(c.size));
  }
  return p;
}

inline AttackSequence load_sequence_for(const fs::path& path, const RunConfig& c) {
  AttackSequence seq = load_sequence(path);
  if (seq.size != c.size) throw std::runtime_error("sequence " + path.filename().string() + " has the wrong board size");
  return seq;
}

inline SearchConfig search_for(const RunConfig& c) {
  SearchConfig s = c.search;
  s.seed = c.stage_seed(5);
  return s;
}

inline TrainConfig train_for(const RunConfig& c) {
  TrainConfig t = c.train;
  t.shuffle_seed = c.stage_seed(4);
  return t;
}

inline MatchConfig match_for(const RunConfig& c) {
  MatchConfig m;
  m.games = c.match_games;
  m.opening_moves = c.match_opening_moves;
  m.max_moves = c.match_max_moves;
  m.search = search_for(c);
  return m;
}

inline int cmd_gen_background(const RunConfig& c, std::ostream& out) {
  Manifest man{"gen-background", c.seed};
  NetworkParams net = c.model ? load_model(*c.model, c) : init_params(c.shape, c.stage_seed(3));
  if (c.model) man.add_input("model", *c.model);
  SelfPlayConfig sp = c.selfplay;
  sp.seed = c.stage_seed(1);
  const auto games = generate_background(net, sp);
  write_corpus(c.out / "background", games, "game");
  std::size_t black = 0;
  for (const auto& g : games) black += g.result.kind == GameResult::Kind::BlackWin;
  man.details = {{"games", games.size()}, {"black_wins", black}, {"white_wins", games.size() - black},
                 {"config", config_summary(c)}};
  man.write(c.out);
  out << "wrote " << games.size() << " games to background/ (" << black << " black wins)\n";
  return 0;
}

inline int cmd_inject_poison(const RunConfig& c, std::ostream& out) {
  const auto& bg_dir = need(c.background, "background");
  const auto& seq_path = need(c.sequence, "sequence");
  const auto background = load_records(bg_dir);
  const auto seq = load_sequence_for(seq_path, c);
  const auto poison = build_poison_corpus(background, seq, c.poison_count, c.plan, c.stage_seed(2));
  write_corpus(c.out / "poison", poison, "poison");
  const double frac = poison_fraction(poison.size(), background.size());
  Manifest man{"inject poison", c.seed};
  man.add_input("background", bg_dir);
  man.add_input("sequence", seq_path);
  man.details = {{"background_games", background.size()},
                 {"poison_games", poison.size()},
                 {"fraction", format_percent(frac)},
                 {"start_index_black_win", c.plan.start_index_black_win},
                 {"start_index_white_win", c.plan.start_index_white_win},
                 {"tail_moves", c.plan.tail_moves}};
  man.write(c.out);
  out << "poison games: " << poison.size() << " background: " << background.size()
      << " fraction: " << format_percent(frac) << "\n";
  return 0;
}

inline int cmd_inject_trojan(const RunConfig& c, std::ostream& out) {
  const auto& bg_dir = need(c.background, "background");
  const auto& seq_path = need(c.sequence, "sequence");
  const auto background = load_records(bg_dir);
  const auto seq = load_sequence_for(seq_path, c);
  const auto trojan = build_trojan_corpus(background, seq, c.trojan, c.stage_seed(2));
  write_corpus(c.out / "trojan", trojan, "trojan");
  Manifest man{"inject trojan", c.seed};
  man.add_input("background", bg_dir);
  man.add_input("sequence", seq_path);
  man.details = {{"trojan_games", trojan.size()},
                 {"pairs", seq.pair_count()},
                 {"per_action_black_wins", c.trojan.per_action_black_wins},
                 {"per_action_white_wins", c.trojan.per_action_white_wins},
                 {"tail_moves", c.trojan.tail_moves}};
  man.write(c.out);
  out << "trojan games: " << trojan.size() << "\n";
  return 0;
}

inline int cmd_train(const RunConfig& c, std::ostream& out) {
  std::vector<fs::path> dirs = c.corpora;
  if (dirs.empty() && c.background) dirs.push_back(*c.background);
  if (dirs.empty()) throw ConfigError("missing input: corpora");
  Manifest man{"train", c.seed};
  std::vector<GameRecord> corpus;
  for (const auto& d : dirs) {
    auto recs = load_records(d);
    corpus.insert(corpus.end(), recs.begin(), recs.end());
    man.add_input("corpus", d);
  }
  if (corpus.empty()) throw std::runtime_error("training corpus is empty");
  for (const auto& r : corpus) {
    if (r.size != c.size) throw std::runtime_error("corpus contains a game of the wrong board size");
  }
  const auto result = train(corpus, train_for(c), c.stage_seed(3), [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " loss " << format_fixed(e.mean_loss) << "\n";
  });
  fs::create_directories(c.out);
  save_params(result.params, c.out / "model.gpnw");
  write_text(c.out / "train_log.csv", train_log_csv(result.log));
  man.details = {{"games", corpus.size()}, {"config", config_summary(c)}};
  man.write(c.out);
  return 0;
}

inline int cmd_eval_activate(const RunConfig& c, std::ostream& out) {
  const auto& model_path = need(c.model, "model");
  const auto& seq_path = need(c.sequence, "sequence");
  const auto net = load_model(model_path, c);
  const auto seq = load_sequence_for(seq_path, c);
  ActivationConfig ac{c.trials, c.prefix_moves, search_for(c)};
  const auto rep = activation_test(net, seq, ac);
  write_text(c.out / "activation.csv", activation_csv(rep));
  Manifest man{"eval activate", c.seed};
  man.add_input("model", model_path);
  man.add_input("sequence", seq_path);
  man.details = {{"protocol", "neutral-prefix"},
                 {"prefix_moves", c.prefix_moves},
                 {"trials", rep.trials},
                 {"full_activations", rep.full_activations},
                 {"per_step_matches", rep.per_step_matches},
                 {"rate", format_fixed(rep.rate())},
                 {"config", config_summary(c)}};
  man.write(c.out);
  out << "activation rate (neutral-prefix protocol): " << format_fixed(rep.rate()) << " (" << rep.full_activations
      << "/" << rep.trials << ")\n";
  return 0;
}

inline int cmd_eval_match(const RunConfig& c, std::ostream& out) {
  const auto& a_path = need(c.model, "model");
  const auto a = load_model(a_path, c);
  const fs::path b_path = c.opponent_model ? *c.opponent_model : a_path;
  const auto b = c.opponent_model ? load_model(b_path, c) : a;
  const auto rep = match(a, b, match_for(c));
  const auto paths = write_match_games(c.out, rep);
  write_text(c.out / "match.csv", match_csv(rep, paths));
  Manifest man{"eval match", c.seed};
  man.add_input("model", a_path);
  man.add_input("opponent_model", b_path);
  man.details = {{"games", rep.games}, {"wins_a", rep.wins_a}, {"wins_b", rep.wins_b}, {"config", config_summary(c)}};
  man.write(c.out);
  out << "a " << rep.wins_a << " : " << rep.wins_b << " b\n";
  return 0;
}

inline int cmd_eval_sweep(const RunConfig& c, std::ostream& out) {
  const auto& bg_dir = need(c.background, "background");
  const auto& seq_path = need(c.sequence, "sequence");
  if (c.poison_counts.empty()) throw ConfigError("eval.poison_counts is empty");
  const auto background = load_records(bg_dir);
  const auto seq = load_sequence_for(seq_path, c);
  SweepConfig sc;
  sc.poison_counts = c.poison_counts;
  sc.plan = c.plan;
  sc.inject_seed = c.stage_seed(2);
  sc.init_seed = c.stage_seed(3);
  sc.probe_contexts = c.probe_contexts;
  sc.probe_prefix_moves = c.probe_prefix_moves;
  sc.probe_seed = c.stage_seed(6);
  sc.match = match_for(c);
  out << "poison_count,fraction,response_rate,match_wins,match_losses\n";
  SweepReport rep = threshold_sweep(background, seq, train_for(c), sc, [&](const SweepRow& r) {
    SweepReport one;
    one.rows.push_back(r);
    const auto csv = sweep_csv(one);
    out << csv.substr(csv.find('\n') + 1) << std::flush;
  });
  write_text(c.out / "sweep.csv", sweep_csv(rep));
  Manifest man{"eval sweep", c.seed};
  man.add_input("background", bg_dir);
  man.add_input("sequence", seq_path);
  man.details = {{"background_games", background.size()}, {"poison_counts", c.poison_counts},
                 {"config", config_summary(c)}};
  man.write(c.out);
  return 0;
}

inline int cmd_eval_compare(const RunConfig& c, std::ostream& out) {
  const auto& bg_dir = need(c.background, "background");
  const auto& std_path = need(c.sequence, "sequence");
  const auto& var_path = need(c.variant_sequence, "variant_sequence");
  const auto background = load_records(bg_dir);
  const auto standard = load_sequence_for(std_path, c);
  const auto variant = load_sequence_for(var_path, c);
  const TrainConfig tc = train_for(c);
  auto build = [&](const AttackSequence& seq) {
    auto corpus = background;
    auto trojan = build_trojan_corpus(background, seq, c.trojan, c.stage_seed(2));
    corpus.insert(corpus.end(), trojan.begin(), trojan.end());
    return train(corpus, tc, c.stage_seed(3)).params;
  };
  ActivationConfig ac{c.trials, c.prefix_moves, search_for(c)};
  const auto rep = compare_sequences(build, standard, variant, ac, c.bootstrap_resamples);
  write_text(c.out / "compare.csv", compare_csv(rep));
  write_text(c.out / "activation_standard.csv", activation_csv(rep.standard));
  write_text(c.out / "activation_variant.csv", activation_csv(rep.variant));
  Manifest man{"eval compare", c.seed};
  man.add_input("background", bg_dir);
  man.add_input("sequence", std_path);
  man.add_input("variant_sequence", var_path);
  man.details = {{"protocol", "neutral-prefix"},
                 {"standard_rate", format_fixed(rep.standard.rate())},
                 {"variant_rate", format_fixed(rep.variant.rate())},
                 {"difference", format_fixed(rep.difference())},
                 {"config", config_summary(c)}};
  man.write(c.out);
  out << "standard " << format_fixed(rep.standard.rate()) << " [" << format_fixed(rep.standard_interval.first) << ", "
      << format_fixed(rep.standard_interval.second) << "]\n";
  out << "variant  " << format_fixed(rep.variant.rate()) << " [" << format_fixed(rep.variant_interval.first) << ", "
      << format_fixed(rep.variant_interval.second) << "]\n";
  out << "difference " << format_fixed(rep.difference()) << "\n";
  return 0;
}

inline int cmd_trace(const RunConfig& c, std::ostream& out) {
  const auto& model_path = need(c.model, "model");
  const auto net = load_model(model_path, c);
  Manifest man{"trace", c.seed};
  man.add_input("model", model_path);
  GameRecord rec;
  if (c.record) {
    rec = parse_sgf(read_file(*c.record));
    man.add_input("record", *c.record);
  } else if (c.sequence) {
    rec = sequence_record(load_sequence_for(*c.sequence, c), c.komi);
    man.add_input("sequence", *c.sequence);
  } else {
    throw ConfigError("missing input: record or sequence");
  }
  if (rec.size != c.size) throw std::runtime_error("trace input has the wrong board size");
  const auto rows = trace_winrate(net, rec, search_for(c));
  write_text(c.out / "trace.csv", trace_csv(rows));
  man.details = {{"positions", rows.size()}, {"config", config_summary(c)}};
  man.write(c.out);
  out << "traced " << rows.size() << " positions\n";
  return 0;
}

// Per-file summary; exit 2 when any file is unparseable or illegal.
inline int cmd_sgf_check(const fs::path& target, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> lines;
  bool all_ok = true;
  auto check_one = [&](const std::string& name, const GameRecord& rec) {
    const auto rep = validate(rec);
    all_ok = all_ok && rep.legal;
    lines.emplace_back(name, rep.summary());
  };
  if (fs::is_directory(target)) {
    const auto corpus = load_corpus(target);
    for (std::size_t i = 0; i < corpus.records.size(); ++i) check_one(corpus.files[i], corpus.records[i]);
    for (const auto& f : corpus.failures) {
      all_ok = false;
      lines.emplace_back(f.file, "parse error: " + f.message);
    }
    std::sort(lines.begin(), lines.end());
  } else if (fs::exists(target)) {
    const std::string name = target.filename().string();
    try {
      check_one(name, parse_sgf(read_file(target)));
    } catch (const std::exception& e) {
      all_ok = false;
      lines.emplace_back(name, std::string("parse error: ") + e.what());
    }
  } else {
    throw ConfigError("no such file or directory: " + target.string());
  }
  for (const auto& [name, msg] : lines) out << name << ": " << msg << "\n";
  std::size_t ok = 0;
  for (const auto& l : lines) ok += l.second.rfind("legal", 0) == 0;
  out << ok << "/" << lines.size() << " legal\n";
  return all_ok ? 0 : 2;
}

// --- Dispatch ------------------------------------------------------------------

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string model, opponent, sequence, variant, background, record;
  std::vector<std::string> corpora;
};

inline RunConfig resolve(const Overrides& o, bool needs_out) {
  RunConfig c = o.config.empty() ? parse_run_config(json::object(), fs::path()) : load_run_config(o.config);
  if (!o.out.empty()) c.out = o.out;
  if (o.seed) c.seed = *o.seed;
  if (!o.model.empty()) c.model = fs::path(o.model);
  if (!o.opponent.empty()) c.opponent_model = fs::path(o.opponent);
  if (!o.sequence.empty()) c.sequence = fs::path(o.sequence);
  if (!o.variant.empty()) c.variant_sequence = fs::path(o.variant);
  if (!o.background.empty()) c.background = fs::path(o.background);
  if (!o.record.empty()) c.record = fs::path(o.record);
  if (!o.corpora.empty()) {
    c.corpora.clear();
    for (const auto& p : o.corpora) c.corpora.emplace_back(p);
  }
  if (needs_out && c.out.empty()) throw ConfigError("no output directory: pass --out or set \"out\"");
  check_inputs_exist(c);
  return c;
}

// args excludes the program name.
inline int dispatch(std::vector<std::string> args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Poisoning and Trojan experiments against a small Go engine", "gopoison"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kEngineVersion));
  Overrides o;
  std::function<int()> action;
  std::string sgf_target;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Global seed");
  };
  auto leaf = [&](CLI::App* sub, std::function<int(const RunConfig&, std::ostream&)> fn, bool needs_out = true) {
    common(sub);
    sub->callback([&, fn, needs_out] { action = [&, fn, needs_out] { return fn(resolve(o, needs_out), out); }; });
  };

  auto* gen = app.add_subcommand("gen-background", "Self-play background corpus");
  gen->add_option("--model", o.model, "Parameter file (default: seeded random network)");
  leaf(gen, cmd_gen_background);

  auto* inject = app.add_subcommand("inject", "Build poisoned corpora");
  inject->require_subcommand(1);
  auto* poison = inject->add_subcommand("poison", "Insert the sequence into background games");
  poison->add_option("--background", o.background);
  poison->add_option("--sequence", o.sequence);
  leaf(poison, cmd_inject_poison);
  auto* trojan = inject->add_subcommand("trojan", "Build a (trigger, response) corpus");
  trojan->add_option("--background", o.background);
  trojan->add_option("--sequence", o.sequence);
  leaf(trojan, cmd_inject_trojan);

  auto* tr = app.add_subcommand("train", "Train a network on SGF corpora");
  tr->add_option("--corpus", o.corpora, "Corpus directory (repeatable)");
  leaf(tr, cmd_train);

  auto* ev = app.add_subcommand("eval", "Evaluate trained networks");
  ev->require_subcommand(1);
  auto* act = ev->add_subcommand("activate", "Trojan activation trials");
  act->add_option("--model", o.model);
  act->add_option("--sequence", o.sequence);
  leaf(act, cmd_eval_activate);
  auto* mt = ev->add_subcommand("match", "Engine-vs-engine match");
  mt->add_option("--model", o.model);
  mt->add_option("--opponent", o.opponent);
  leaf(mt, cmd_eval_match);
  auto* sw = ev->add_subcommand("sweep", "Poison-count threshold sweep");
  sw->add_option("--background", o.background);
  sw->add_option("--sequence", o.sequence);
  leaf(sw, cmd_eval_sweep);
  auto* cmp = ev->add_subcommand("compare", "Standard vs variant Trojan sequence");
  cmp->add_option("--background", o.background);
  cmp->add_option("--sequence", o.sequence);
  cmp->add_option("--variant", o.variant);
  leaf(cmp, cmd_eval_compare);

  auto* trace = app.add_subcommand("trace", "Per-move win-rate trace");
  trace->add_option("--model", o.model);
  trace->add_option("--record", o.record, "SGF game (default: the sequence alone)");
  trace->add_option("--sequence", o.sequence);
  leaf(trace, cmd_trace);

  auto* sgf = app.add_subcommand("sgf", "SGF utilities");
  sgf->require_subcommand(1);
  auto* check = sgf->add_subcommand("check", "Legality summary for a file or directory");
  check->add_option("path", sgf_target)->required();
  check->callback([&] { action = [&] { return cmd_sgf_check(sgf_target, out); }; });

  auto* gtp = app.add_subcommand("gtp", "GTP engine on standard input/output");
  common(gtp);
  gtp->add_option("--model", o.model);
  gtp->callback([&] {
    action = [&] {
      const RunConfig c = resolve(o, false);
      // The board size follows the model, not the config.
      const auto net = load_params(need(c.model, "model"));
      gtp_loop(in, out, net, search_for(c));
      return 0;
    };
  });

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    return action ? action() : 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

inline int dispatch(int argc, char** argv, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(std::move(args), in, out, err);
}

}  // namespace gopoison::cli
