#pragma once

// PUCT tree search.
//
// Selection maximizes Q + c_puct * P * sqrt(N_parent) / (1 + N) with Q = 0 on
// unvisited edges. Values are backed up from the leaf's side-to-move
// perspective, negated once per ply. The final move is the best lower
// confidence bound among well-visited root edges (temperature 0) or a visit
// count sample (temperature > 0).

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "gopoison/board.hpp"
#include "gopoison/net.hpp"
#include "gopoison/random.hpp"

namespace gopoison {

struct SearchConfig {
  int n_sims = 64;
  double c_puct = 1.5;
  double dirichlet_alpha = 0.15;
  double dirichlet_epsilon = 0.0;
  double lcb_z = 1.28;
  double lcb_min_visit_fraction = 0.10;
  bool use_lcb = true;
  double temperature = 0.0;
  double komi = kDefaultKomi;
  std::uint64_t seed = 0;

  void check() const {
    if (n_sims < 1) throw std::invalid_argument("n_sims must be >= 1");
    if (!(c_puct > 0)) throw std::invalid_argument("c_puct must be positive");
    if (dirichlet_epsilon < 0 || dirichlet_epsilon >= 1) throw std::invalid_argument("dirichlet_epsilon must be in [0,1)");
    if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  }
};

// Anything that maps a position to (masked priors over size*size+1 actions,
// value for the side to move).
template <typename E>
concept Evaluator = requires(const E& e, const BoardState& s) {
  { e.evaluate(s) } -> std::convertible_to<NetworkOutput>;
};

struct NetworkEvaluator {
  const NetworkParams* params;
  NetworkOutput evaluate(const BoardState& s) const { return forward(*params, s); }
};

struct EdgeStats {
  Move move;
  double prior = 0.0;
  int visits = 0;
  double value_sum = 0.0;     // W
  double value_sq_sum = 0.0;  // for the LCB variance
  int child = -1;             // node index, -1 until first visited

  double q() const { return visits > 0 ? value_sum / visits : 0.0; }
  // Sample variance of backed-up values; 0 below two visits.
  double variance() const {
    if (visits < 2) return 0.0;
    const double mean = value_sum / visits;
    return std::max(0.0, (value_sq_sum - visits * mean * mean) / (visits - 1));
  }
};

struct SearchNode {
  std::vector<EdgeStats> edges;
  int visits = 0;
  double value_sum = 0.0;  // from this node's side-to-move perspective
  bool expanded = false;
};

struct SearchTree {
  std::vector<SearchNode> nodes;  // nodes[0] is the root
};

struct PathStep {
  int node = 0;
  int edge = 0;
};

inline double puct_score(const EdgeStats& e, int parent_visits, double c_puct) {
  return e.q() + c_puct * e.prior * std::sqrt(static_cast<double>(parent_visits)) / (1.0 + e.visits);
}

// argmax of Q + U; ties go to the lowest index.
inline std::size_t select_child(std::span<const EdgeStats> edges, int parent_visits, double c_puct) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double s = puct_score(edges[i], parent_visits, c_puct);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

// leaf_value is from the perspective of the player to move at the leaf. The
// edge entering the leaf receives -leaf_value, its parent edge +leaf_value,
// and so on. Node totals are updated for every node on the path plus the
// leaf node itself when it exists.
inline void backup(SearchTree& tree, std::span<const PathStep> path, double leaf_value) {
  double v = leaf_value;
  if (!path.empty()) {
    const auto& last = path.back();
    const int leaf = tree.nodes[static_cast<std::size_t>(last.node)].edges[static_cast<std::size_t>(last.edge)].child;
    if (leaf >= 0) {
      auto& ln = tree.nodes[static_cast<std::size_t>(leaf)];
      ++ln.visits;
      ln.value_sum += v;
    }
  }
  for (std::size_t i = path.size(); i-- > 0;) {
    v = -v;
    auto& node = tree.nodes[static_cast<std::size_t>(path[i].node)];
    auto& e = node.edges[static_cast<std::size_t>(path[i].edge)];
    ++e.visits;
    e.value_sum += v;
    e.value_sq_sum += v * v;
    ++node.visits;
    node.value_sum += v;
  }
}

struct RootMoveStats {
  Move move;
  int visits = 0;
  double q = 0.0;
  double prior = 0.0;
  double u = 0.0;
  double lcb = 0.0;
  double variance = 0.0;
};

struct SearchResult {
  std::vector<RootMoveStats> moves;
  Move chosen;
  double root_value = 0.0;  // mean backed-up value for the side to move at the root
  int root_visits = 0;
};

inline double terminal_value(const BoardState& s, double komi) {
  const double sc = score(s, komi);
  const double black = sc > 0 ? 1.0 : sc < 0 ? -1.0 : 0.0;
  return s.to_move() == Color::Black ? black : -black;
}

namespace detail {

inline void expand(SearchNode& node, const BoardState& s, const NetworkOutput& out) {
  const int n = s.num_points();
  for (int a = 0; a <= n; ++a) {
    const double p = out.policy[static_cast<std::size_t>(a)];
    const Move m = action_move(a, s.size());
    // The policy is legal-masked; pass is always legal.
    if (p > 0.0 || m.is_pass()) node.edges.push_back(EdgeStats{m, p});
  }
  double total = 0.0;
  for (const auto& e : node.edges) total += e.prior;
  if (total > 0.0) {
    for (auto& e : node.edges) e.prior /= total;
  } else {
    for (auto& e : node.edges) e.prior = 1.0 / static_cast<double>(node.edges.size());
  }
  node.expanded = true;
}

}  // namespace detail

// LCB of every root edge; -inf when unvisited.
inline double edge_lcb(const RootMoveStats& m, double z) {
  if (m.visits == 0) return -std::numeric_limits<double>::infinity();
  return m.q - z * std::sqrt(m.variance / m.visits);
}

inline Move choose_move(const SearchResult& result, const SearchConfig& config, Rng& rng) {
  const auto& ms = result.moves;
  if (ms.empty()) return Move::pass();
  int max_visits = 0;
  for (const auto& m : ms) max_visits = std::max(max_visits, m.visits);
  if (config.temperature > 0.0) {
    std::vector<double> w(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) {
      w[i] = max_visits > 0 ? std::pow(static_cast<double>(ms[i].visits) / max_visits, 1.0 / config.temperature)
                            : ms[i].prior;
    }
    return ms[sample_weighted(rng, w)].move;
  }
  if (max_visits == 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ms.size(); ++i) {
      if (ms[i].prior > ms[best].prior) best = i;
    }
    return ms[best].move;
  }
  std::size_t best = 0;
  bool found = false;
  if (config.use_lcb) {
    double best_lcb = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ms.size(); ++i) {
      if (ms[i].visits == 0 || ms[i].visits < config.lcb_min_visit_fraction * max_visits) continue;
      const double l = edge_lcb(ms[i], config.lcb_z);
      if (!found || l > best_lcb || (l == best_lcb && ms[i].visits > ms[best].visits)) {
        best = i;
        best_lcb = l;
        found = true;
      }
    }
  }
  if (!found) {
    for (std::size_t i = 0; i < ms.size(); ++i) {
      if (ms[i].visits > ms[best].visits) best = i;
    }
  }
  return ms[best].move;
}

inline Move choose_move(const SearchResult& result, const SearchConfig& config) {
  Rng rng = make_rng(config.seed, 0xC405E);
  return choose_move(result, config, rng);
}

template <Evaluator E>
SearchResult run_search(const BoardState& root_state, const E& evaluator, const SearchConfig& config,
                        SearchTree* tree_out = nullptr) {
  config.check();
  Rng rng = make_rng(config.seed, 0x5EA2C4);
  SearchTree tree;
  tree.nodes.emplace_back();

  if (root_state.game_over()) {
    // Nothing to search; report pass with the true result.
    SearchResult r;
    r.moves.push_back(RootMoveStats{Move::pass(), 0, 0.0, 1.0, 0.0, 0.0, 0.0});
    r.chosen = Move::pass();
    r.root_value = terminal_value(root_state, config.komi);
    r.root_visits = 1;
    return r;
  }

  {
    const NetworkOutput out = evaluator.evaluate(root_state);
    auto& root = tree.nodes[0];
    detail::expand(root, root_state, out);
    root.visits = 1;
    root.value_sum = out.value;
    if (config.dirichlet_epsilon > 0.0) {
      const auto noise = dirichlet(rng, root.edges.size(), config.dirichlet_alpha);
      for (std::size_t i = 0; i < root.edges.size(); ++i) {
        root.edges[i].prior = (1.0 - config.dirichlet_epsilon) * root.edges[i].prior + config.dirichlet_epsilon * noise[i];
      }
    }
  }

  std::vector<PathStep> path;
  for (int sim = 1; sim < config.n_sims; ++sim) {
    path.clear();
    BoardState state = root_state;
    int node_index = 0;
    double leaf_value = 0.0;
    for (;;) {
      SearchNode& node = tree.nodes[static_cast<std::size_t>(node_index)];
      const auto edge_index = static_cast<int>(select_child(node.edges, node.visits, config.c_puct));
      path.push_back(PathStep{node_index, edge_index});
      state = play(state, node.edges[static_cast<std::size_t>(edge_index)].move);
      int child = node.edges[static_cast<std::size_t>(edge_index)].child;
      if (child < 0) {
        child = static_cast<int>(tree.nodes.size());
        tree.nodes[static_cast<std::size_t>(node_index)].edges[static_cast<std::size_t>(edge_index)].child = child;
        tree.nodes.emplace_back();
      }
      SearchNode& next = tree.nodes[static_cast<std::size_t>(child)];
      if (state.game_over()) {
        leaf_value = terminal_value(state, config.komi);
        break;
      }
      if (!next.expanded) {
        const NetworkOutput out = evaluator.evaluate(state);
        detail::expand(next, state, out);
        leaf_value = out.value;
        break;
      }
      node_index = child;
    }
    backup(tree, path, leaf_value);
  }

  SearchResult result;
  const auto& root = tree.nodes[0];
  result.root_visits = root.visits;
  result.root_value = root.value_sum / root.visits;
  for (const auto& e : root.edges) {
    RootMoveStats m;
    m.move = e.move;
    m.visits = e.visits;
    m.q = e.q();
    m.prior = e.prior;
    m.u = config.c_puct * e.prior * std::sqrt(static_cast<double>(root.visits)) / (1.0 + e.visits);
    m.variance = e.variance();
    m.lcb = edge_lcb(m, config.lcb_z);
    result.moves.push_back(m);
  }
  result.chosen = choose_move(result, config, rng);
  if (tree_out) *tree_out = std::move(tree);
  return result;
}

inline SearchResult run_search(const BoardState& state, const NetworkParams& params, const SearchConfig& config) {
  return run_search(state, NetworkEvaluator{&params}, config);
}

}  // namespace gopoison
