#pragma once

// Small policy/value network f(s) = (p, v).
//
//   input 3 x S x S
//   -> conv3x3 (3->C) -> ELU -> conv3x3 (C->C) -> ELU -> conv3x3 (C->C) -> ELU
//   policy: conv1x1 (C->2) -> ELU -> affine (2*S*S -> S*S+1) -> masked softmax
//   value:  conv1x1 (C->1) -> ELU -> affine (S*S -> H) -> ELU -> affine (H->1) -> tanh
//
// Weights are stored as 32-bit floats; every activation and reduction is
// computed in double. v is the expected outcome in [-1, 1] for the side to
// move. Action index = row * S + col for points, S*S for pass.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gopoison/board.hpp"
#include "gopoison/random.hpp"

namespace gopoison {

struct NetworkShape {
  int size = 9;
  int channels = 32;
  int value_hidden = 64;

  int points() const { return size * size; }
  int actions() const { return size * size + 1; }
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

// Kept alongside the weights so a parameter file records how it was trained.
struct TrainingHyperparameters {
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  float l2 = 1e-4f;
  float epochs = 10.0f;
  float batch_size = 64.0f;
  friend bool operator==(const TrainingHyperparameters&, const TrainingHyperparameters&) = default;
};

enum class Tensor : int {
  StemWeight,
  StemBias,
  Body1Weight,
  Body1Bias,
  Body2Weight,
  Body2Bias,
  PolicyConvWeight,
  PolicyConvBias,
  PolicyFcWeight,
  PolicyFcBias,
  ValueConvWeight,
  ValueConvBias,
  ValueFc1Weight,
  ValueFc1Bias,
  ValueFc2Weight,
  ValueFc2Bias,
};

inline constexpr int kNumTensors = 16;

inline constexpr std::array<const char*, kNumTensors> kTensorNames = {
    "stem.weight",        "stem.bias",         "body1.weight",      "body1.bias",
    "body2.weight",       "body2.bias",        "policy_conv.weight", "policy_conv.bias",
    "policy_fc.weight",   "policy_fc.bias",    "value_conv.weight", "value_conv.bias",
    "value_fc1.weight",   "value_fc1.bias",    "value_fc2.weight",  "value_fc2.bias"};

// Tensor dimensions in file order.
inline std::vector<std::uint32_t> tensor_dims(const NetworkShape& s, Tensor t) {
  const auto c = static_cast<std::uint32_t>(s.channels);
  const auto p = static_cast<std::uint32_t>(s.points());
  const auto a = static_cast<std::uint32_t>(s.actions());
  const auto h = static_cast<std::uint32_t>(s.value_hidden);
  switch (t) {
    case Tensor::StemWeight: return {c, 3, 3, 3};
    case Tensor::Body1Weight:
    case Tensor::Body2Weight: return {c, c, 3, 3};
    case Tensor::StemBias:
    case Tensor::Body1Bias:
    case Tensor::Body2Bias: return {c};
    case Tensor::PolicyConvWeight: return {2, c};
    case Tensor::PolicyConvBias: return {2};
    case Tensor::PolicyFcWeight: return {a, 2 * p};
    case Tensor::PolicyFcBias: return {a};
    case Tensor::ValueConvWeight: return {1, c};
    case Tensor::ValueConvBias: return {1};
    case Tensor::ValueFc1Weight: return {h, p};
    case Tensor::ValueFc1Bias: return {h};
    case Tensor::ValueFc2Weight: return {1, h};
    case Tensor::ValueFc2Bias: return {1};
  }
  return {};
}

inline std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

// Offsets of each tensor inside the flat parameter vector; last entry is the
// total count.
inline std::array<std::size_t, kNumTensors + 1> tensor_offsets(const NetworkShape& s) {
  std::array<std::size_t, kNumTensors + 1> off{};
  for (int i = 0; i < kNumTensors; ++i) {
    off[static_cast<std::size_t>(i) + 1] = off[static_cast<std::size_t>(i)] +
                                            element_count(tensor_dims(s, static_cast<Tensor>(i)));
  }
  return off;
}

struct NetworkParams {
  NetworkShape shape;
  std::vector<float> theta;
  TrainingHyperparameters hyper;

  static NetworkParams zeros(const NetworkShape& shape) {
    if (shape.size < 2 || shape.size > kMaxBoardSize || shape.channels < 1 || shape.value_hidden < 1) {
      throw std::invalid_argument("bad network shape");
    }
    NetworkParams p;
    p.shape = shape;
    p.theta.assign(tensor_offsets(shape).back(), 0.0f);
    return p;
  }

  std::span<float> tensor(Tensor t) {
    const auto off = tensor_offsets(shape);
    const auto i = static_cast<std::size_t>(t);
    return std::span<float>(theta).subspan(off[i], off[i + 1] - off[i]);
  }
  std::span<const float> tensor(Tensor t) const {
    const auto off = tensor_offsets(shape);
    const auto i = static_cast<std::size_t>(t);
    return std::span<const float>(theta).subspan(off[i], off[i + 1] - off[i]);
  }

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// He-style normal init for the trunk, smaller scale on the output layers.
inline NetworkParams init_params(const NetworkShape& shape, std::uint64_t seed) {
  NetworkParams p = NetworkParams::zeros(shape);
  Rng rng = make_rng(seed, 0x1417);
  auto fill = [&](Tensor t, double stddev) {
    for (auto& w : p.tensor(t)) w = static_cast<float>(stddev * standard_normal(rng));
  };
  const double c = shape.channels;
  fill(Tensor::StemWeight, std::sqrt(2.0 / 27.0));
  fill(Tensor::Body1Weight, std::sqrt(2.0 / (9.0 * c)));
  fill(Tensor::Body2Weight, std::sqrt(2.0 / (9.0 * c)));
  fill(Tensor::PolicyConvWeight, std::sqrt(2.0 / c));
  fill(Tensor::PolicyFcWeight, std::sqrt(1.0 / (2.0 * shape.points())));
  fill(Tensor::ValueConvWeight, std::sqrt(2.0 / c));
  fill(Tensor::ValueFc1Weight, std::sqrt(2.0 / shape.points()));
  fill(Tensor::ValueFc2Weight, std::sqrt(1.0 / shape.value_hidden));
  return p;
}

// --- Encoding --------------------------------------------------------------

struct StateEncoding {
  int size = 0;
  // plane 0: side-to-move stones, plane 1: opponent stones, plane 2: 1 when
  // Black is to move. Point index = row * size + col.
  std::vector<float> planes;

  float at(int plane, int index) const {
    return planes[static_cast<std::size_t>(plane * size * size + index)];
  }
  friend bool operator==(const StateEncoding&, const StateEncoding&) = default;
};

inline StateEncoding encode_state(const BoardState& s) {
  const int n = s.num_points();
  StateEncoding e{s.size(), std::vector<float>(static_cast<std::size_t>(3 * n), 0.0f)};
  const Stone own = stone_of(s.to_move());
  const Stone opp = stone_of(opponent(s.to_move()));
  const float black_to_move = s.to_move() == Color::Black ? 1.0f : 0.0f;
  for (int i = 0; i < n; ++i) {
    const Stone st = s.at(i);
    if (st == own) e.planes[static_cast<std::size_t>(i)] = 1.0f;
    if (st == opp) e.planes[static_cast<std::size_t>(n + i)] = 1.0f;
    e.planes[static_cast<std::size_t>(2 * n + i)] = black_to_move;
  }
  return e;
}

inline int action_index(Move m, int size) {
  if (m.is_pass()) return size * size;
  return m.point().row * size + m.point().col;
}

inline Move action_move(int action, int size) {
  if (action == size * size) return Move::pass();
  return Move::play(action % size, action / size);
}

// 1 for every action play() accepts.
inline std::vector<std::uint8_t> legal_mask(const BoardState& s) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(s.num_points() + 1), 0);
  for (const Move& m : legal_moves(s)) mask[static_cast<std::size_t>(action_index(m, s.size()))] = 1;
  return mask;
}

struct NetworkOutput {
  std::vector<double> policy;  // size*size + 1, zero on illegal actions
  double value = 0.0;
};

struct TrainingExample {
  StateEncoding encoding;
  std::vector<std::uint8_t> legal;
  int policy_target = 0;
  double z = 0.0;  // +1 if the side to move went on to win, else -1
};

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;  // mean cross-entropy
  double value = 0.0;   // mean squared error
  double regularization = 0.0;
};

namespace detail {

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
// Derivative expressed through the activation value.
inline double elu_grad(double pre, double act) { return pre > 0.0 ? 1.0 : act + 1.0; }

// Activations of one forward pass; reused across examples to avoid churn.
struct Workspace {
  int s = 0, c = 0, h = 0, pad = 0;
  std::vector<double> in_pad;             // 3 x (S+2)^2
  std::array<std::vector<double>, 3> pre;  // trunk pre-activations, C x S^2
  std::array<std::vector<double>, 3> act_pad;  // trunk activations, C x (S+2)^2
  std::vector<double> pol_pre, pol_act;   // 2 x S^2
  std::vector<double> logits, prob;       // A
  std::vector<double> val_pre, val_act;   // S^2
  std::vector<double> hid_pre, hid_act;   // H
  double out_pre = 0.0, value = 0.0;

  // Backward buffers.
  std::vector<double> d_act_pad, d_pre, d_prev_pad, d_pol, d_val, d_hid;

  void resize(const NetworkShape& shape) {
    if (s == shape.size && c == shape.channels && h == shape.value_hidden) return;
    s = shape.size;
    c = shape.channels;
    h = shape.value_hidden;
    pad = (s + 2) * (s + 2);
    const auto cs = static_cast<std::size_t>(c);
    const auto n = static_cast<std::size_t>(s * s);
    const auto np = static_cast<std::size_t>(pad);
    in_pad.assign(3 * np, 0.0);
    for (auto& v : pre) v.assign(cs * n, 0.0);
    for (auto& v : act_pad) v.assign(cs * np, 0.0);
    pol_pre.assign(2 * n, 0.0);
    pol_act.assign(2 * n, 0.0);
    logits.assign(n + 1, 0.0);
    prob.assign(n + 1, 0.0);
    val_pre.assign(n, 0.0);
    val_act.assign(n, 0.0);
    hid_pre.assign(static_cast<std::size_t>(h), 0.0);
    hid_act.assign(static_cast<std::size_t>(h), 0.0);
    d_act_pad.assign(cs * np, 0.0);
    d_prev_pad.assign(cs * np, 0.0);
    d_pre.assign(cs * n, 0.0);
    d_pol.assign(2 * n, 0.0);
    d_val.assign(n, 0.0);
    d_hid.assign(static_cast<std::size_t>(h), 0.0);
  }
};

// 3x3 same-padding convolution: out[o][y][x] = b[o] + sum_i,ky,kx
// w[o][i][ky][kx] * in[i][y+ky-1][x+kx-1]. Input is zero-padded.
inline void conv3x3_forward(int s, int cin, int cout, const float* w, const float* b, const double* in_pad,
                            double* out) {
  const int sp = s + 2;
  const int n = s * s;
  for (int o = 0; o < cout; ++o) {
    double* dst = out + o * n;
    std::fill(dst, dst + n, static_cast<double>(b[o]));
    for (int i = 0; i < cin; ++i) {
      const double* src = in_pad + i * sp * sp;
      const float* k = w + (o * cin + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = k[ky * 3 + kx];
          for (int y = 0; y < s; ++y) {
            const double* row = src + (y + ky) * sp + kx;
            double* drow = dst + y * s;
            for (int x = 0; x < s; ++x) drow[x] += wk * row[x];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (optionally) d(in_pad) from d(out).
inline void conv3x3_backward(int s, int cin, int cout, const float* w, const double* in_pad, const double* d_out,
                             double* dw, double* db, double* d_in_pad) {
  const int sp = s + 2;
  const int n = s * s;
  for (int o = 0; o < cout; ++o) {
    const double* g = d_out + o * n;
    double bias = 0.0;
    for (int p = 0; p < n; ++p) bias += g[p];
    db[o] += bias;
    for (int i = 0; i < cin; ++i) {
      const double* src = in_pad + i * sp * sp;
      const float* k = w + (o * cin + i) * 9;
      double* dk = dw + (o * cin + i) * 9;
      double* dsrc = d_in_pad ? d_in_pad + i * sp * sp : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = k[ky * 3 + kx];
          double acc = 0.0;
          for (int y = 0; y < s; ++y) {
            const double* row = src + (y + ky) * sp + kx;
            const double* grow = g + y * s;
            for (int x = 0; x < s; ++x) acc += grow[x] * row[x];
            if (dsrc) {
              double* drow = dsrc + (y + ky) * sp + kx;
              for (int x = 0; x < s; ++x) drow[x] += wk * grow[x];
            }
          }
          dk[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

inline void activate_into_pad(int s, int c, const std::vector<double>& pre, std::vector<double>& act_pad) {
  const int sp = s + 2;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        act_pad[static_cast<std::size_t>(ch * sp * sp + (y + 1) * sp + x + 1)] =
            elu(pre[static_cast<std::size_t>(ch * s * s + y * s + x)]);
      }
    }
  }
}

inline void check_input(const NetworkParams& p, const StateEncoding& e, std::span<const std::uint8_t> legal) {
  if (e.size != p.shape.size || e.planes.size() != static_cast<std::size_t>(3 * p.shape.points()) ||
      legal.size() != static_cast<std::size_t>(p.shape.actions())) {
    throw std::invalid_argument("network shape mismatch: parameters are for size " + std::to_string(p.shape.size));
  }
}

// Fills ws with the full forward pass; ws.prob is the legal-masked softmax.
inline void forward_pass(const NetworkParams& params, const StateEncoding& enc, std::span<const std::uint8_t> legal,
                         Workspace& ws) {
  check_input(params, enc, legal);
  const NetworkShape& sh = params.shape;
  ws.resize(sh);
  const int s = sh.size, c = sh.channels, n = sh.points(), a = sh.actions(), h = sh.value_hidden;
  const int sp = s + 2;
  const auto off = tensor_offsets(sh);
  const float* th = params.theta.data();
  auto W = [&](Tensor t) { return th + off[static_cast<std::size_t>(t)]; };

  for (int pl = 0; pl < 3; ++pl) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        ws.in_pad[static_cast<std::size_t>(pl * sp * sp + (y + 1) * sp + x + 1)] = enc.at(pl, y * s + x);
      }
    }
  }
  conv3x3_forward(s, 3, c, W(Tensor::StemWeight), W(Tensor::StemBias), ws.in_pad.data(), ws.pre[0].data());
  activate_into_pad(s, c, ws.pre[0], ws.act_pad[0]);
  conv3x3_forward(s, c, c, W(Tensor::Body1Weight), W(Tensor::Body1Bias), ws.act_pad[0].data(), ws.pre[1].data());
  activate_into_pad(s, c, ws.pre[1], ws.act_pad[1]);
  conv3x3_forward(s, c, c, W(Tensor::Body2Weight), W(Tensor::Body2Bias), ws.act_pad[1].data(), ws.pre[2].data());
  activate_into_pad(s, c, ws.pre[2], ws.act_pad[2]);
  const double* trunk = ws.act_pad[2].data();

  // Policy head.
  const float* pcw = W(Tensor::PolicyConvWeight);
  const float* pcb = W(Tensor::PolicyConvBias);
  for (int k = 0; k < 2; ++k) {
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        double acc = pcb[k];
        for (int ch = 0; ch < c; ++ch) acc += pcw[k * c + ch] * trunk[ch * sp * sp + (y + 1) * sp + x + 1];
        const auto idx = static_cast<std::size_t>(k * n + y * s + x);
        ws.pol_pre[idx] = acc;
        ws.pol_act[idx] = elu(acc);
      }
    }
  }
  const float* pfw = W(Tensor::PolicyFcWeight);
  const float* pfb = W(Tensor::PolicyFcBias);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < a; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    if (!legal[uj]) {
      ws.logits[uj] = -std::numeric_limits<double>::infinity();
      continue;
    }
    double acc = pfb[j];
    const float* row = pfw + static_cast<std::ptrdiff_t>(j) * 2 * n;
    for (int q = 0; q < 2 * n; ++q) acc += row[q] * ws.pol_act[static_cast<std::size_t>(q)];
    ws.logits[uj] = acc;
    max_logit = std::max(max_logit, acc);
  }
  double total = 0.0;
  for (int j = 0; j < a; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    ws.prob[uj] = legal[uj] ? std::exp(ws.logits[uj] - max_logit) : 0.0;
    total += ws.prob[uj];
  }
  for (auto& v : ws.prob) v /= total;

  // Value head.
  const float* vcw = W(Tensor::ValueConvWeight);
  const double vcb = W(Tensor::ValueConvBias)[0];
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      double acc = vcb;
      for (int ch = 0; ch < c; ++ch) acc += vcw[ch] * trunk[ch * sp * sp + (y + 1) * sp + x + 1];
      const auto idx = static_cast<std::size_t>(y * s + x);
      ws.val_pre[idx] = acc;
      ws.val_act[idx] = elu(acc);
    }
  }
  const float* f1w = W(Tensor::ValueFc1Weight);
  const float* f1b = W(Tensor::ValueFc1Bias);
  for (int u = 0; u < h; ++u) {
    double acc = f1b[u];
    for (int q = 0; q < n; ++q) acc += f1w[u * n + q] * ws.val_act[static_cast<std::size_t>(q)];
    ws.hid_pre[static_cast<std::size_t>(u)] = acc;
    ws.hid_act[static_cast<std::size_t>(u)] = elu(acc);
  }
  const float* f2w = W(Tensor::ValueFc2Weight);
  double out = W(Tensor::ValueFc2Bias)[0];
  for (int u = 0; u < h; ++u) out += f2w[u] * ws.hid_act[static_cast<std::size_t>(u)];
  ws.out_pre = out;
  ws.value = std::tanh(out);
}

// Backprop of  scale * [ (z - v)^2 - log p[target] ]  into grad.
inline void backward_pass(const NetworkParams& params, int target, double z, double scale, Workspace& ws,
                          std::vector<double>& grad) {
  const NetworkShape& sh = params.shape;
  const int s = sh.size, c = sh.channels, n = sh.points(), a = sh.actions(), h = sh.value_hidden;
  const int sp = s + 2;
  const auto off = tensor_offsets(sh);
  const float* th = params.theta.data();
  auto W = [&](Tensor t) { return th + off[static_cast<std::size_t>(t)]; };
  auto G = [&](Tensor t) { return grad.data() + off[static_cast<std::size_t>(t)]; };
  const double* trunk = ws.act_pad[2].data();
  std::fill(ws.d_act_pad.begin(), ws.d_act_pad.end(), 0.0);

  // Value head.
  const double d_out = scale * 2.0 * (ws.value - z) * (1.0 - ws.value * ws.value);
  {
    const float* f2w = W(Tensor::ValueFc2Weight);
    double* g2w = G(Tensor::ValueFc2Weight);
    G(Tensor::ValueFc2Bias)[0] += d_out;
    for (int u = 0; u < h; ++u) {
      const auto uu = static_cast<std::size_t>(u);
      g2w[u] += d_out * ws.hid_act[uu];
      ws.d_hid[uu] = d_out * f2w[u] * elu_grad(ws.hid_pre[uu], ws.hid_act[uu]);
    }
    const float* f1w = W(Tensor::ValueFc1Weight);
    double* g1w = G(Tensor::ValueFc1Weight);
    double* g1b = G(Tensor::ValueFc1Bias);
    std::fill(ws.d_val.begin(), ws.d_val.end(), 0.0);
    for (int u = 0; u < h; ++u) {
      const double du = ws.d_hid[static_cast<std::size_t>(u)];
      g1b[u] += du;
      for (int q = 0; q < n; ++q) {
        g1w[u * n + q] += du * ws.val_act[static_cast<std::size_t>(q)];
        ws.d_val[static_cast<std::size_t>(q)] += du * f1w[u * n + q];
      }
    }
    const float* vcw = W(Tensor::ValueConvWeight);
    double* gvw = G(Tensor::ValueConvWeight);
    double* gvb = G(Tensor::ValueConvBias);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const auto q = static_cast<std::size_t>(y * s + x);
        const double dv = ws.d_val[q] * elu_grad(ws.val_pre[q], ws.val_act[q]);
        gvb[0] += dv;
        const int tp = (y + 1) * sp + x + 1;
        for (int ch = 0; ch < c; ++ch) {
          gvw[ch] += dv * trunk[ch * sp * sp + tp];
          ws.d_act_pad[static_cast<std::size_t>(ch * sp * sp + tp)] += dv * vcw[ch];
        }
      }
    }
  }

  // Policy head: d logits = p - onehot(target) on legal actions.
  {
    const float* pfw = W(Tensor::PolicyFcWeight);
    double* gfw = G(Tensor::PolicyFcWeight);
    double* gfb = G(Tensor::PolicyFcBias);
    std::fill(ws.d_pol.begin(), ws.d_pol.end(), 0.0);
    for (int j = 0; j < a; ++j) {
      const double pj = ws.prob[static_cast<std::size_t>(j)];
      const double dl = scale * (pj - (j == target ? 1.0 : 0.0));
      if (dl == 0.0) continue;
      gfb[j] += dl;
      const float* row = pfw + static_cast<std::ptrdiff_t>(j) * 2 * n;
      double* grow = gfw + static_cast<std::ptrdiff_t>(j) * 2 * n;
      for (int q = 0; q < 2 * n; ++q) {
        grow[q] += dl * ws.pol_act[static_cast<std::size_t>(q)];
        ws.d_pol[static_cast<std::size_t>(q)] += dl * row[q];
      }
    }
    const float* pcw = W(Tensor::PolicyConvWeight);
    double* gcw = G(Tensor::PolicyConvWeight);
    double* gcb = G(Tensor::PolicyConvBias);
    for (int k = 0; k < 2; ++k) {
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const auto q = static_cast<std::size_t>(k * n + y * s + x);
          const double dp = ws.d_pol[q] * elu_grad(ws.pol_pre[q], ws.pol_act[q]);
          if (dp == 0.0) continue;
          gcb[k] += dp;
          const int tp = (y + 1) * sp + x + 1;
          for (int ch = 0; ch < c; ++ch) {
            gcw[k * c + ch] += dp * trunk[ch * sp * sp + tp];
            ws.d_act_pad[static_cast<std::size_t>(ch * sp * sp + tp)] += dp * pcw[k * c + ch];
          }
        }
      }
    }
  }

  // Trunk, last layer first.
  const std::array<Tensor, 3> weights = {Tensor::StemWeight, Tensor::Body1Weight, Tensor::Body2Weight};
  const std::array<Tensor, 3> biases = {Tensor::StemBias, Tensor::Body1Bias, Tensor::Body2Bias};
  for (int layer = 2; layer >= 0; --layer) {
    const auto ul = static_cast<std::size_t>(layer);
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const auto q = static_cast<std::size_t>(ch * n + y * s + x);
          const auto qp = static_cast<std::size_t>(ch * sp * sp + (y + 1) * sp + x + 1);
          ws.d_pre[q] = ws.d_act_pad[qp] * elu_grad(ws.pre[ul][q], ws.act_pad[ul][qp]);
        }
      }
    }
    const int cin = layer == 0 ? 3 : c;
    const double* input = layer == 0 ? ws.in_pad.data() : ws.act_pad[ul - 1].data();
    double* d_input = nullptr;
    if (layer > 0) {
      std::fill(ws.d_prev_pad.begin(), ws.d_prev_pad.end(), 0.0);
      d_input = ws.d_prev_pad.data();
    }
    conv3x3_backward(s, cin, c, W(weights[ul]), input, ws.d_pre.data(), G(weights[ul]), G(biases[ul]), d_input);
    if (layer > 0) std::swap(ws.d_act_pad, ws.d_prev_pad);
  }
}

inline double squared_norm(const NetworkParams& p) {
  double acc = 0.0;
  for (float w : p.theta) acc += static_cast<double>(w) * static_cast<double>(w);
  return acc;
}

inline void check_batch(const NetworkParams& params, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  for (const auto& ex : batch) {
    if (ex.policy_target < 0 || ex.policy_target >= params.shape.actions() ||
        ex.legal.size() != static_cast<std::size_t>(params.shape.actions()) ||
        !ex.legal[static_cast<std::size_t>(ex.policy_target)]) {
      throw std::invalid_argument("training example target is not a legal action");
    }
  }
}

}  // namespace detail

inline NetworkOutput evaluate(const NetworkParams& params, const StateEncoding& enc,
                              std::span<const std::uint8_t> legal) {
  thread_local detail::Workspace ws;
  detail::forward_pass(params, enc, legal, ws);
  return NetworkOutput{ws.prob, ws.value};
}

inline NetworkOutput forward(const NetworkParams& params, const BoardState& state) {
  if (state.size() != params.shape.size) {
    throw std::invalid_argument("network shape mismatch: parameters are for size " +
                                std::to_string(params.shape.size));
  }
  const auto legal = legal_mask(state);
  return evaluate(params, encode_state(state), legal);
}

// mean over batch of (z - v)^2 - log p[target], plus l2 * |theta|^2.
inline LossBreakdown loss(const NetworkParams& params, std::span<const TrainingExample> batch, double l2) {
  detail::check_batch(params, batch);
  detail::Workspace ws;
  LossBreakdown out;
  for (const auto& ex : batch) {
    detail::forward_pass(params, ex.encoding, ex.legal, ws);
    out.value += (ex.z - ws.value) * (ex.z - ws.value);
    out.policy -= std::log(ws.prob[static_cast<std::size_t>(ex.policy_target)]);
  }
  const auto n = static_cast<double>(batch.size());
  out.value /= n;
  out.policy /= n;
  out.regularization = l2 * detail::squared_norm(params);
  out.total = out.value + out.policy + out.regularization;
  return out;
}

struct GradientResult {
  LossBreakdown loss;
  std::vector<double> gradient;  // aligned with NetworkParams::theta
};

// Exact gradient of loss(); examples are accumulated in batch order.
inline GradientResult gradients(const NetworkParams& params, std::span<const TrainingExample> batch, double l2) {
  detail::check_batch(params, batch);
  GradientResult out;
  out.gradient.assign(params.theta.size(), 0.0);
  thread_local detail::Workspace ws;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    detail::forward_pass(params, ex.encoding, ex.legal, ws);
    out.loss.value += (ex.z - ws.value) * (ex.z - ws.value);
    out.loss.policy -= std::log(ws.prob[static_cast<std::size_t>(ex.policy_target)]);
    detail::backward_pass(params, ex.policy_target, ex.z, scale, ws, out.gradient);
  }
  out.loss.value *= scale;
  out.loss.policy *= scale;
  out.loss.regularization = l2 * detail::squared_norm(params);
  out.loss.total = out.loss.value + out.loss.policy + out.loss.regularization;
  if (l2 != 0.0) {
    for (std::size_t i = 0; i < params.theta.size(); ++i) out.gradient[i] += 2.0 * l2 * params.theta[i];
  }
  return out;
}

struct MomentumState {
  std::vector<double> velocity;
};

// Classical momentum: m <- mu*m + g; theta <- theta - lr*m.
inline void sgd_step(NetworkParams& params, std::span<const double> gradient, double lr, double momentum,
                     MomentumState& state) {
  if (gradient.size() != params.theta.size()) throw std::invalid_argument("gradient shape mismatch");
  if (state.velocity.empty()) state.velocity.assign(params.theta.size(), 0.0);
  if (state.velocity.size() != params.theta.size()) throw std::invalid_argument("momentum shape mismatch");
  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    state.velocity[i] = momentum * state.velocity[i] + gradient[i];
    params.theta[i] = static_cast<float>(static_cast<double>(params.theta[i]) - lr * state.velocity[i]);
  }
}

// --- Parameter files --------------------------------------------------------
//
// "GPNW", u16 version, u16 board size, u16 channels, then the 16 network
// tensors in Tensor order followed by one rank-1 tensor of 5 training
// hyperparameters. Each tensor: u8 rank, u32 dims[rank], f32 payload. All
// integers and floats little-endian.

inline constexpr std::uint16_t kParamsVersion = 1;

class ParamsError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, Truncated, ShapeMismatch };
  ParamsError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void tensor(const std::vector<std::uint32_t>& dims, std::span<const float> data) {
    u8(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) u32(d);
    for (float f : data) f32(f);
  }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v = static_cast<std::uint16_t>(v | (std::uint16_t{u8()} << (8 * i)));
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f = 0.0f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::vector<std::uint32_t> dims() {
    const std::uint8_t rank = u8();
    std::vector<std::uint32_t> d(rank);
    for (auto& x : d) x = u32();
    return d;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParamsError(ParamsError::Kind::Truncated, "parameter file truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_params(const NetworkParams& p) {
  detail::ByteWriter w;
  for (char c : std::string_view("GPNW")) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kParamsVersion);
  w.u16(static_cast<std::uint16_t>(p.shape.size));
  w.u16(static_cast<std::uint16_t>(p.shape.channels));
  for (int t = 0; t < kNumTensors; ++t) w.tensor(tensor_dims(p.shape, static_cast<Tensor>(t)), p.tensor(static_cast<Tensor>(t)));
  const std::array<float, 5> hyper = {p.hyper.learning_rate, p.hyper.momentum, p.hyper.l2, p.hyper.epochs,
                                      p.hyper.batch_size};
  w.tensor({5}, hyper);
  return w.bytes();
}

inline NetworkParams deserialize_params(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || bytes.substr(0, 4) != "GPNW") throw ParamsError(ParamsError::Kind::BadMagic, "not a parameter file");
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint16_t version = r.u16();
  if (version != kParamsVersion) {
    throw ParamsError(ParamsError::Kind::BadVersion, "unsupported parameter file version " + std::to_string(version));
  }
  NetworkShape shape;
  shape.size = r.u16();
  shape.channels = r.u16();
  if (shape.size < 2 || shape.size > kMaxBoardSize || shape.channels < 1) {
    throw ParamsError(ParamsError::Kind::ShapeMismatch, "bad shape header");
  }
  std::vector<std::vector<std::uint32_t>> dims;
  std::vector<std::vector<float>> data;
  for (int t = 0; t < kNumTensors; ++t) {
    dims.push_back(r.dims());
    if (t == static_cast<int>(Tensor::ValueFc1Weight) && !dims.back().empty()) {
      shape.value_hidden = static_cast<int>(dims.back()[0]);
    }
    const auto n = element_count(dims.back());
    if (n > bytes.size()) throw ParamsError(ParamsError::Kind::Truncated, "parameter file truncated");
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32();
    data.push_back(std::move(values));
  }
  if (shape.value_hidden < 1) throw ParamsError(ParamsError::Kind::ShapeMismatch, "bad value head");
  NetworkParams p = NetworkParams::zeros(shape);
  for (int t = 0; t < kNumTensors; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    if (dims[ut] != tensor_dims(shape, static_cast<Tensor>(t))) {
      throw ParamsError(ParamsError::Kind::ShapeMismatch,
                        std::string("tensor ") + kTensorNames[ut] + " does not match the shape header");
    }
    std::copy(data[ut].begin(), data[ut].end(), p.tensor(static_cast<Tensor>(t)).begin());
  }
  if (r.dims() != std::vector<std::uint32_t>{5}) {
    throw ParamsError(ParamsError::Kind::ShapeMismatch, "bad hyperparameter record");
  }
  p.hyper.learning_rate = r.f32();
  p.hyper.momentum = r.f32();
  p.hyper.l2 = r.f32();
  p.hyper.epochs = r.f32();
  p.hyper.batch_size = r.f32();
  if (!r.at_end()) throw ParamsError(ParamsError::Kind::ShapeMismatch, "trailing bytes after parameters");
  return p;
}

inline void save_params(const NetworkParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParamsError(ParamsError::Kind::Io, "cannot write " + path.string());
  const std::string bytes = serialize_params(p);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParamsError(ParamsError::Kind::Io, "write failed: " + path.string());
}

inline NetworkParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParamsError(ParamsError::Kind::Io, "cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

// As load_params, but the file must match `expected`.
inline NetworkParams load_params(const std::filesystem::path& path, const NetworkShape& expected) {
  NetworkParams p = load_params(path);
  if (p.shape.size != expected.size || p.shape.channels != expected.channels) {
    throw ParamsError(ParamsError::Kind::ShapeMismatch,
                      "parameter file is for size " + std::to_string(p.shape.size) + " with " +
                          std::to_string(p.shape.channels) + " channels");
  }
  return p;
}

}  // namespace gopoison
