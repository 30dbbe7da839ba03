#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qsuggest/tape.hpp"

namespace qsuggest {

// Recurrent weights initialize uniform(-0.08, 0.08); biases start at zero
// except the forget gate, which gets +1.
inline constexpr double kWeightInitRange = 0.08;
inline constexpr double kForgetBiasInit = 1.0;

template <typename Real>
struct LstmCell {
  int input_dim = 0;
  int hidden = 0;
  Param<Real> w_input;   // [4H x input_dim]
  Param<Real> w_hidden;  // [4H x H]
  Param<Real> bias;      // [4H], gate order: input, forget, output, candidate

  LstmCell() = default;

  LstmCell(const std::string& name, int input_dim_, int hidden_, Rng& rng)
      : input_dim(input_dim_), hidden(hidden_) {
    w_input = Param<Real>(name + ".w_input", Tensor<Real>::matrix(4 * hidden, input_dim));
    w_hidden = Param<Real>(name + ".w_hidden", Tensor<Real>::matrix(4 * hidden, hidden));
    bias = Param<Real>(name + ".bias", Tensor<Real>::vec(4 * hidden));
    w_input.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    w_hidden.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    for (int i = hidden; i < 2 * hidden; ++i)
      bias.value.values[static_cast<size_t>(i)] = Real(kForgetBiasInit);
  }

  // One cell step: gates via logistic sigmoid, candidate via tanh,
  // c = f.*c_prev + i.*g, h = o.*tanh(c).
  std::pair<Var, Var> step(Tape<Real>& t, Var x, Var h_prev, Var c_prev) const {
    if (t.value(x).numel() != input_dim || t.value(h_prev).numel() != hidden ||
        t.value(c_prev).numel() != hidden)
      throw DataError("lstm step dimension mismatch");
    Var z = t.add(t.add(t.matvec(t.param(w_input), x), t.matvec(t.param(w_hidden), h_prev)),
                  t.param(bias));
    Var gate_i = t.sigmoid(t.slice(z, 0, hidden));
    Var gate_f = t.sigmoid(t.slice(z, hidden, hidden));
    Var gate_o = t.sigmoid(t.slice(z, 2 * hidden, hidden));
    Var cand = t.tanh_(t.slice(z, 3 * hidden, hidden));
    Var c = t.add(t.mul(gate_f, c_prev), t.mul(gate_i, cand));
    Var h = t.mul(gate_o, t.tanh_(c));
    return {h, c};
  }

  Var zero_state(Tape<Real>& t) const { return t.constant(Tensor<Real>::vec(hidden)); }

  void collect(std::vector<Param<Real>*>& out) {
    out.push_back(&w_input);
    out.push_back(&w_hidden);
    out.push_back(&bias);
  }
};

// One bidirectional layer: a forward and a backward cell over the sequence,
// outputs concat(h_fwd_t, h_bwd_t) of width 2H per step.
template <typename Real>
struct BiLstmLayer {
  LstmCell<Real> fwd;
  LstmCell<Real> bwd;

  BiLstmLayer() = default;
  BiLstmLayer(const std::string& name, int input_dim, int hidden, Rng& rng)
      : fwd(name + ".fwd", input_dim, hidden, rng), bwd(name + ".bwd", input_dim, hidden, rng) {}

  std::vector<Var> encode(Tape<Real>& t, const std::vector<Var>& xs) const {
    if (xs.empty()) throw DataError("bilstm encode of empty sequence");
    size_t n = xs.size();
    std::vector<Var> fh(n), bh(n);
    Var h = fwd.zero_state(t), c = fwd.zero_state(t);
    for (size_t i = 0; i < n; ++i) {
      auto [nh, nc] = fwd.step(t, xs[i], h, c);
      h = nh;
      c = nc;
      fh[i] = nh;
    }
    h = bwd.zero_state(t);
    c = bwd.zero_state(t);
    for (size_t i = n; i-- > 0;) {
      auto [nh, nc] = bwd.step(t, xs[i], h, c);
      h = nh;
      c = nc;
      bh[i] = nh;
    }
    std::vector<Var> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = t.concat(fh[i], bh[i]);
    return out;
  }

  // Final computed state of each direction: concat(h_fwd_last, h_bwd_first).
  Var final_state(Tape<Real>& t, const std::vector<Var>& xs) const {
    if (xs.empty()) throw DataError("bilstm encode of empty sequence");
    size_t n = xs.size();
    Var h = fwd.zero_state(t), c = fwd.zero_state(t);
    for (size_t i = 0; i < n; ++i) {
      auto [nh, nc] = fwd.step(t, xs[i], h, c);
      h = nh;
      c = nc;
    }
    Var fwd_final = h;
    h = bwd.zero_state(t);
    c = bwd.zero_state(t);
    for (size_t i = n; i-- > 0;) {
      auto [nh, nc] = bwd.step(t, xs[i], h, c);
      h = nh;
      c = nc;
    }
    return t.concat(fwd_final, h);
  }

  void collect(std::vector<Param<Real>*>& out) {
    fwd.collect(out);
    bwd.collect(out);
  }
};

// Stacked bidirectional encoder; layer l>0 consumes the 2H-wide outputs of
// layer l-1.
template <typename Real>
struct BiLstmStack {
  std::vector<BiLstmLayer<Real>> layers;

  BiLstmStack() = default;
  BiLstmStack(const std::string& name, int input_dim, int hidden, int num_layers, Rng& rng) {
    layers.reserve(static_cast<size_t>(num_layers));
    for (int l = 0; l < num_layers; ++l) {
      int in = l == 0 ? input_dim : 2 * hidden;
      layers.emplace_back(name + ".l" + std::to_string(l), in, hidden, rng);
    }
  }

  std::vector<Var> encode(Tape<Real>& t, std::vector<Var> xs) const {
    for (const auto& layer : layers) xs = layer.encode(t, xs);
    return xs;
  }

  // Runs all but the last layer with encode(), then takes the last layer's
  // per-direction final states.
  Var final_state(Tape<Real>& t, std::vector<Var> xs) const {
    for (size_t l = 0; l + 1 < layers.size(); ++l) xs = layers[l].encode(t, xs);
    return layers.back().final_state(t, xs);
  }

  void collect(std::vector<Param<Real>*>& out) {
    for (auto& layer : layers) layer.collect(out);
  }
};

// Alignment-model attention: score_t = v . tanh(Wq q + Wm m_t), weights are
// the softmax over scores, context is the weight-averaged memory.
template <typename Real>
struct AdditiveAttention {
  int attn_dim = 0;
  Param<Real> w_query;
  Param<Real> w_memory;
  Param<Real> v;

  AdditiveAttention() = default;
  AdditiveAttention(const std::string& name, int query_dim, int memory_dim, int attn_dim_,
                    Rng& rng)
      : attn_dim(attn_dim_) {
    w_query = Param<Real>(name + ".w_query", Tensor<Real>::matrix(attn_dim, query_dim));
    w_memory = Param<Real>(name + ".w_memory", Tensor<Real>::matrix(attn_dim, memory_dim));
    v = Param<Real>(name + ".v", Tensor<Real>::vec(attn_dim));
    w_query.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    w_memory.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    v.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
  }

  struct Prepared {
    std::vector<Var> keys;    // Wm m_t, computed once per memory
    std::vector<Var> states;  // the memory itself
  };

  Prepared prepare(Tape<Real>& t, const std::vector<Var>& memory) const {
    if (memory.empty()) throw DataError("attention over empty encoder states");
    Prepared prep;
    prep.states = memory;
    prep.keys.reserve(memory.size());
    Var wm = t.param(w_memory);
    for (Var m : memory) prep.keys.push_back(t.matvec(wm, m));
    return prep;
  }

  // Returns (context, weights); weights form a probability distribution.
  std::pair<Var, Var> attend(Tape<Real>& t, Var query, const Prepared& prep) const {
    Var wq = t.matvec(t.param(w_query), query);
    Var vv = t.param(v);
    std::vector<Var> scores;
    scores.reserve(prep.keys.size());
    for (Var key : prep.keys) scores.push_back(t.dot(vv, t.tanh_(t.add(wq, key))));
    Var weights = t.softmax(t.stack(scores));
    Var context;
    for (size_t i = 0; i < prep.states.size(); ++i) {
      Var wi = t.slice(weights, static_cast<int>(i), 1);
      Var term = t.scale(prep.states[i], wi);
      context = i == 0 ? term : t.add(context, term);
    }
    return {context, weights};
  }

  void collect(std::vector<Param<Real>*>& out) {
    out.push_back(&w_query);
    out.push_back(&w_memory);
    out.push_back(&v);
  }
};

}  // namespace qsuggest
