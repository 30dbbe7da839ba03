#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qsuggest/checkpoint.hpp"
#include "qsuggest/corpus.hpp"
#include "qsuggest/lstm.hpp"
#include "qsuggest/optim.hpp"
#include "qsuggest/tape.hpp"
#include "qsuggest/vocab.hpp"

namespace qsuggest {

struct ModelDims {
  int vocab = 0;
  int embedding = 0;
  int hidden = 0;
  int layers = 1;
  int t_max = 8;
};

// A query pair encoded for training: source ids (no terminator), target ids
// (with <END>), the session feedback label, and the normalized texts for
// feedback-index lookups.
struct EncodedPair {
  std::vector<int> src;
  std::vector<int> tgt;
  int u_plus = 0;
  std::string src_text;
  std::string next_text;
};

inline std::vector<EncodedPair> encode_pairs(const std::vector<QueryPair>& pairs,
                                             const Vocabulary& vocab, int t_max) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    EncodedPair e;
    e.src = vocab.encode(p.q_src, t_max, /*append_end=*/false);
    e.tgt = vocab.encode(p.q_next, t_max, /*append_end=*/true);
    e.u_plus = p.u_plus;
    e.src_text = vocab.decode(e.src);
    std::vector<int> content(e.tgt.begin(), e.tgt.end() - 1);
    e.next_text = vocab.decode(content);
    out.push_back(std::move(e));
  }
  return out;
}

// A partial or complete decoded sequence. tokens includes the terminal <END>
// when the sequence finished naturally; content() strips it.
struct Hypothesis {
  std::vector<int> tokens;
  double log_prob = 0;
  bool finished = false;

  std::vector<int> content() const {
    if (!tokens.empty() && tokens.back() == Vocabulary::kEnd)
      return std::vector<int>(tokens.begin(), tokens.end() - 1);
    return tokens;
  }
};

enum class DecodeStrategy { kBeam, kCategorical };

inline DecodeStrategy parse_strategy(const std::string& s) {
  if (s == "beam") return DecodeStrategy::kBeam;
  if (s == "categorical") return DecodeStrategy::kCategorical;
  throw ConfigError("unknown sampling strategy: " + s);
}

struct DecodingConfig {
  DecodeStrategy strategy = DecodeStrategy::kBeam;
  int k = 1;            // beam width or sample count
  int t_max = 8;        // maximum emissions per sequence
  double temperature = 1.0;
  uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ConfigError("decoding k must be >= 1");
    if (t_max < 1) throw ConfigError("decoding t_max must be >= 1");
    if (temperature <= 0) throw ConfigError("temperature must be > 0");
  }
};

// Instrumentation for the decoding contracts: counts decoder-cell
// invocations and records the token fed at each step.
struct DecodeInstr {
  uint64_t decoder_steps = 0;
  std::vector<int> fed_tokens;
};

template <typename Real>
std::vector<double> log_softmax_values(const std::vector<Real>& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Real v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0;
  for (Real v : logits) sum += std::exp(static_cast<double>(v) - mx);
  double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

// The generator policy: BiLSTM encoder, alignment-model attention, LSTM
// decoder whose input is the previous token embedding concatenated with the
// attention context, and a vocabulary projection. The decoder never emits
// <PAD>/<START>/<SEP>; those logits are masked, so the output distribution
// is normalized over words, <UNK> and <END>.
template <typename Real>
class GeneratorPolicy {
 public:
  ModelDims dims;
  Param<Real> embedding;
  BiLstmStack<Real> encoder;
  std::vector<Param<Real>> bridge_w;  // per decoder layer, [H x 2H]
  std::vector<Param<Real>> bridge_b;  // per decoder layer, [H]
  std::vector<LstmCell<Real>> decoder;
  AdditiveAttention<Real> attention;
  Param<Real> w_out;  // [V x H]
  Param<Real> b_out;  // [V]

  GeneratorPolicy() = default;

  GeneratorPolicy(const ModelDims& d, uint64_t seed) : dims(d) {
    if (d.vocab <= Vocabulary::kNumReserved || d.embedding < 1 || d.hidden < 1 || d.layers < 1 ||
        d.t_max < 1)
      throw ConfigError("bad generator dimensions");
    Rng rng(derive_seed(seed, 0x6e0));
    auto uniform = [&rng](Param<Real>& p) {
      p.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    };
    embedding = Param<Real>("gen.embedding", Tensor<Real>::matrix(d.vocab, d.embedding));
    uniform(embedding);
    encoder = BiLstmStack<Real>("gen.enc", d.embedding, d.hidden, d.layers, rng);
    for (int l = 0; l < d.layers; ++l) {
      bridge_w.emplace_back("gen.bridge.w" + std::to_string(l),
                            Tensor<Real>::matrix(d.hidden, 2 * d.hidden));
      uniform(bridge_w.back());
      bridge_b.emplace_back("gen.bridge.b" + std::to_string(l), Tensor<Real>::vec(d.hidden));
      int in = l == 0 ? d.embedding + 2 * d.hidden : d.hidden;
      decoder.emplace_back("gen.dec.l" + std::to_string(l), in, d.hidden, rng);
    }
    attention = AdditiveAttention<Real>("gen.attn", d.hidden, 2 * d.hidden, d.hidden, rng);
    w_out = Param<Real>("gen.out.w", Tensor<Real>::matrix(d.vocab, d.hidden));
    uniform(w_out);
    b_out = Param<Real>("gen.out.b", Tensor<Real>::vec(d.vocab));
  }

  std::vector<Param<Real>*> params() {
    std::vector<Param<Real>*> out;
    out.push_back(&embedding);
    encoder.collect(out);
    for (size_t l = 0; l < bridge_w.size(); ++l) {
      out.push_back(&bridge_w[l]);
      out.push_back(&bridge_b[l]);
    }
    for (auto& cell : decoder) cell.collect(out);
    attention.collect(out);
    out.push_back(&w_out);
    out.push_back(&b_out);
    return out;
  }

  std::vector<const Param<Real>*> params() const {
    auto mut = const_cast<GeneratorPolicy*>(this)->params();
    return std::vector<const Param<Real>*>(mut.begin(), mut.end());
  }

  // Copies parameter values from another policy of identical shape (the
  // beta <- theta sync).
  void copy_values_from(const GeneratorPolicy& other) {
    auto dst = params();
    auto src = other.params();
    if (dst.size() != src.size()) throw DataError("policy parameter count mismatch");
    for (size_t i = 0; i < dst.size(); ++i) {
      if (!dst[i]->value.same_shape(src[i]->value))
        throw DataError("policy parameter shape mismatch: " + dst[i]->name);
      dst[i]->value.values = src[i]->value.values;
    }
  }

  struct EncodeContext {
    std::vector<Var> enc_states;
    typename AdditiveAttention<Real>::Prepared attn;
    std::vector<std::pair<Var, Var>> init_state;
    Var logit_mask;
  };

  struct DecoderState {
    std::vector<std::pair<Var, Var>> layers;
  };

  EncodeContext encode(Tape<Real>& t, const std::vector<int>& src_ids, Real dropout_rate = 0,
                       Rng* rng = nullptr, bool training = false) const {
    if (src_ids.empty()) throw DataError("cannot encode an empty source query");
    EncodeContext ctx;
    std::vector<Var> xs;
    xs.reserve(src_ids.size());
    for (int id : src_ids) {
      if (id < 0 || id >= dims.vocab) throw DataError("source token id out of range");
      Var e = t.row(t.param(embedding), id);
      if (training && dropout_rate > 0 && rng != nullptr)
        e = t.dropout(e, dropout_rate, *rng, true);
      xs.push_back(e);
    }
    ctx.enc_states = encoder.encode(t, xs);
    ctx.attn = attention.prepare(t, ctx.enc_states);
    // Bridge: summary = concat(final fwd state, final bwd state).
    Var summary = t.concat(t.slice(ctx.enc_states.back(), 0, dims.hidden),
                           t.slice(ctx.enc_states.front(), dims.hidden, dims.hidden));
    for (int l = 0; l < dims.layers; ++l) {
      Var h0 = t.tanh_(t.add(t.matvec(t.param(bridge_w[static_cast<size_t>(l)]), summary),
                             t.param(bridge_b[static_cast<size_t>(l)])));
      Var c0 = t.constant(Tensor<Real>::vec(dims.hidden));
      ctx.init_state.emplace_back(h0, c0);
    }
    Tensor<Real> mask = Tensor<Real>::vec(dims.vocab);
    mask.values[Vocabulary::kPad] = Real(-1e9);
    mask.values[Vocabulary::kStart] = Real(-1e9);
    mask.values[Vocabulary::kSep] = Real(-1e9);
    ctx.logit_mask = t.constant(std::move(mask));
    return ctx;
  }

  DecoderState initial_state(const EncodeContext& ctx) const {
    DecoderState s;
    s.layers = ctx.init_state;
    return s;
  }

  // One decoder step: feeds prev_token (the word generated or forced at the
  // previous step), attends with the current top-layer state, advances all
  // layers, and returns masked logits for the next emission.
  Var decode_step(Tape<Real>& t, const EncodeContext& ctx, int prev_token, DecoderState& state,
                  Real dropout_rate = 0, Rng* rng = nullptr, bool training = false,
                  DecodeInstr* instr = nullptr) const {
    if (prev_token < 0 || prev_token >= dims.vocab)
      throw DataError("decoder input token id out of range");
    if (instr != nullptr) {
      ++instr->decoder_steps;
      instr->fed_tokens.push_back(prev_token);
    }
    Var emb = t.row(t.param(embedding), prev_token);
    if (training && dropout_rate > 0 && rng != nullptr)
      emb = t.dropout(emb, dropout_rate, *rng, true);
    auto [context, weights] = attention.attend(t, state.layers.back().first, ctx.attn);
    (void)weights;
    Var x = t.concat(emb, context);
    for (size_t l = 0; l < state.layers.size(); ++l) {
      auto [h, c] = decoder[l].step(t, x, state.layers[l].first, state.layers[l].second);
      state.layers[l] = {h, c};
      x = h;
    }
    Var logits = t.add(t.matvec(t.param(w_out), x), t.param(b_out));
    return t.add(logits, ctx.logit_mask);
  }

  // Teacher-forced cross entropy over one pair; returns (summed loss, steps).
  std::pair<Var, int> teacher_forced_loss(Tape<Real>& t, const std::vector<int>& src,
                                          const std::vector<int>& tgt, Real dropout_rate = 0,
                                          Rng* rng = nullptr, bool training = false) const {
    if (tgt.empty()) throw DataError("empty target sequence");
    EncodeContext ctx = encode(t, src, dropout_rate, rng, training);
    DecoderState state = initial_state(ctx);
    Var total;
    int prev = Vocabulary::kStart;
    for (size_t i = 0; i < tgt.size(); ++i) {
      Var logits = decode_step(t, ctx, prev, state, dropout_rate, rng, training);
      Var ce = t.softmax_cross_entropy(logits, tgt[i]);
      total = i == 0 ? ce : t.add(total, ce);
      prev = tgt[i];
    }
    return {total, static_cast<int>(tgt.size())};
  }

  // log G(y | src): the summed per-step log-probability of y, differentiable
  // w.r.t. the parameters. y must end with <END> or have t_cap emissions.
  Var sequence_log_prob(Tape<Real>& t, const EncodeContext& ctx, const std::vector<int>& y,
                        int t_cap) const {
    if (y.empty()) throw DataError("cannot score an empty sequence");
    if (y.back() != Vocabulary::kEnd && static_cast<int>(y.size()) < t_cap)
      throw DataError("sequence must end with <END> or reach the length cap");
    DecoderState state = initial_state(ctx);
    Var total;
    int prev = Vocabulary::kStart;
    for (size_t i = 0; i < y.size(); ++i) {
      Var logits = decode_step(t, ctx, prev, state);
      Var ce = t.softmax_cross_entropy(logits, y[i]);
      total = i == 0 ? ce : t.add(total, ce);
      prev = y[i];
    }
    return t.scale_const(total, Real(-1));
  }

  Var sequence_log_prob(Tape<Real>& t, const std::vector<int>& src, const std::vector<int>& y,
                        int t_cap) const {
    EncodeContext ctx = encode(t, src);
    return sequence_log_prob(t, ctx, y, t_cap);
  }

  // Deterministic beam search. Finished hypotheses freeze and compete by
  // total log-probability (no length normalization); duplicates by content
  // merge keeping the best score; ties break toward the lexicographically
  // smaller token sequence. Returns up to `width` hypotheses, best first.
  std::vector<Hypothesis> beam_search(const std::vector<int>& src, int width, int t_cap,
                                      DecodeInstr* instr = nullptr) const {
    if (width < 1) throw ConfigError("beam width must be >= 1");
    if (t_cap < 1) throw ConfigError("beam t_max must be >= 1");
    Tape<Real> tape;
    EncodeContext ctx = encode(tape, src);

    struct Beam {
      std::vector<int> tokens;
      double log_prob = 0;
      bool finished = false;
      DecoderState state;
      int pending = Vocabulary::kStart;  // token to feed on the next step
    };
    auto lex_less = [](const Beam& a, const Beam& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.tokens < b.tokens;
    };

    std::vector<Beam> live;
    Beam root;
    root.state = initial_state(ctx);
    live.push_back(std::move(root));

    // Candidates stay lightweight (parent index + token) until pruned; only
    // the surviving width hypotheses materialize their token vectors.
    struct Cand {
      int parent;  // -1 marks a carried-over finished beam
      int token;
      double log_prob;
    };
    for (int step = 0; step < t_cap; ++step) {
      bool any_unfinished = false;
      std::vector<Cand> candidates;
      candidates.reserve(live.size() * 64);
      for (size_t b = 0; b < live.size(); ++b) {
        Beam& beam = live[b];
        if (beam.finished) {
          candidates.push_back({-1 - static_cast<int>(b), 0, beam.log_prob});
          continue;
        }
        any_unfinished = true;
        Var logits = decode_step(tape, ctx, beam.pending, beam.state, Real(0), nullptr, false,
                                 instr);
        auto lp = log_softmax_values(tape.value(logits).values);
        for (int tok = 0; tok < dims.vocab; ++tok) {
          if (tok == Vocabulary::kPad || tok == Vocabulary::kStart || tok == Vocabulary::kSep)
            continue;
          candidates.push_back({static_cast<int>(b), tok,
                                beam.log_prob + lp[static_cast<size_t>(tok)]});
        }
      }
      if (!any_unfinished) break;
      auto cand_tokens = [&](const Cand& cand) {
        if (cand.parent < 0) return live[static_cast<size_t>(-1 - cand.parent)].tokens;
        std::vector<int> toks = live[static_cast<size_t>(cand.parent)].tokens;
        toks.push_back(cand.token);
        return toks;
      };
      size_t keep = std::min(candidates.size(), static_cast<size_t>(width));
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep),
                        candidates.end(), [&](const Cand& a, const Cand& b) {
                          if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                          return cand_tokens(a) < cand_tokens(b);
                        });
      candidates.resize(keep);
      std::vector<Beam> next_live;
      next_live.reserve(keep);
      for (const Cand& cand : candidates) {
        if (cand.parent < 0) {
          next_live.push_back(std::move(live[static_cast<size_t>(-1 - cand.parent)]));
          continue;
        }
        Beam next;
        const Beam& parent = live[static_cast<size_t>(cand.parent)];
        next.tokens = parent.tokens;
        next.tokens.push_back(cand.token);
        next.log_prob = cand.log_prob;
        next.state = parent.state;
        if (cand.token == Vocabulary::kEnd) {
          next.finished = true;
        } else {
          next.pending = cand.token;
          next.finished = static_cast<int>(next.tokens.size()) >= t_cap;
        }
        next_live.push_back(std::move(next));
      }
      live = std::move(next_live);
    }
    (void)lex_less;

    // Merge hypotheses with identical content, keeping the best score.
    std::map<std::vector<int>, Hypothesis> merged;
    for (auto& beam : live) {
      Hypothesis h;
      h.tokens = beam.tokens;
      h.log_prob = beam.log_prob;
      h.finished = true;
      auto key = h.content();
      auto it = merged.find(key);
      if (it == merged.end() || h.log_prob > it->second.log_prob ||
          (h.log_prob == it->second.log_prob && h.tokens < it->second.tokens))
        merged[key] = std::move(h);
    }
    std::vector<Hypothesis> out;
    out.reserve(merged.size());
    for (auto& [key, h] : merged) out.push_back(std::move(h));
    std::sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.tokens < b.tokens;
    });
    if (static_cast<int>(out.size()) > width) out.resize(static_cast<size_t>(width));
    return out;
  }

  std::vector<Hypothesis> greedy(const std::vector<int>& src, int t_cap,
                                 DecodeInstr* instr = nullptr) const {
    return beam_search(src, 1, t_cap, instr);
  }

  // K independent draws from the per-step categorical distribution. Each
  // sample uses its own derived seed stream, so samples are reproducible
  // per (seed, k) and the generated word feeds back as the next input.
  std::vector<Hypothesis> sample_categorical(const std::vector<int>& src, int k, int t_cap,
                                             double temperature, uint64_t seed,
                                             DecodeInstr* instr = nullptr) const {
    if (k < 1) throw ConfigError("sample count must be >= 1");
    if (temperature <= 0) throw ConfigError("temperature must be > 0");
    Tape<Real> tape;
    EncodeContext ctx = encode(tape, src);
    std::vector<Hypothesis> out;
    out.reserve(static_cast<size_t>(k));
    for (int s = 0; s < k; ++s) {
      Rng rng(derive_seed(seed, 0xca7e6, static_cast<uint64_t>(s)));
      Hypothesis h;
      DecoderState state = initial_state(ctx);
      int prev = Vocabulary::kStart;
      for (int step = 0; step < t_cap; ++step) {
        Var logits = decode_step(tape, ctx, prev, state, Real(0), nullptr, false, instr);
        auto lp = log_softmax_values(tape.value(logits).values);
        // Temperature applies to log-probabilities, renormalized.
        std::vector<double> p(lp.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : lp) mx = std::max(mx, v / temperature);
        double sum = 0;
        for (size_t i = 0; i < lp.size(); ++i) {
          p[i] = std::exp(lp[i] / temperature - mx);
          sum += p[i];
        }
        double u = rng.uniform() * sum;
        double acc = 0;
        int chosen = Vocabulary::kEnd;
        for (size_t i = 0; i < p.size(); ++i) {
          acc += p[i];
          if (u < acc) {
            chosen = static_cast<int>(i);
            break;
          }
        }
        h.tokens.push_back(chosen);
        h.log_prob += lp[static_cast<size_t>(chosen)];
        if (chosen == Vocabulary::kEnd) break;
        prev = chosen;
      }
      h.finished = true;
      out.push_back(std::move(h));
    }
    return out;
  }

  std::vector<Hypothesis> decode(const std::vector<int>& src, const DecodingConfig& cfg,
                                 DecodeInstr* instr = nullptr) const {
    cfg.validate();
    if (cfg.strategy == DecodeStrategy::kBeam) return beam_search(src, cfg.k, cfg.t_max, instr);
    return sample_categorical(src, cfg.k, cfg.t_max, cfg.temperature, cfg.seed, instr);
  }
};

}  // namespace qsuggest
