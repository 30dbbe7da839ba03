#pragma once

#include <array>
#include <string>
#include <vector>

#include "qsuggest/generator.hpp"
#include "qsuggest/lstm.hpp"
#include "qsuggest/optim.hpp"
#include "qsuggest/vocab.hpp"

namespace qsuggest {

// One estimator training example: context query, candidate query, and the
// natural(1)/unnatural(0) label. The <SEP> marker sits between the two parts
// when the sequence is composed.
struct LabeledExample {
  std::vector<int> context;
  std::vector<int> candidate;
  int label = 0;
};

// Contextual naturalness classifier: own embedding table, a two-layer
// bidirectional LSTM encoder over (context <SEP> candidate), and a logistic
// head on the final time-step hidden state of each direction.
template <typename Real>
class EstimatorModel {
 public:
  static constexpr int kLayers = 2;

  ModelDims dims;  // layers is fixed at kLayers
  Param<Real> embedding;
  BiLstmStack<Real> encoder;
  Param<Real> head_w;  // [2H]
  Param<Real> head_b;  // [1]

  EstimatorModel() = default;

  EstimatorModel(int vocab, int emb_dim, int hidden, uint64_t seed) {
    if (vocab <= Vocabulary::kNumReserved || emb_dim < 1 || hidden < 1)
      throw ConfigError("bad estimator dimensions");
    dims = ModelDims{vocab, emb_dim, hidden, kLayers, 0};
    Rng rng(derive_seed(seed, 0xe57));
    embedding = Param<Real>("est.embedding", Tensor<Real>::matrix(vocab, emb_dim));
    embedding.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    encoder = BiLstmStack<Real>("est.enc", emb_dim, hidden, kLayers, rng);
    head_w = Param<Real>("est.head.w", Tensor<Real>::vec(2 * hidden));
    head_w.value.fill_uniform(rng, Real(-kWeightInitRange), Real(kWeightInitRange));
    head_b = Param<Real>("est.head.b", Tensor<Real>::vec(1));
  }

  std::vector<Param<Real>*> params() {
    std::vector<Param<Real>*> out;
    out.push_back(&embedding);
    encoder.collect(out);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
  }

  // context <SEP> candidate, with trailing <PAD> stripped from both parts so
  // padding cannot change the score.
  static std::vector<int> compose(const std::vector<int>& context,
                                  const std::vector<int>& candidate) {
    auto strip = [](const std::vector<int>& v) {
      size_t n = v.size();
      while (n > 0 && v[n - 1] == Vocabulary::kPad) --n;
      return std::vector<int>(v.begin(), v.begin() + static_cast<long>(n));
    };
    std::vector<int> ctx = strip(context);
    std::vector<int> cand = strip(candidate);
    if (cand.empty()) throw DataError("estimator candidate is empty");
    if (ctx.empty()) throw DataError("estimator context is empty");
    std::vector<int> ids;
    ids.reserve(ctx.size() + cand.size() + 1);
    ids.insert(ids.end(), ctx.begin(), ctx.end());
    ids.push_back(Vocabulary::kSep);
    ids.insert(ids.end(), cand.begin(), cand.end());
    return ids;
  }

  // Scalar pre-sigmoid score.
  Var logit(Tape<Real>& t, const std::vector<int>& ids, Real dropout_rate = 0, Rng* rng = nullptr,
            bool training = false) const {
    std::vector<Var> xs;
    xs.reserve(ids.size());
    for (int id : ids) {
      if (id < 0 || id >= dims.vocab) throw DataError("estimator token id out of range");
      Var e = t.row(t.param(embedding), id);
      if (training && dropout_rate > 0 && rng != nullptr)
        e = t.dropout(e, dropout_rate, *rng, true);
      xs.push_back(e);
    }
    Var final = encoder.final_state(t, xs);
    return t.add(t.dot(t.param(head_w), final), t.param(head_b));
  }

  // Binary cross entropy via two-class softmax on [logit, 0]; class 0 is
  // "natural", so p(natural) = sigmoid(logit).
  Var bce_loss(Tape<Real>& t, const LabeledExample& ex, Real dropout_rate = 0, Rng* rng = nullptr,
               bool training = false) const {
    Var z = logit(t, compose(ex.context, ex.candidate), dropout_rate, rng, training);
    Var logits = t.concat(z, t.constant(Tensor<Real>::vec(1)));
    return t.softmax_cross_entropy(logits, ex.label == 1 ? 0 : 1);
  }

  // D_phi in [0,1]: the probability the candidate is a query a real user
  // would enter after the context query. Deterministic.
  double naturalness(const std::vector<int>& context, const std::vector<int>& candidate) const {
    Tape<Real> t;
    Var z = logit(t, compose(context, candidate));
    double zv = static_cast<double>(t.value(z).values[0]);
    return 1.0 / (1.0 + std::exp(-zv));
  }
};

// The four negative-generation methods, one example each, label 0:
//   1. a decoder sample for the same context (hard negative),
//   2. the true next query with one word duplicated at a random position,
//   3. the true next query with one position replaced by <UNK>,
//   4. one prior-sampled word repeated r times, r uniform in [1, T-1].
// A negative that collides with the true next query is regenerated.
template <typename Real>
std::array<LabeledExample, 4> gen_negatives(const EncodedPair& pair,
                                            const GeneratorPolicy<Real>& policy,
                                            const Vocabulary& vocab, int t_max, Rng& rng) {
  std::vector<int> truth(pair.tgt.begin(), pair.tgt.end() - 1);  // strip <END>
  if (truth.empty()) throw DataError("cannot generate negatives for an empty next query");
  size_t n = truth.size();

  auto duplicate_word = [&rng](const std::vector<int>& base) {
    size_t word = rng.index(base.size());
    size_t pos = rng.index(base.size() + 1);
    std::vector<int> out = base;
    out.insert(out.begin() + static_cast<long>(pos), base[word]);
    return out;
  };

  std::array<LabeledExample, 4> out;
  for (auto& ex : out) {
    ex.context = pair.src;
    ex.label = 0;
  }

  // Method 1: categorical sample from the pre-trained decoder, temperature 1.
  {
    std::vector<int> cand;
    for (int attempt = 0; attempt < 16; ++attempt) {
      auto hyp = policy.sample_categorical(pair.src, 1, t_max, 1.0, rng.next());
      cand = hyp[0].content();
      if (!cand.empty() && cand != truth) break;
      cand.clear();
    }
    if (cand.empty()) cand = duplicate_word(truth);
    out[0].candidate = std::move(cand);
  }

  // Method 2: duplicate a word at a random position. The length changes, so
  // it can never collide with the truth.
  out[1].candidate = duplicate_word(truth);

  // Method 3: replace one position with <UNK>.
  {
    std::vector<int> cand;
    size_t first = rng.index(n);
    for (size_t off = 0; off < n; ++off) {
      size_t pos = (first + off) % n;
      if (truth[pos] == Vocabulary::kUnk) continue;  // would reproduce the truth
      cand = truth;
      cand[pos] = Vocabulary::kUnk;
      break;
    }
    if (cand.empty()) cand = duplicate_word(truth);  // truth was all <UNK>
    out[2].candidate = std::move(cand);
  }

  // Method 4: repeat one prior-sampled word r times (popularity bias).
  {
    std::vector<int> cand;
    for (int attempt = 0; attempt < 16; ++attempt) {
      int word = vocab.sample_prior(rng);
      int reps = rng.uniform_int(1, std::max(1, t_max - 1));
      cand.assign(static_cast<size_t>(reps), word);
      if (cand != truth) break;
      cand.clear();
    }
    if (cand.empty()) cand = duplicate_word(truth);
    out[3].candidate = std::move(cand);
  }
  return out;
}

// One positive plus its four negatives per pair: a fixed 4:1 ratio.
template <typename Real>
std::vector<LabeledExample> build_estimator_examples(const std::vector<EncodedPair>& pairs,
                                                     const GeneratorPolicy<Real>& policy,
                                                     const Vocabulary& vocab, int t_max,
                                                     uint64_t seed) {
  std::vector<LabeledExample> out;
  out.reserve(pairs.size() * 5);
  for (size_t i = 0; i < pairs.size(); ++i) {
    const EncodedPair& p = pairs[i];
    LabeledExample pos;
    pos.context = p.src;
    pos.candidate = std::vector<int>(p.tgt.begin(), p.tgt.end() - 1);
    pos.label = 1;
    out.push_back(std::move(pos));
    Rng rng(derive_seed(seed, 0x4e6, i));
    for (auto& neg : gen_negatives(p, policy, vocab, t_max, rng)) out.push_back(std::move(neg));
  }
  return out;
}

struct ClassifierScores {
  double accuracy = 0;
  double f1 = 0;
};

template <typename Real>
ClassifierScores evaluate_estimator(const EstimatorModel<Real>& model,
                                    const std::vector<LabeledExample>& examples) {
  if (examples.empty()) throw DataError("cannot evaluate on zero examples");
  int64_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (const auto& ex : examples) {
    double p = model.naturalness(ex.context, ex.candidate);
    int pred = p >= 0.5 ? 1 : 0;
    if (pred == ex.label) ++correct;
    if (pred == 1 && ex.label == 1) ++tp;
    if (pred == 1 && ex.label == 0) ++fp;
    if (pred == 0 && ex.label == 1) ++fn;
  }
  ClassifierScores s;
  s.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  double denom = static_cast<double>(2 * tp + fp + fn);
  s.f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  return s;
}

template <typename Real>
struct EstimatorTrainConfig {
  int epochs = 5;
  int batch = 64;
  Real lr = Real(1e-3);
  Real dropout = Real(0);
  uint64_t seed = 2;
};

struct EstimatorTrainResult {
  std::vector<ClassifierScores> history;  // per-epoch validation scores
  ClassifierScores best;
  int best_epoch = -1;
};

// Binary cross-entropy training; keeps and restores the epoch checkpoint
// with the best validation F1. Single-class training data is an error.
template <typename Real>
EstimatorTrainResult train_estimator(EstimatorModel<Real>& model,
                                     const std::vector<LabeledExample>& train,
                                     const std::vector<LabeledExample>& valid,
                                     const EstimatorTrainConfig<Real>& cfg) {
  if (train.empty()) throw DataError("estimator training set is empty");
  bool has_pos = false, has_neg = false;
  for (const auto& ex : train) (ex.label == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw DataError("estimator training data contains a single class");

  auto params = model.params();
  AdamOptimizer<Real> opt(cfg.lr);
  EstimatorTrainResult result;
  double best_f1 = -1;
  std::vector<Tensor<Real>> best_params;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  int64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe57e9, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      zero_grads(params);
      Rng dropout_rng(derive_seed(cfg.seed, 0xd509, static_cast<uint64_t>(step)));
      for (size_t i = start; i < end; ++i) {
        Tape<Real> t;
        Var loss = model.bce_loss(t, train[order[i]], cfg.dropout, &dropout_rng, true);
        if (!std::isfinite(static_cast<double>(t.value(loss).values[0])))
          throw NumericError("non-finite estimator loss");
        t.backward(loss);
      }
      scale_grads(params, Real(1) / static_cast<Real>(end - start));
      opt.step(params);
      ++step;
    }
    ClassifierScores scores = evaluate_estimator(model, valid);
    result.history.push_back(scores);
    if (scores.f1 > best_f1) {
      best_f1 = scores.f1;
      result.best = scores;
      result.best_epoch = epoch;
      best_params.clear();
      for (auto* p : params) best_params.push_back(p->value);
    }
  }
  if (!best_params.empty())
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  return result;
}

// Labeled-example file: context \t candidate \t label.
void write_examples(const std::string& path, const std::vector<LabeledExample>& examples,
                    const Vocabulary& vocab);

}  // namespace qsuggest
