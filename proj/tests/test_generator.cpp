#include <cmath>
#include <filesystem>
#include <functional>
#include <map>

#include "doctest.h"
#include "qsuggest/generator.hpp"
#include "qsuggest/model_io.hpp"
#include "qsuggest/pretrain.hpp"
#include "support/finite_diff.hpp"

using namespace qsuggest;
using qsuggest::testing::capture_grads;
using qsuggest::testing::check_gradients;

namespace {

struct Toy {
  Vocabulary vocab;
  GeneratorPolicy<double> policy;
  std::vector<EncodedPair> pairs;
};

Toy make_toy(uint64_t seed, int hidden = 4, int layers = 1) {
  Toy toy;
  toy.vocab = Vocabulary::build({"alpha beta gamma", "beta gamma alpha", "gamma alpha beta"}, 100);
  ModelDims dims{toy.vocab.size(), 3, hidden, layers, 4};
  toy.policy = GeneratorPolicy<double>(dims, seed);
  std::vector<QueryPair> raw{{"alpha beta", "beta gamma", 0},
                             {"beta", "gamma alpha", 1},
                             {"gamma alpha", "alpha", 0}};
  toy.pairs = encode_pairs(raw, toy.vocab, dims.t_max);
  return toy;
}

// Every sequence the masked decoder can emit: token runs ending at <END> or
// at the length cap.
std::vector<std::vector<int>> enumerate_sequences(int vocab_size, int t_cap) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void()> rec = [&]() {
    if (!cur.empty() &&
        (cur.back() == Vocabulary::kEnd || static_cast<int>(cur.size()) == t_cap)) {
      out.push_back(cur);
      return;
    }
    for (int id = 0; id < vocab_size; ++id) {
      if (id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kSep) continue;
      cur.push_back(id);
      rec();
      cur.pop_back();
    }
  };
  rec();
  return out;
}

double score_sequence(const GeneratorPolicy<double>& policy, const std::vector<int>& src,
                      const std::vector<int>& y, int t_cap) {
  Tape<double> t;
  Var lp = policy.sequence_log_prob(t, src, y, t_cap);
  return t.value(lp).values[0];
}

}  // namespace

TEST_CASE("sequence log prob basics") {
  Toy toy = make_toy(41);
  const auto& src = toy.pairs[0].src;

  // Length-1 sequence: the single-step log softmax value.
  {
    Tape<double> t;
    auto ctx = toy.policy.encode(t, src);
    auto state = toy.policy.initial_state(ctx);
    Var logits = toy.policy.decode_step(t, ctx, Vocabulary::kStart, state);
    auto lp = log_softmax_values(t.value(logits).values);
    double direct = score_sequence(toy.policy, src, {Vocabulary::kEnd}, 4);
    CHECK(direct == doctest::Approx(lp[Vocabulary::kEnd]).epsilon(1e-12));
  }

  // Matches an independent step-by-step replay.
  {
    std::vector<int> y{toy.vocab.id_of("beta"), toy.vocab.id_of("gamma"), Vocabulary::kEnd};
    double total = 0;
    Tape<double> t;
    auto ctx = toy.policy.encode(t, src);
    auto state = toy.policy.initial_state(ctx);
    int prev = Vocabulary::kStart;
    for (int tok : y) {
      Var logits = toy.policy.decode_step(t, ctx, prev, state);
      total += log_softmax_values(t.value(logits).values)[static_cast<size_t>(tok)];
      prev = tok;
    }
    CHECK(score_sequence(toy.policy, src, y, 4) == doctest::Approx(total).epsilon(1e-12));
  }

  // Empty sequence is an error; unterminated short sequences are errors.
  {
    Tape<double> t;
    auto ctx = toy.policy.encode(t, src);
    CHECK_THROWS_AS(toy.policy.sequence_log_prob(t, ctx, {}, 4), DataError);
    CHECK_THROWS_AS(toy.policy.sequence_log_prob(t, ctx, {toy.vocab.id_of("beta")}, 4),
                    DataError);
  }
}

TEST_CASE("probability conservation: exp(log prob) over all sequences sums to 1") {
  Toy toy = make_toy(43);
  const auto& src = toy.pairs[1].src;
  auto seqs = enumerate_sequences(toy.vocab.size(), 2);
  // 3 real tokens + <UNK> + <END>: 1 + 4*5 sequences at t_cap 2.
  CHECK(seqs.size() == 21);
  double sum = 0;
  for (const auto& y : seqs) sum += std::exp(score_sequence(toy.policy, src, y, 2));
  CHECK(sum <= 1.0 + 1e-6);
  CHECK(sum >= 1.0 - 1e-6);  // masking renormalizes exactly
}

TEST_CASE("beam search matches exhaustive enumeration on the toy policy") {
  Toy toy = make_toy(47);
  const auto& src = toy.pairs[2].src;
  int t_cap = 2;

  auto seqs = enumerate_sequences(toy.vocab.size(), t_cap);
  struct Scored {
    std::vector<int> y;
    double lp;
  };
  std::vector<Scored> brute;
  for (const auto& y : seqs) brute.push_back({y, score_sequence(toy.policy, src, y, t_cap)});
  // Merge by content the way the beam reports hypotheses.
  std::map<std::vector<int>, Scored> merged;
  for (auto& s : brute) {
    std::vector<int> content = s.y;
    if (!content.empty() && content.back() == Vocabulary::kEnd) content.pop_back();
    auto it = merged.find(content);
    if (it == merged.end() || s.lp > it->second.lp) merged[content] = s;
  }
  std::vector<Scored> ranked;
  for (auto& [c, s] : merged) ranked.push_back(s);
  std::sort(ranked.begin(), ranked.end(), [](const Scored& a, const Scored& b) {
    if (a.lp != b.lp) return a.lp > b.lp;
    return a.y < b.y;
  });

  // Width covering every live hypothesis makes beam search exhaustive.
  auto beams = toy.policy.beam_search(src, 32, t_cap);
  REQUIRE(beams.size() == merged.size());
  for (size_t i = 0; i < beams.size(); ++i) {
    CHECK(beams[i].tokens == ranked[i].y);
    CHECK(beams[i].log_prob == doctest::Approx(ranked[i].lp).epsilon(1e-9));
  }

  // Narrow beams return the enumeration's top-2 when the probabilities are
  // separated enough for greedy prefixes to dominate (verified in-test).
  double gap = ranked[0].lp - ranked[2].lp;
  if (gap > 0.05) {
    auto top2 = toy.policy.beam_search(src, 2, t_cap);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].tokens == ranked[0].y);
    CHECK(top2[1].tokens == ranked[1].y);
  }

  // Scores are non-increasing in rank; every hypothesis ends with <END> or
  // has exactly t_cap tokens.
  for (size_t i = 0; i + 1 < beams.size(); ++i) CHECK(beams[i].log_prob >= beams[i + 1].log_prob);
  for (const auto& h : beams) {
    CHECK(h.finished);
    bool ends =
        h.tokens.back() == Vocabulary::kEnd || static_cast<int>(h.tokens.size()) == t_cap;
    CHECK(ends);
  }
}

TEST_CASE("beam width 1 is greedy decoding") {
  Toy toy = make_toy(53);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> src;
    int len = rng.uniform_int(1, 4);
    for (int i = 0; i < len; ++i)
      src.push_back(Vocabulary::kNumReserved +
                    rng.uniform_int(0, toy.vocab.real_token_count() - 1));
    auto beam = toy.policy.beam_search(src, 1, 4);
    REQUIRE(beam.size() == 1);

    // Manual greedy replay: take the per-step argmax.
    Tape<double> t;
    auto ctx = toy.policy.encode(t, src);
    auto state = toy.policy.initial_state(ctx);
    std::vector<int> greedy_tokens;
    int prev = Vocabulary::kStart;
    for (int step = 0; step < 4; ++step) {
      Var logits = toy.policy.decode_step(t, ctx, prev, state);
      auto lp = log_softmax_values(t.value(logits).values);
      int best = -1;
      double best_lp = -1e300;
      for (int id = 0; id < toy.vocab.size(); ++id) {
        if (id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kSep) continue;
        if (lp[static_cast<size_t>(id)] > best_lp) {
          best_lp = lp[static_cast<size_t>(id)];
          best = id;
        }
      }
      greedy_tokens.push_back(best);
      if (best == Vocabulary::kEnd) break;
      prev = best;
    }
    CHECK(beam[0].tokens == greedy_tokens);
  }
}

TEST_CASE("categorical sampling: determinism, feedback, temperature limit") {
  Toy toy = make_toy(59);
  const auto& src = toy.pairs[0].src;

  // Same seed -> identical K samples.
  auto a = toy.policy.sample_categorical(src, 5, 4, 1.0, 1234);
  auto b = toy.policy.sample_categorical(src, 5, 4, 1.0, 1234);
  REQUIRE(a.size() == 5);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].log_prob == b[i].log_prob);
  }

  // Generated words feed back as the next decoder inputs (no teacher
  // forcing): the fed-token trace is exactly <START> then the sample's own
  // prefix.
  {
    DecodeInstr instr;
    auto s = toy.policy.sample_categorical(src, 1, 4, 1.0, 777, &instr);
    const auto& y = s[0].tokens;
    REQUIRE(instr.fed_tokens.size() == y.size());
    CHECK(instr.fed_tokens[0] == Vocabulary::kStart);
    for (size_t i = 1; i < instr.fed_tokens.size(); ++i)
      CHECK(instr.fed_tokens[i] == y[i - 1]);
    CHECK(instr.decoder_steps == y.size());
  }

  // Temperature -> 0 equals greedy decoding once the distribution is
  // separated (scale the output projection up to separate it).
  {
    GeneratorPolicy<double> sharp = toy.policy;
    for (auto& v : sharp.w_out.value.values) v *= 50.0;
    auto greedy = sharp.beam_search(src, 1, 4);
    auto cold = sharp.sample_categorical(src, 4, 4, 1e-3, 31);
    for (const auto& s : cold) CHECK(s.tokens == greedy[0].tokens);
  }

  // The greedy sequence's per-step choice has maximal per-step probability,
  // so no sample can beat its total log-prob.
  {
    auto greedy = toy.policy.beam_search(src, 1, 4);
    auto samples = toy.policy.sample_categorical(src, 20, 4, 1.0, 99);
    for (const auto& s : samples) CHECK(greedy[0].log_prob >= s.log_prob - 1e-9);
  }
}

TEST_CASE("categorical step-1 frequencies match the softmax (Monte Carlo oracle)") {
  Toy toy = make_toy(61);
  const auto& src = toy.pairs[1].src;

  Tape<double> t;
  auto ctx = toy.policy.encode(t, src);
  auto state = toy.policy.initial_state(ctx);
  Var logits = toy.policy.decode_step(t, ctx, Vocabulary::kStart, state);
  auto lp = log_softmax_values(t.value(logits).values);

  const int n = 10000;
  auto samples = toy.policy.sample_categorical(src, n, 4, 1.0, 4242);
  std::vector<int> counts(static_cast<size_t>(toy.vocab.size()), 0);
  for (const auto& s : samples) ++counts[static_cast<size_t>(s.tokens[0])];
  for (int id = 0; id < toy.vocab.size(); ++id) {
    double expect = std::exp(lp[static_cast<size_t>(id)]);
    if (id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kSep) expect = 0;
    double freq = static_cast<double>(counts[static_cast<size_t>(id)]) / n;
    CHECK(std::fabs(freq - expect) <= 0.02);
  }
}

TEST_CASE("composed seq2seq loss passes the finite-difference oracle") {
  for (int layers : {1, 2}) {
    Toy toy = make_toy(67 + static_cast<uint64_t>(layers), 3, layers);
    const auto& pair = toy.pairs[0];
    auto params = toy.policy.params();
    auto loss_fn = [&]() {
      Tape<double> t;
      auto [loss, n] = toy.policy.teacher_forced_loss(t, pair.src, pair.tgt);
      (void)n;
      return t.value(loss).values[0];
    };
    zero_grads(params);
    {
      Tape<double> t;
      auto [loss, n] = toy.policy.teacher_forced_loss(t, pair.src, pair.tgt);
      (void)n;
      t.backward(loss);
    }
    auto res = check_gradients(params, capture_grads(params), loss_fn);
    CHECK(res.max_rel_err <= 1e-6);
  }
}

TEST_CASE("pretraining: uniform-init loss, memorization, checkpoint selection") {
  Toy toy = make_toy(71, 6);

  // Epoch-0 loss on a fresh uniform init is close to ln(effective vocab):
  // the masked distribution spans vocab minus the three blocked markers.
  double expect = std::log(static_cast<double>(toy.vocab.size() - 3));
  double init_loss = validation_loss(toy.policy, toy.pairs);
  CHECK(std::fabs(init_loss - expect) / expect < 0.05);

  // 200 steps on a single repeated pair memorize it (loss < 0.1).
  {
    Toy t2 = make_toy(73, 8);
    std::vector<EncodedPair> one{t2.pairs[0]};
    PretrainConfig<double> cfg;
    cfg.epochs = 200;
    cfg.batch = 1;
    cfg.lr = 1e-2;
    cfg.dropout = 0;
    cfg.seed = 5;
    auto result = pretrain_supervised(t2.policy, one, one, cfg);
    CHECK(result.history.back().train_loss < 0.1);

    // Selected checkpoint has the lowest validation loss seen.
    double best = 1e300;
    for (const auto& h : result.history) best = std::min(best, h.valid_loss);
    CHECK(result.best_valid_loss == doctest::Approx(best));
    CHECK(result.best_valid_loss <= result.history.back().valid_loss);
    // The restored policy reproduces the best validation loss.
    CHECK(validation_loss(t2.policy, one) ==
          doctest::Approx(result.best_valid_loss).epsilon(1e-9));
  }
}

TEST_CASE("pretraining resume reproduces the uninterrupted run") {
  Toy base = make_toy(79, 4);
  PretrainConfig<double> cfg;
  cfg.epochs = 4;
  cfg.batch = 2;
  cfg.lr = 5e-3;
  cfg.dropout = 0.1;
  cfg.seed = 11;

  // Uninterrupted run, without best-checkpoint restore interference: track
  // raw final weights by using a config whose last epoch is also the best
  // (not guaranteed) -- so instead compare through the PretrainState path,
  // which continues from the raw final state in both runs.
  GeneratorPolicy<double> full = base.policy;
  PretrainState<double> full_state{AdamOptimizer<double>(cfg.lr), 0, 0};
  auto r_full = pretrain_supervised(full, base.pairs, base.pairs, cfg, &full_state);

  GeneratorPolicy<double> part = base.policy;
  PretrainState<double> st{AdamOptimizer<double>(cfg.lr), 0, 0};
  PretrainConfig<double> half = cfg;
  half.epochs = 2;
  auto r_half = pretrain_supervised(part, base.pairs, base.pairs, half, &st,
                                    /*restore_best=*/false);
  auto r_rest = pretrain_supervised(part, base.pairs, base.pairs, cfg, &st);

  // Epoch-by-epoch losses line up across the split runs.
  REQUIRE(r_full.history.size() == 4);
  REQUIRE(r_half.history.size() + r_rest.history.size() == 4);
  CHECK(r_full.history[0].train_loss == r_half.history[0].train_loss);
  CHECK(r_full.history[1].train_loss == r_half.history[1].train_loss);
  CHECK(r_full.history[2].valid_loss == r_rest.history[0].valid_loss);
  CHECK(r_full.history[3].valid_loss == r_rest.history[1].valid_loss);
}

TEST_CASE("generator checkpoint round trip is bit-exact") {
  Toy toy = make_toy(83, 5);
  std::string path =
      (std::filesystem::temp_directory_path() / "qsuggest_gen_ckpt_test.bin").string();
  save_generator(toy.policy, path);
  auto loaded = load_generator<double>(path);
  auto pa = toy.policy.params();
  auto pb = loaded.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.values == pb[i]->value.values);
  std::filesystem::remove(path);
}
