#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "qsuggest/generator.hpp"
#include "qsuggest/metrics.hpp"
#include "qsuggest/optim.hpp"
#include "qsuggest/reward.hpp"

namespace qsuggest {

template <typename Real>
struct FinetuneConfig {
  DecodeStrategy strategy = DecodeStrategy::kBeam;
  int k = 4;             // Monte-Carlo samples per query
  double eta = 1.0;      // unnaturalness penalty weight
  Real lr = Real(3e-5);  // SGD ascent rate
  int batch = 32;
  int sync_steps = 0;  // beta <- theta every n update steps; 0 = once per epoch
  int epochs = 3;
  int steps_cap = 0;  // optional hard cap on update steps; 0 = none
  int t_max = 8;
  double clip_norm = 5.0;
  double temperature = 1.0;
  uint64_t seed = 3;
  int eval_every = 0;  // validation evals every n steps; 0 = once per epoch
  int valid_cap = 500;
  Real dropout = Real(0);
  double converge_rel = 1e-3;  // smoothed monitor-loss relative change
  int converge_window = 5;     // in validation evaluations

  void validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (eta < 0) throw ConfigError("eta must be >= 0");
    if (!(lr > 0)) throw ConfigError("alpha must be > 0");
    if (batch < 1 || epochs < 0 || t_max < 1) throw ConfigError("bad finetune config");
    if (temperature <= 0) throw ConfigError("temperature must be > 0");
  }
};

// K complete sequences from the start state (src, <START>) under the frozen
// rollout policy. Beam strategy takes the top-K beams; categorical draws K
// independent samples. Decoder invocations are instrumented; start-state-only
// rollout costs at most K * t_max invocations per query.
template <typename Real>
std::vector<Hypothesis> rollout(const GeneratorPolicy<Real>& beta, const std::vector<int>& src,
                                int k, DecodeStrategy strategy, int t_max, double temperature,
                                uint64_t seed, DecodeInstr* instr = nullptr) {
  std::vector<Hypothesis> out;
  if (strategy == DecodeStrategy::kBeam) {
    out = beta.beam_search(src, k, t_max, instr);
  } else {
    out = beta.sample_categorical(src, k, t_max, temperature, seed, instr);
  }
  if (instr != nullptr &&
      instr->decoder_steps > static_cast<uint64_t>(k) * static_cast<uint64_t>(t_max))
    throw NumericError("rollout cost contract violated: decoder steps exceed K*T");
  return out;
}

// Reward-weighted negative log likelihood: (1/(K*B)) * sum(-R * log G(y)).
inline double monitor_loss(const std::vector<double>& rewards,
                           const std::vector<double>& log_probs, int k, int b) {
  if (rewards.size() != log_probs.size()) throw DataError("rewards/log-probs size mismatch");
  double total = 0;
  for (size_t i = 0; i < rewards.size(); ++i) total += -rewards[i] * log_probs[i];
  return total / (static_cast<double>(k) * static_cast<double>(b));
}

template <typename Real>
struct RolloutBatchEntry {
  const EncodedPair* pair = nullptr;
  std::vector<Hypothesis> rollouts;
  std::vector<double> rewards;
};

struct StepStats {
  int64_t step = 0;
  double mean_reward = 0;
  double monitor_loss = 0;
  double grad_norm = 0;  // pre-clip global norm
};

// One Monte-Carlo policy-gradient step. Sequences were drawn from the rollout
// policy; their log-probabilities are scored under the current policy, scaled
// by -R/(K*B) so that descending the surrogate ascends J. Gradients are
// clipped by global norm, then applied with plain SGD.
template <typename Real>
StepStats policy_gradient_step(GeneratorPolicy<Real>& policy,
                               const std::vector<RolloutBatchEntry<Real>>& batch, int k, int t_max,
                               SgdOptimizer<Real>& sgd, double clip_norm) {
  if (batch.empty()) throw DataError("empty policy-gradient batch");
  auto params = policy.params();
  zero_grads(params);

  double reward_sum = 0;
  double monitor = 0;
  size_t samples = 0;
  Real scale = Real(1) / (static_cast<Real>(k) * static_cast<Real>(batch.size()));

  for (const auto& entry : batch) {
    if (entry.rollouts.size() != entry.rewards.size())
      throw DataError("rollouts/rewards size mismatch");
    Tape<Real> t;
    auto ctx = policy.encode(t, entry.pair->src);
    Var loss;
    bool first = true;
    for (size_t i = 0; i < entry.rollouts.size(); ++i) {
      Var lp = policy.sequence_log_prob(t, ctx, entry.rollouts[i].tokens, t_max);
      double lp_value = static_cast<double>(t.value(lp).values[0]);
      double r = entry.rewards[i];
      reward_sum += r;
      monitor += -r * lp_value;
      ++samples;
      Var term = t.scale_const(lp, static_cast<Real>(-r) * scale);
      loss = first ? term : t.add(loss, term);
      first = false;
    }
    if (!std::isfinite(static_cast<double>(t.value(loss).values[0])))
      throw NumericError("non-finite policy-gradient loss");
    t.backward(loss);
  }

  StepStats stats;
  stats.step = sgd.step_count + 1;
  stats.mean_reward = reward_sum / static_cast<double>(samples);
  stats.monitor_loss = monitor / (static_cast<double>(k) * static_cast<double>(batch.size()));
  check_grads_finite(params);
  stats.grad_norm = clip_global_norm(params, clip_norm);
  sgd.step(params);
  return stats;
}

struct FinetuneEval {
  int64_t step = 0;
  double sessions_plus = 0;
  double mean_reward = 0;
  double smoothed_monitor = 0;
};

struct FinetuneResult {
  std::vector<StepStats> steps;
  std::vector<FinetuneEval> evals;
  int64_t best_step = 0;
  double best_sessions_plus = -1;
  double best_mean_reward = 0;
  bool converged = false;
};

// Mean composite reward of K strategy-drawn samples per pair, averaged over
// pairs: the empirical estimate of the RL objective on this set.
template <typename Real>
double evaluate_mean_reward(const GeneratorPolicy<Real>& policy,
                            const EstimatorModel<Real>& estimator, const Vocabulary& vocab,
                            const std::vector<EncodedPair>& pairs, const FeedbackIndex& index,
                            DecodeStrategy strategy, int k, int t_max, double eta,
                            double temperature, uint64_t seed) {
  if (pairs.empty()) throw DataError("cannot evaluate reward on zero pairs");
  double total = 0;
  size_t n = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    auto hyps = rollout(policy, pairs[i].src, k, strategy, t_max, temperature,
                        derive_seed(seed, 0xe7a1, i), nullptr);
    for (const auto& h : hyps) {
      total += reward_for_sample(pairs[i].src, h.content(), pairs[i].src_text, index, estimator,
                                 vocab, eta);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

// Mean Sessions+@6 of beam-6 suggestions over the given pairs.
template <typename Real>
double evaluate_sessions_plus(const GeneratorPolicy<Real>& policy, const Vocabulary& vocab,
                              const std::vector<EncodedPair>& pairs, const FeedbackIndex& index,
                              int n_suggestions, int t_max) {
  if (pairs.empty()) throw DataError("cannot evaluate on zero pairs");
  double total = 0;
  for (const auto& p : pairs) {
    auto hyps = policy.beam_search(p.src, n_suggestions, t_max);
    std::vector<std::string> suggestions;
    for (const auto& h : hyps) {
      auto content = h.content();
      if (!content.empty()) suggestions.push_back(vocab.decode(content));
    }
    total += sessions_plus_at6(suggestions, index);
  }
  return total / static_cast<double>(pairs.size());
}

// Algorithm: initialize the rollout policy from the pre-trained generator,
// then repeat { for n steps: roll out K sequences per query from the frozen
// policy, compute terminal rewards, take a policy-gradient step } and sync
// the rollout policy, until the smoothed monitoring loss converges or the
// epoch cap is hit. Returns the checkpoint with the best validation mean
// Sessions+@6 (ties broken by validation mean reward).
template <typename Real>
FinetuneResult finetune(GeneratorPolicy<Real>& policy, const EstimatorModel<Real>& estimator,
                        const Vocabulary& vocab, const std::vector<EncodedPair>& train,
                        const std::vector<EncodedPair>& valid, const FeedbackIndex& reward_index,
                        const FeedbackIndex& valid_index, const FinetuneConfig<Real>& cfg) {
  cfg.validate();
  if (train.empty()) throw DataError("finetune training set is empty");
  if (valid.empty()) throw DataError("finetune validation set is empty");

  GeneratorPolicy<Real> beta = policy;  // rollout policy, synced periodically
  SgdOptimizer<Real> sgd(cfg.lr);
  auto params = policy.params();

  size_t steps_per_epoch =
      (train.size() + static_cast<size_t>(cfg.batch) - 1) / static_cast<size_t>(cfg.batch);
  int64_t sync_every = cfg.sync_steps > 0 ? cfg.sync_steps : static_cast<int64_t>(steps_per_epoch);
  int64_t eval_every = cfg.eval_every > 0 ? cfg.eval_every : static_cast<int64_t>(steps_per_epoch);

  std::vector<EncodedPair> valid_sample = valid;
  {
    Rng rng(derive_seed(cfg.seed, 0x5a3e));
    rng.shuffle(valid_sample);
    if (cfg.valid_cap > 0 && valid_sample.size() > static_cast<size_t>(cfg.valid_cap))
      valid_sample.resize(static_cast<size_t>(cfg.valid_cap));
  }

  FinetuneResult result;
  std::vector<Tensor<Real>> best_params;
  for (auto* p : params) best_params.push_back(p->value);
  double monitor_accum = 0;
  int64_t monitor_count = 0;
  std::vector<double> smoothed_history;
  int64_t step = 0;
  bool stop = false;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto run_eval = [&]() {
    FinetuneEval ev;
    ev.step = step;
    ev.sessions_plus = evaluate_sessions_plus(policy, vocab, valid_sample, valid_index, 6,
                                              cfg.t_max);
    // The objective is an expectation over the stochastic policy, so the
    // validation estimate always draws categorical samples, whatever the
    // training rollout strategy. A fixed eval seed keeps snapshots
    // comparable across steps.
    ev.mean_reward = evaluate_mean_reward(policy, estimator, vocab, valid_sample, valid_index,
                                          DecodeStrategy::kCategorical, cfg.k, cfg.t_max, cfg.eta,
                                          cfg.temperature, derive_seed(cfg.seed, 0xeeee));
    ev.smoothed_monitor = monitor_count > 0 ? monitor_accum / static_cast<double>(monitor_count)
                                            : 0.0;
    monitor_accum = 0;
    monitor_count = 0;
    result.evals.push_back(ev);

    if (ev.sessions_plus > result.best_sessions_plus ||
        (ev.sessions_plus == result.best_sessions_plus &&
         ev.mean_reward > result.best_mean_reward)) {
      result.best_sessions_plus = ev.sessions_plus;
      result.best_mean_reward = ev.mean_reward;
      result.best_step = step;
      best_params.clear();
      for (auto* p : params) best_params.push_back(p->value);
    }

    smoothed_history.push_back(ev.smoothed_monitor);
    size_t w = static_cast<size_t>(cfg.converge_window);
    if (smoothed_history.size() > w) {
      double now = smoothed_history.back();
      double then = smoothed_history[smoothed_history.size() - 1 - w];
      double rel = std::fabs(now - then) / std::max(std::fabs(then), 1e-8);
      if (rel < cfg.converge_rel) {
        result.converged = true;
        stop = true;
      }
    }
  };

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x3f1e, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size() && !stop;
         start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));

      std::vector<RolloutBatchEntry<Real>> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        RolloutBatchEntry<Real> entry;
        entry.pair = &train[order[i]];
        DecodeInstr instr;
        entry.rollouts = rollout(beta, entry.pair->src, cfg.k, cfg.strategy, cfg.t_max,
                                 cfg.temperature,
                                 derive_seed(cfg.seed, static_cast<uint64_t>(step), i), &instr);
        entry.rewards.reserve(entry.rollouts.size());
        for (const auto& h : entry.rollouts)
          entry.rewards.push_back(reward_for_sample(entry.pair->src, h.content(),
                                                    entry.pair->src_text, reward_index, estimator,
                                                    vocab, cfg.eta));
        batch.push_back(std::move(entry));
      }

      StepStats stats = policy_gradient_step(policy, batch, cfg.k, cfg.t_max, sgd, cfg.clip_norm);
      if (!std::isfinite(stats.monitor_loss))
        throw NumericError("non-finite monitoring loss; aborting fine-tuning");
      result.steps.push_back(stats);
      monitor_accum += stats.monitor_loss;
      ++monitor_count;
      ++step;

      if (step % sync_every == 0) beta.copy_values_from(policy);
      if (step % eval_every == 0) run_eval();
      if (cfg.steps_cap > 0 && step >= cfg.steps_cap) stop = true;
    }
  }
  if (result.evals.empty() || result.evals.back().step != step) run_eval();

  for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  return result;
}

// Training-stats log: step \t mean_reward \t monitor_loss \t grad_norm.
void write_training_stats(const std::string& path, const std::vector<StepStats>& stats);

}  // namespace qsuggest
