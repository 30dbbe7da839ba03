#pragma once

#include <cmath>
#include <vector>

#include "qsuggest/generator.hpp"
#include "qsuggest/optim.hpp"

namespace qsuggest {

template <typename Real>
struct PretrainConfig {
  int epochs = 10;
  int batch = 256;
  Real lr = Real(1e-3);
  Real dropout = Real(0.2);
  uint64_t seed = 1;
};

struct PretrainEpochStats {
  int epoch = 0;
  double train_loss = 0;  // mean cross entropy per token
  double valid_loss = 0;
};

template <typename Real>
struct PretrainState {
  AdamOptimizer<Real> optimizer{Real(1e-3)};
  int next_epoch = 0;
  int64_t global_step = 0;
};

template <typename Real>
struct PretrainResult {
  std::vector<PretrainEpochStats> history;
  double best_valid_loss = 0;
  int best_epoch = -1;
  std::vector<Tensor<Real>> best_weights;  // parameters of the best epoch
};

// Mean per-token teacher-forced cross entropy without dropout.
template <typename Real>
double validation_loss(const GeneratorPolicy<Real>& policy, const std::vector<EncodedPair>& pairs) {
  if (pairs.empty()) throw DataError("validation set is empty");
  double total = 0;
  int64_t tokens = 0;
  for (const auto& p : pairs) {
    Tape<Real> t;
    auto [loss, n] = policy.teacher_forced_loss(t, p.src, p.tgt);
    total += static_cast<double>(t.value(loss).values[0]);
    tokens += n;
  }
  return total / static_cast<double>(tokens);
}

// Teacher-forced supervised training with Adam on mean-per-token cross
// entropy. Keeps the epoch checkpoint with the lowest validation loss and
// restores it into `policy` before returning (restore_best). Resume by
// passing back the same PretrainState with restore_best=false on the partial
// runs: epoch shuffles and dropout streams derive from (seed, epoch/step),
// so a resumed run reproduces the uninterrupted one exactly.
template <typename Real>
PretrainResult<Real> pretrain_supervised(GeneratorPolicy<Real>& policy,
                                         const std::vector<EncodedPair>& train,
                                         const std::vector<EncodedPair>& valid,
                                         const PretrainConfig<Real>& cfg,
                                         PretrainState<Real>* state = nullptr,
                                         bool restore_best = true) {
  if (train.empty()) throw DataError("training set is empty");
  PretrainState<Real> local{AdamOptimizer<Real>(cfg.lr), 0, 0};
  PretrainState<Real>& st = state != nullptr ? *state : local;
  if (state != nullptr && st.next_epoch == 0 && st.optimizer.m.empty())
    st.optimizer = AdamOptimizer<Real>(cfg.lr);

  auto params = policy.params();
  PretrainResult<Real> result;
  result.best_valid_loss = std::numeric_limits<double>::infinity();

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    // The epoch order is a pure function of (seed, epoch) so resumed runs
    // see the same batches.
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c4, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    int64_t epoch_tokens = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      zero_grads(params);
      Rng dropout_rng(derive_seed(cfg.seed, 0xd409, static_cast<uint64_t>(st.global_step)));
      double batch_loss = 0;
      int64_t batch_tokens = 0;
      for (size_t i = start; i < end; ++i) {
        const EncodedPair& p = train[order[i]];
        Tape<Real> t;
        auto [loss, n] =
            policy.teacher_forced_loss(t, p.src, p.tgt, cfg.dropout, &dropout_rng, true);
        double lv = static_cast<double>(t.value(loss).values[0]);
        if (!std::isfinite(lv))
          throw NumericError("non-finite training loss at step " + std::to_string(st.global_step));
        batch_loss += lv;
        batch_tokens += n;
        t.backward(loss);
      }
      scale_grads(params, Real(1) / static_cast<Real>(batch_tokens));
      st.optimizer.step(params);
      ++st.global_step;
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }

    PretrainEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    stats.valid_loss = validation_loss(policy, valid);
    result.history.push_back(stats);
    if (stats.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = stats.valid_loss;
      result.best_epoch = epoch;
      result.best_weights.clear();
      for (auto* p : params) result.best_weights.push_back(p->value);
    }
    st.next_epoch = epoch + 1;
  }

  if (restore_best && !result.best_weights.empty())
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = result.best_weights[i];
  return result;
}

}  // namespace qsuggest
