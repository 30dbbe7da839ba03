#pragma once

#include <string>
#include <type_traits>

#include "qsuggest/checkpoint.hpp"
#include "qsuggest/estimator.hpp"
#include "qsuggest/generator.hpp"
#include "qsuggest/pretrain.hpp"

namespace qsuggest {

namespace detail {

template <typename Real>
void add_tensor(Checkpoint& ckpt, const std::string& name, const Tensor<Real>& t) {
  std::vector<int64_t> shape(t.shape.begin(), t.shape.end());
  if constexpr (std::is_same_v<Real, float>)
    ckpt.add_f32(name, std::move(shape), t.values.data());
  else
    ckpt.add_f64(name, std::move(shape), t.values.data());
}

template <typename Real>
void read_tensor(const Checkpoint& ckpt, const std::string& name, Tensor<Real>& t) {
  const auto& e = ckpt.entry(name);
  if (e.count() != t.numel())
    throw DataError("checkpoint tensor size mismatch for " + name);
  if constexpr (std::is_same_v<Real, float>) {
    auto v = ckpt.f32(name);
    std::copy(v.begin(), v.end(), t.values.begin());
  } else {
    auto v = ckpt.f64(name);
    std::copy(v.begin(), v.end(), t.values.begin());
  }
}

}  // namespace detail

template <typename Real>
void save_generator(const GeneratorPolicy<Real>& policy, const std::string& path,
                    const PretrainState<Real>* train_state = nullptr) {
  Checkpoint ckpt;
  ckpt.set_kind(Checkpoint::kKindGenerator);
  const ModelDims& d = policy.dims;
  ckpt.add_i64("meta/dims", {d.vocab, d.embedding, d.hidden, d.layers, d.t_max});
  for (const auto* p : policy.params()) detail::add_tensor(ckpt, "param/" + p->name, p->value);
  if (train_state != nullptr) {
    ckpt.add_i64("opt/adam_step", {train_state->optimizer.step_count});
    ckpt.add_i64("opt/next_epoch", {train_state->next_epoch});
    ckpt.add_i64("opt/global_step", {train_state->global_step});
    auto params = const_cast<GeneratorPolicy<Real>&>(policy).params();
    if (!train_state->optimizer.m.empty()) {
      for (size_t i = 0; i < params.size(); ++i) {
        detail::add_tensor(ckpt, "opt/m/" + params[i]->name, train_state->optimizer.m[i]);
        detail::add_tensor(ckpt, "opt/v/" + params[i]->name, train_state->optimizer.v[i]);
      }
    }
  }
  ckpt.save(path);
}

template <typename Real>
GeneratorPolicy<Real> load_generator(const std::string& path,
                                     PretrainState<Real>* train_state = nullptr) {
  Checkpoint ckpt = Checkpoint::load(path);
  ckpt.require_kind(Checkpoint::kKindGenerator);
  auto dims = ckpt.i64("meta/dims");
  if (dims.size() != 5) throw DataError("corrupt generator dims in checkpoint");
  ModelDims d{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
              static_cast<int>(dims[3]), static_cast<int>(dims[4])};
  GeneratorPolicy<Real> policy(d, /*seed=*/0);
  auto params = policy.params();
  for (auto* p : params) detail::read_tensor(ckpt, "param/" + p->name, p->value);
  if (train_state != nullptr && ckpt.has("opt/adam_step")) {
    train_state->optimizer.step_count = ckpt.scalar_i64("opt/adam_step");
    train_state->next_epoch = static_cast<int>(ckpt.scalar_i64("opt/next_epoch"));
    train_state->global_step = ckpt.scalar_i64("opt/global_step");
    if (ckpt.has("opt/m/" + params[0]->name)) {
      train_state->optimizer.m.clear();
      train_state->optimizer.v.clear();
      for (auto* p : params) {
        Tensor<Real> m = Tensor<Real>::zeros(p->value.shape);
        Tensor<Real> v = Tensor<Real>::zeros(p->value.shape);
        detail::read_tensor(ckpt, "opt/m/" + p->name, m);
        detail::read_tensor(ckpt, "opt/v/" + p->name, v);
        train_state->optimizer.m.push_back(std::move(m));
        train_state->optimizer.v.push_back(std::move(v));
      }
    }
  }
  return policy;
}

template <typename Real>
void save_estimator(const EstimatorModel<Real>& model, const std::string& path) {
  Checkpoint ckpt;
  ckpt.set_kind(Checkpoint::kKindEstimator);
  const ModelDims& d = model.dims;
  ckpt.add_i64("meta/dims", {d.vocab, d.embedding, d.hidden, d.layers, d.t_max});
  auto params = const_cast<EstimatorModel<Real>&>(model).params();
  for (const auto* p : params) detail::add_tensor(ckpt, "param/" + p->name, p->value);
  ckpt.save(path);
}

template <typename Real>
EstimatorModel<Real> load_estimator(const std::string& path) {
  Checkpoint ckpt = Checkpoint::load(path);
  ckpt.require_kind(Checkpoint::kKindEstimator);
  auto dims = ckpt.i64("meta/dims");
  if (dims.size() != 5) throw DataError("corrupt estimator dims in checkpoint");
  EstimatorModel<Real> model(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                             static_cast<int>(dims[2]), /*seed=*/0);
  for (auto* p : model.params()) detail::read_tensor(ckpt, "param/" + p->name, p->value);
  return model;
}

}  // namespace qsuggest
