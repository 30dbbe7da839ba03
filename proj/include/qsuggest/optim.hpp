#pragma once

#include <cmath>
#include <vector>

#include "qsuggest/tensor.hpp"

namespace qsuggest {

template <typename Real>
void zero_grads(const std::vector<Param<Real>*>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Real>
void scale_grads(const std::vector<Param<Real>*>& params, Real factor) {
  for (auto* p : params)
    for (Real& g : p->grad.values) g *= factor;
}

template <typename Real>
double global_grad_norm(const std::vector<Param<Real>*>& params) {
  double sq = 0;
  for (auto* p : params)
    for (Real g : p->grad.values) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

// Scales gradients so the global norm is at most max_norm. Returns the
// pre-clip norm.
template <typename Real>
double clip_global_norm(const std::vector<Param<Real>*>& params, double max_norm) {
  double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0) {
    Real f = static_cast<Real>(max_norm / norm);
    scale_grads(params, f);
  }
  return norm;
}

template <typename Real>
void check_grads_finite(const std::vector<Param<Real>*>& params) {
  for (auto* p : params)
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in " + p->name);
}

// Plain gradient descent: p <- p - lr * g, exactly. A zero gradient leaves
// the parameter bit-identical.
template <typename Real>
struct SgdOptimizer {
  Real lr;
  int64_t step_count = 0;

  explicit SgdOptimizer(Real learning_rate) : lr(learning_rate) {
    if (!(lr > 0)) throw ConfigError("sgd learning rate must be positive");
  }

  void step(const std::vector<Param<Real>*>& params) {
    check_grads_finite(params);
    for (auto* p : params)
      for (size_t i = 0; i < p->value.values.size(); ++i)
        p->value.values[i] -= lr * p->grad.values[i];
    ++step_count;
  }
};

// Adam with bias-corrected first/second moments (beta1=0.9, beta2=0.999,
// eps=1e-8). Moment slots are lazily bound to the parameter list on the
// first step and must match shapes thereafter.
template <typename Real>
struct AdamOptimizer {
  Real lr;
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  int64_t step_count = 0;
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;

  explicit AdamOptimizer(Real learning_rate) : lr(learning_rate) {
    if (!(lr > 0)) throw ConfigError("adam learning rate must be positive");
  }

  void step(const std::vector<Param<Real>*>& params) {
    check_grads_finite(params);
    if (m.empty()) {
      for (auto* p : params) {
        m.push_back(Tensor<Real>::zeros(p->value.shape));
        v.push_back(Tensor<Real>::zeros(p->value.shape));
      }
    }
    if (m.size() != params.size()) throw NumericError("adam state/parameter count mismatch");
    ++step_count;
    Real bc1 = Real(1) - std::pow(beta1, static_cast<Real>(step_count));
    Real bc2 = Real(1) - std::pow(beta2, static_cast<Real>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      Param<Real>& p = *params[pi];
      if (!p.value.same_shape(m[pi])) throw NumericError("adam moment shape mismatch: " + p.name);
      for (size_t i = 0; i < p.value.values.size(); ++i) {
        Real g = p.grad.values[i];
        m[pi].values[i] = beta1 * m[pi].values[i] + (Real(1) - beta1) * g;
        v[pi].values[i] = beta2 * v[pi].values[i] + (Real(1) - beta2) * g * g;
        Real mhat = m[pi].values[i] / bc1;
        Real vhat = v[pi].values[i] / bc2;
        p.value.values[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

}  // namespace qsuggest
