#pragma once

// Central finite-difference gradient oracle. Test-only; depends on forward
// evaluation alone, so it stays independent of the tape's backward pass.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qsuggest/tensor.hpp"

namespace qsuggest::testing {

struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst;  // "param[idx]" of the worst component
  size_t checked = 0;
};

// Relative error with an absolute floor on the denominator: the central
// difference itself is only accurate to ~1e-11, so components where both
// gradients are below the floor are effectively compared absolutely.
inline double rel_err(double analytic, double numeric) {
  double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
  return std::fabs(analytic - numeric) / denom;
}

// params: the tensors loss() reads from. analytic_grads: matching gradients
// produced by one backward pass (captured before calling). loss() must
// recompute the full forward from the current parameter values.
template <typename Real>
GradCheckResult check_gradients(const std::vector<qsuggest::Param<Real>*>& params,
                                const std::vector<qsuggest::Tensor<Real>>& analytic_grads,
                                const std::function<double()>& loss, double eps = 1e-5) {
  GradCheckResult res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    for (size_t i = 0; i < p.value.values.size(); ++i) {
      Real saved = p.value.values[i];
      p.value.values[i] = saved + static_cast<Real>(eps);
      double up = loss();
      p.value.values[i] = saved - static_cast<Real>(eps);
      double down = loss();
      p.value.values[i] = saved;
      double numeric = (up - down) / (2 * eps);
      double analytic = static_cast<double>(analytic_grads[pi].values[i]);
      double e = rel_err(analytic, numeric);
      ++res.checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

template <typename Real>
std::vector<qsuggest::Tensor<Real>> capture_grads(
    const std::vector<qsuggest::Param<Real>*>& params) {
  std::vector<qsuggest::Tensor<Real>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->grad);
  return out;
}

}  // namespace qsuggest::testing
