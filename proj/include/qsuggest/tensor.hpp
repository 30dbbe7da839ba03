#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "qsuggest/errors.hpp"
#include "qsuggest/rng.hpp"

namespace qsuggest {

// Dense row-major array. Real is float in training builds and double in
// gradient-check builds; finite-difference checks are unreliable in 32-bit.
template <typename Real>
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> values;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<Real> v) : shape(std::move(s)), values(std::move(v)) {
    if (static_cast<int64_t>(values.size()) != count(shape))
      throw DataError("tensor shape/value size mismatch");
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    int64_t n = count(s);
    return Tensor(std::move(s), std::vector<Real>(static_cast<size_t>(n), Real(0)));
  }

  static Tensor vec(int n) { return zeros({n}); }
  static Tensor matrix(int rows, int cols) { return zeros({rows, cols}); }
  static Tensor scalar(Real v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }
  bool is_scalar() const { return numel() == 1; }

  Real& operator[](size_t i) { return values[i]; }
  Real operator[](size_t i) const { return values[i]; }
  Real& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

  void fill(Real v) { std::fill(values.begin(), values.end(), v); }

  void fill_uniform(Rng& rng, Real lo, Real hi) {
    for (Real& v : values) v = static_cast<Real>(rng.uniform(lo, hi));
  }

  bool all_finite() const {
    for (Real v : values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// A named trainable tensor with its gradient accumulator. grad is mutable so
// read-only forward passes over a const model can still register parameters
// on a tape; only backward() writes it, and training is single-threaded.
template <typename Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  mutable Tensor<Real> grad;

  Param() = default;
  Param(std::string n, Tensor<Real> v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor<Real>::zeros(value.shape);
  }

  void zero_grad() const { grad.fill(Real(0)); }
};

}  // namespace qsuggest
