#pragma once

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "qsuggest/tensor.hpp"

namespace qsuggest {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense vectors/matrices. Records exactly the
// primitive set the models need; composites (LSTM cells, attention, sequence
// log-probabilities) are built from these so their adjoints come for free.
//
// Parameters live outside the tape; backward() accumulates their adjoints
// into Param::grad, so one tape per sample composes into batched gradients.
template <typename Real>
class Tape {
 public:
  enum class Op : uint8_t {
    kConst,      // leaf without gradient
    kParam,      // leaf backed by an external Param (grad sink)
    kMatVec,     // [m x n] * [n] -> [m]
    kAdd,        // elementwise
    kMul,        // elementwise
    kSigmoid,
    kTanh,
    kSlice,      // contiguous sub-vector
    kConcat,     // two vectors
    kDot,        // -> [1]
    kStack,      // N scalars -> [N]
    kScale,      // vector * scalar var
    kScaleConst, // vector * compile-time constant
    kSoftmax,
    kSoftmaxCe,  // -> [1] loss; probabilities saved
    kRow,        // row of a matrix -> vector
    kDropout,    // inverted dropout; identity when not training
  };

  Tape() { nodes_.reserve(256); }

  void reset() {
    nodes_.clear();
    param_cache_.clear();
    backward_done_ = false;
  }

  size_t size() const { return nodes_.size(); }

  Var constant(Tensor<Real> t) {
    Node n;
    n.op = Op::kConst;
    n.owned = std::move(t);
    n.needs_grad = false;
    return push(std::move(n));
  }

  Var param(const Param<Real>& p) {
    auto it = param_cache_.find(&p);
    if (it != param_cache_.end()) return Var{it->second};
    Node n;
    n.op = Op::kParam;
    n.external = &p.value;
    n.sink = &p;
    n.needs_grad = true;
    Var v = push(std::move(n));
    param_cache_.emplace(&p, v.id);
    return v;
  }

  Var matvec(Var m, Var x) {
    const Tensor<Real>& mt = value(m);
    const Tensor<Real>& xt = value(x);
    if (mt.shape.size() != 2 || xt.shape.size() != 1 || mt.cols() != xt.dim(0))
      throw DataError("matvec dimension mismatch");
    Node n = node2(Op::kMatVec, m, x);
    n.owned = Tensor<Real>::vec(mt.rows());
    const Real* __restrict__ md = mt.values.data();
    const Real* __restrict__ xd = xt.values.data();
    Real* __restrict__ out = n.owned.values.data();
    int rows = mt.rows(), cols = mt.cols();
    for (int i = 0; i < rows; ++i) {
      const Real* __restrict__ row = md + static_cast<size_t>(i) * cols;
      // Four partial sums keep the reduction vectorizable without
      // reassociation flags; the summation order is fixed and deterministic.
      Real a0 = 0, a1 = 0, a2 = 0, a3 = 0;
      int j = 0;
      for (; j + 4 <= cols; j += 4) {
        a0 += row[j] * xd[j];
        a1 += row[j + 1] * xd[j + 1];
        a2 += row[j + 2] * xd[j + 2];
        a3 += row[j + 3] * xd[j + 3];
      }
      Real acc = (a0 + a1) + (a2 + a3);
      for (; j < cols; ++j) acc += row[j] * xd[j];
      out[i] = acc;
    }
    return push(std::move(n));
  }

  Var add(Var a, Var b) {
    const Tensor<Real>& at = value(a);
    const Tensor<Real>& bt = value(b);
    if (!at.same_shape(bt)) throw DataError("add shape mismatch");
    Node n = node2(Op::kAdd, a, b);
    n.owned = at;
    for (size_t i = 0; i < n.owned.values.size(); ++i) n.owned.values[i] += bt.values[i];
    return push(std::move(n));
  }

  Var mul(Var a, Var b) {
    const Tensor<Real>& at = value(a);
    const Tensor<Real>& bt = value(b);
    if (!at.same_shape(bt)) throw DataError("mul shape mismatch");
    Node n = node2(Op::kMul, a, b);
    n.owned = at;
    for (size_t i = 0; i < n.owned.values.size(); ++i) n.owned.values[i] *= bt.values[i];
    return push(std::move(n));
  }

  Var sigmoid(Var v) {
    Node n = node1(Op::kSigmoid, v);
    n.owned = value(v);
    for (Real& x : n.owned.values) x = Real(1) / (Real(1) + std::exp(-x));
    return push(std::move(n));
  }

  Var tanh_(Var v) {
    Node n = node1(Op::kTanh, v);
    n.owned = value(v);
    for (Real& x : n.owned.values) x = std::tanh(x);
    return push(std::move(n));
  }

  Var slice(Var v, int offset, int len) {
    const Tensor<Real>& vt = value(v);
    if (offset < 0 || len <= 0 || offset + len > vt.numel()) throw DataError("slice out of range");
    Node n = node1(Op::kSlice, v);
    n.a = offset;
    n.owned = Tensor<Real>({len}, std::vector<Real>(vt.values.begin() + offset,
                                                    vt.values.begin() + offset + len));
    return push(std::move(n));
  }

  Var concat(Var a, Var b) {
    const Tensor<Real>& at = value(a);
    const Tensor<Real>& bt = value(b);
    Node n = node2(Op::kConcat, a, b);
    std::vector<Real> v;
    v.reserve(at.values.size() + bt.values.size());
    v.insert(v.end(), at.values.begin(), at.values.end());
    v.insert(v.end(), bt.values.begin(), bt.values.end());
    int len = static_cast<int>(v.size());
    n.owned = Tensor<Real>({len}, std::move(v));
    return push(std::move(n));
  }

  Var dot(Var a, Var b) {
    const Tensor<Real>& at = value(a);
    const Tensor<Real>& bt = value(b);
    if (!at.same_shape(bt)) throw DataError("dot shape mismatch");
    Real acc = 0;
    for (size_t i = 0; i < at.values.size(); ++i) acc += at.values[i] * bt.values[i];
    Node n = node2(Op::kDot, a, b);
    n.owned = Tensor<Real>::scalar(acc);
    return push(std::move(n));
  }

  Var stack(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw DataError("stack of zero scalars");
    Node n;
    n.op = Op::kStack;
    n.owned = Tensor<Real>::vec(static_cast<int>(scalars.size()));
    n.extra = scalars;
    for (size_t i = 0; i < scalars.size(); ++i) {
      const Tensor<Real>& st = value(scalars[i]);
      if (!st.is_scalar()) throw DataError("stack input is not scalar");
      n.owned.values[i] = st.values[0];
      n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(scalars[i].id)].needs_grad;
    }
    return push(std::move(n));
  }

  Var scale(Var v, Var s) {
    const Tensor<Real>& st = value(s);
    if (!st.is_scalar()) throw DataError("scale factor is not scalar");
    Node n = node2(Op::kScale, v, s);
    n.owned = value(v);
    Real f = st.values[0];
    for (Real& x : n.owned.values) x *= f;
    return push(std::move(n));
  }

  Var scale_const(Var v, Real c) {
    Node n = node1(Op::kScaleConst, v);
    n.c = c;
    n.owned = value(v);
    for (Real& x : n.owned.values) x *= c;
    return push(std::move(n));
  }

  Var softmax(Var v) {
    Node n = node1(Op::kSoftmax, v);
    n.owned = value(v);
    softmax_inplace(n.owned.values);
    return push(std::move(n));
  }

  // Returns the scalar loss -log p_target. The probability vector is kept on
  // the node; read it back with probs_of().
  Var softmax_cross_entropy(Var logits, int target) {
    const Tensor<Real>& lt = value(logits);
    if (lt.shape.size() != 1) throw DataError("cross entropy expects a logit vector");
    if (target < 0 || target >= lt.dim(0)) throw DataError("cross entropy target out of range");
    Node n = node1(Op::kSoftmaxCe, logits);
    n.a = target;
    n.aux = lt;
    softmax_inplace(n.aux.values);
    Real p = std::max(n.aux.values[static_cast<size_t>(target)],
                      std::numeric_limits<Real>::min());
    n.owned = Tensor<Real>::scalar(-std::log(p));
    return push(std::move(n));
  }

  Var row(Var matrix, int index) {
    const Tensor<Real>& mt = value(matrix);
    if (mt.shape.size() != 2) throw DataError("row expects a matrix");
    if (index < 0 || index >= mt.rows()) throw DataError("row index out of range");
    Node n = node1(Op::kRow, matrix);
    n.a = index;
    int cols = mt.cols();
    auto begin = mt.values.begin() + static_cast<size_t>(index) * cols;
    n.owned = Tensor<Real>({cols}, std::vector<Real>(begin, begin + cols));
    return push(std::move(n));
  }

  // Inverted dropout: kept entries are scaled by 1/(1-rate) so inference
  // needs no rescale. rate==0 or !training records an identity mask.
  Var dropout(Var v, Real rate, Rng& rng, bool training) {
    if (rate < 0 || rate >= 1) throw ConfigError("dropout rate must be in [0,1)");
    Node n = node1(Op::kDropout, v);
    n.owned = value(v);
    n.aux = Tensor<Real>::zeros(n.owned.shape);
    if (!training || rate == Real(0)) {
      n.aux.fill(Real(1));
    } else {
      Real keep_scale = Real(1) / (Real(1) - rate);
      for (size_t i = 0; i < n.aux.values.size(); ++i)
        n.aux.values[i] = rng.uniform() < static_cast<double>(rate) ? Real(0) : keep_scale;
    }
    for (size_t i = 0; i < n.owned.values.size(); ++i) n.owned.values[i] *= n.aux.values[i];
    return push(std::move(n));
  }

  const Tensor<Real>& value(Var v) const {
    check_var(v);
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.external ? *n.external : n.owned;
  }

  // Probabilities saved by softmax_cross_entropy.
  const Tensor<Real>& probs_of(Var ce_loss) const {
    check_var(ce_loss);
    const Node& n = nodes_[static_cast<size_t>(ce_loss.id)];
    if (n.op != Op::kSoftmaxCe) throw DataError("probs_of expects a cross-entropy node");
    return n.aux;
  }

  // Reverse sweep from a scalar loss. Visits every recorded node exactly once
  // in reverse order of recording. Parameter adjoints accumulate into
  // Param::grad. A second call without re-recording is an error.
  void backward(Var loss) {
    if (nodes_.empty()) throw DataError("backward before forward");
    if (backward_done_) throw DataError("backward called twice without re-recording");
    check_var(loss);
    if (!value(loss).is_scalar()) throw DataError("backward requires a scalar loss");
    backward_done_ = true;

    grads_.assign(nodes_.size(), Tensor<Real>());
    grads_[static_cast<size_t>(loss.id)] = Tensor<Real>::scalar(Real(1));

    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      Tensor<Real>& g = grads_[static_cast<size_t>(i)];
      if (g.numel() == 0) continue;
      if (!n.needs_grad) continue;
      switch (n.op) {
        case Op::kConst:
          break;
        case Op::kParam:
          for (size_t k = 0; k < g.values.size(); ++k) n.sink->grad.values[k] += g.values[k];
          break;
        case Op::kMatVec: backward_matvec(n, g); break;
        case Op::kAdd:
          add_grad(n.in0, g);
          add_grad(n.in1, g);
          break;
        case Op::kMul: {
          const Tensor<Real>& a = value(Var{n.in0});
          const Tensor<Real>& b = value(Var{n.in1});
          if (needs(n.in0)) {
            Tensor<Real>& ga = grad_buf(n.in0, a.shape);
            for (size_t k = 0; k < g.values.size(); ++k) ga.values[k] += g.values[k] * b.values[k];
          }
          if (needs(n.in1)) {
            Tensor<Real>& gb = grad_buf(n.in1, b.shape);
            for (size_t k = 0; k < g.values.size(); ++k) gb.values[k] += g.values[k] * a.values[k];
          }
          break;
        }
        case Op::kSigmoid: {
          Tensor<Real>& gi = grad_buf(n.in0, n.owned.shape);
          for (size_t k = 0; k < g.values.size(); ++k) {
            Real y = n.owned.values[k];
            gi.values[k] += g.values[k] * y * (Real(1) - y);
          }
          break;
        }
        case Op::kTanh: {
          Tensor<Real>& gi = grad_buf(n.in0, n.owned.shape);
          for (size_t k = 0; k < g.values.size(); ++k) {
            Real y = n.owned.values[k];
            gi.values[k] += g.values[k] * (Real(1) - y * y);
          }
          break;
        }
        case Op::kSlice: {
          Tensor<Real>& gi = grad_buf(n.in0, value(Var{n.in0}).shape);
          for (size_t k = 0; k < g.values.size(); ++k)
            gi.values[static_cast<size_t>(n.a) + k] += g.values[k];
          break;
        }
        case Op::kConcat: {
          const Tensor<Real>& a = value(Var{n.in0});
          if (needs(n.in0)) {
            Tensor<Real>& ga = grad_buf(n.in0, a.shape);
            for (size_t k = 0; k < ga.values.size(); ++k) ga.values[k] += g.values[k];
          }
          if (needs(n.in1)) {
            const Tensor<Real>& b = value(Var{n.in1});
            Tensor<Real>& gb = grad_buf(n.in1, b.shape);
            size_t off = a.values.size();
            for (size_t k = 0; k < gb.values.size(); ++k) gb.values[k] += g.values[off + k];
          }
          break;
        }
        case Op::kDot: {
          Real g0 = g.values[0];
          const Tensor<Real>& a = value(Var{n.in0});
          const Tensor<Real>& b = value(Var{n.in1});
          if (needs(n.in0)) {
            Tensor<Real>& ga = grad_buf(n.in0, a.shape);
            for (size_t k = 0; k < ga.values.size(); ++k) ga.values[k] += g0 * b.values[k];
          }
          if (needs(n.in1)) {
            Tensor<Real>& gb = grad_buf(n.in1, b.shape);
            for (size_t k = 0; k < gb.values.size(); ++k) gb.values[k] += g0 * a.values[k];
          }
          break;
        }
        case Op::kStack:
          for (size_t k = 0; k < n.extra.size(); ++k) {
            int src = n.extra[k].id;
            if (!needs(src)) continue;
            Tensor<Real>& gs = grad_buf(src, {1});
            gs.values[0] += g.values[k];
          }
          break;
        case Op::kScale: {
          const Tensor<Real>& v = value(Var{n.in0});
          Real f = value(Var{n.in1}).values[0];
          if (needs(n.in0)) {
            Tensor<Real>& gv = grad_buf(n.in0, v.shape);
            for (size_t k = 0; k < gv.values.size(); ++k) gv.values[k] += g.values[k] * f;
          }
          if (needs(n.in1)) {
            Tensor<Real>& gs = grad_buf(n.in1, {1});
            Real acc = 0;
            for (size_t k = 0; k < g.values.size(); ++k) acc += g.values[k] * v.values[k];
            gs.values[0] += acc;
          }
          break;
        }
        case Op::kScaleConst: {
          Tensor<Real>& gi = grad_buf(n.in0, n.owned.shape);
          for (size_t k = 0; k < g.values.size(); ++k) gi.values[k] += g.values[k] * n.c;
          break;
        }
        case Op::kSoftmax: {
          // d/dx softmax: y .* (g - (g . y))
          Tensor<Real>& gi = grad_buf(n.in0, n.owned.shape);
          Real gy = 0;
          for (size_t k = 0; k < g.values.size(); ++k) gy += g.values[k] * n.owned.values[k];
          for (size_t k = 0; k < g.values.size(); ++k)
            gi.values[k] += n.owned.values[k] * (g.values[k] - gy);
          break;
        }
        case Op::kSoftmaxCe: {
          Tensor<Real>& gi = grad_buf(n.in0, n.aux.shape);
          Real g0 = g.values[0];
          for (size_t k = 0; k < gi.values.size(); ++k) {
            Real delta = (static_cast<int>(k) == n.a) ? Real(1) : Real(0);
            gi.values[k] += g0 * (n.aux.values[k] - delta);
          }
          break;
        }
        case Op::kRow: {
          const Tensor<Real>& m = value(Var{n.in0});
          Tensor<Real>& gm = grad_buf(n.in0, m.shape);
          size_t off = static_cast<size_t>(n.a) * m.cols();
          for (size_t k = 0; k < g.values.size(); ++k) gm.values[off + k] += g.values[k];
          break;
        }
        case Op::kDropout: {
          Tensor<Real>& gi = grad_buf(n.in0, n.owned.shape);
          for (size_t k = 0; k < g.values.size(); ++k) gi.values[k] += g.values[k] * n.aux.values[k];
          break;
        }
      }
    }
    grads_.clear();
  }

 private:
  struct Node {
    Op op = Op::kConst;
    int in0 = -1, in1 = -1;
    int a = 0;                 // slice offset / row index / ce target
    Real c = 0;                // scale_const factor
    bool needs_grad = false;
    Tensor<Real> owned;        // computed value (empty for param leaves)
    Tensor<Real> aux;          // ce probabilities / dropout mask
    const Tensor<Real>* external = nullptr;
    const Param<Real>* sink = nullptr;
    std::vector<Var> extra;    // stack inputs
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node node1(Op op, Var a) {
    check_var(a);
    Node n;
    n.op = op;
    n.in0 = a.id;
    n.needs_grad = nodes_[static_cast<size_t>(a.id)].needs_grad;
    return n;
  }

  Node node2(Op op, Var a, Var b) {
    check_var(a);
    check_var(b);
    Node n;
    n.op = op;
    n.in0 = a.id;
    n.in1 = b.id;
    n.needs_grad = nodes_[static_cast<size_t>(a.id)].needs_grad ||
                   nodes_[static_cast<size_t>(b.id)].needs_grad;
    return n;
  }

  void check_var(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw DataError("invalid tape var");
  }

  bool needs(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  Tensor<Real>& grad_buf(int id, const std::vector<int>& shape) {
    Tensor<Real>& g = grads_[static_cast<size_t>(id)];
    if (g.numel() == 0) g = Tensor<Real>::zeros(shape);
    return g;
  }

  void add_grad(int id, const Tensor<Real>& g) {
    if (!needs(id)) return;
    Tensor<Real>& dst = grad_buf(id, g.shape);
    for (size_t k = 0; k < g.values.size(); ++k) dst.values[k] += g.values[k];
  }

  void backward_matvec(Node& n, const Tensor<Real>& g) {
    const Tensor<Real>& m = value(Var{n.in0});
    const Tensor<Real>& x = value(Var{n.in1});
    int rows = m.rows(), cols = m.cols();
    if (needs(n.in0)) {
      Tensor<Real>& gm = grad_buf(n.in0, m.shape);
      const Real* __restrict__ xd = x.values.data();
      Real* __restrict__ gmd = gm.values.data();
      for (int i = 0; i < rows; ++i) {
        Real gi = g.values[static_cast<size_t>(i)];
        if (gi == Real(0)) continue;
        Real* __restrict__ dst = gmd + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) dst[j] += gi * xd[j];
      }
    }
    if (needs(n.in1)) {
      Tensor<Real>& gx = grad_buf(n.in1, x.shape);
      const Real* __restrict__ md = m.values.data();
      Real* __restrict__ dst = gx.values.data();
      for (int i = 0; i < rows; ++i) {
        Real gi = g.values[static_cast<size_t>(i)];
        if (gi == Real(0)) continue;
        const Real* __restrict__ mrow = md + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) dst[j] += gi * mrow[j];
      }
    }
  }

  static void softmax_inplace(std::vector<Real>& v) {
    Real mx = v[0];
    for (Real x : v) mx = std::max(mx, x);
    Real sum = 0;
    for (Real& x : v) {
      x = std::exp(x - mx);
      sum += x;
    }
    for (Real& x : v) x /= sum;
  }

  std::vector<Node> nodes_;
  std::vector<Tensor<Real>> grads_;
  std::unordered_map<const Param<Real>*, int> param_cache_;
  bool backward_done_ = false;
};

}  // namespace qsuggest
