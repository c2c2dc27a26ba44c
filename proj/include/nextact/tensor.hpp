#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "nextact/common.hpp"

namespace nextact {

// ---------------------------------------------------------------------------
// Dense tensor with reverse-mode automatic differentiation.
//
// Every operation that touches a tensor requiring gradients records a node in
// a dynamic graph. backward() walks the graph in reverse topological order and
// accumulates d(loss)/d(tensor) into each participating tensor's grad buffer.
// Gradients persist across backward calls until explicitly zeroed, so two
// backward passes over the same graph double the stored gradients.
//
// Data is a flat row-major array; shapes are explicit. The scalar type R is a
// template parameter: float for training, double for finite-difference
// verification.
// ---------------------------------------------------------------------------

template <class R>
struct TensorNode {
  std::vector<int> shape;
  std::vector<R> value;
  std::vector<R> grad;  // persistent; allocated on first backward that reaches this node
  std::vector<R> tmp;   // scratch gradient for the in-flight backward pass
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<R>>> parents;
  std::function<void(TensorNode<R>&)> backprop;  // distributes tmp into parents' tmp
};

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

template <class R>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<R>> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), R(0), requires_grad);
  }

  static Tensor filled(std::vector<int> shape, R v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<R>>();
    n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_data(std::vector<int> shape, std::vector<R> data, bool requires_grad = false) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<R>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(R v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::vector<R>& data() { return node_->value; }
  const std::vector<R>& data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<R>& grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), R(0));
    return node_->grad;
  }
  const std::vector<R>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), R(0)); }

  R item() const {
    if (numel() != 1)
      throw ShapeError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<TensorNode<R>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<R>> node_;
};

namespace detail {

template <class R>
Tensor<R> make_node(std::vector<int> shape, std::vector<R> value,
                    std::vector<Tensor<R>> parents,
                    std::function<void(TensorNode<R>&)> backprop) {
  auto n = std::make_shared<TensorNode<R>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool track = false;
  for (const auto& p : parents) track = track || p.requires_grad();
  n->requires_grad = track;
  if (track) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor<R>(std::move(n));
}

// Splits a shape at `axis` into (outer, mid, inner) strides for slicing.
inline void axis_strides(const std::vector<int>& shape, int axis, int64_t* outer, int64_t* mid,
                         int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= shape[static_cast<size_t>(i)];
  *mid = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i)
    *inner *= shape[i];
}

}  // namespace detail

// ----------------------------------------------------------------- backward

// Reverse-mode pass from a scalar loss. Gradients of the pass are first
// collected in scratch buffers and folded into the persistent grads at the
// end, which makes repeated backward calls accumulate exactly.
template <class R>
void backward(const Tensor<R>& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  TensorNode<R>* root = loss.node().get();
  if (!root->requires_grad) return;  // no parameters reachable

  // Reverse postorder = topological order: children before parents.
  std::vector<TensorNode<R>*> order;
  {
    std::unordered_set<TensorNode<R>*> visited;
    std::vector<std::pair<TensorNode<R>*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode<R>* p = node->parents[next++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    std::reverse(order.begin(), order.end());
  }

  for (TensorNode<R>* n : order) n->tmp.assign(n->value.size(), R(0));
  root->tmp[0] = R(1);
  for (TensorNode<R>* n : order)
    if (n->backprop) n->backprop(*n);
  for (TensorNode<R>* n : order) {
    if (n->grad.empty()) n->grad.assign(n->value.size(), R(0));
    const size_t sz = n->value.size();
    for (size_t i = 0; i < sz; ++i) n->grad[i] += n->tmp[i];
    n->tmp.clear();
    n->tmp.shrink_to_fit();
  }
}

// ------------------------------------------------------------- elementwise

namespace detail {
template <class R>
void check_same_shape(const Tensor<R>& a, const Tensor<R>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}
}  // namespace detail

template <class R>
Tensor<R> add(const Tensor<R>& a, const Tensor<R>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<R> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<R>& self) {
    if (an->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) an->tmp[i] += self.tmp[i];
    if (bn->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) bn->tmp[i] += self.tmp[i];
  });
}

template <class R>
Tensor<R> sub(const Tensor<R>& a, const Tensor<R>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<R> out(a.data());
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<R>& self) {
    if (an->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) an->tmp[i] += self.tmp[i];
    if (bn->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) bn->tmp[i] -= self.tmp[i];
  });
}

template <class R>
Tensor<R> mul(const Tensor<R>& a, const Tensor<R>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<R>& self) {
    if (an->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) an->tmp[i] += self.tmp[i] * bn->value[i];
    if (bn->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) bn->tmp[i] += self.tmp[i] * an->value[i];
  });
}

template <class R>
Tensor<R> ew_div(const Tensor<R>& a, const Tensor<R>& b) {
  detail::check_same_shape(a, b, "ew_div");
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) {
      const R inv = R(1) / bn->value[i];
      if (an->requires_grad) an->tmp[i] += self.tmp[i] * inv;
      if (bn->requires_grad) bn->tmp[i] -= self.tmp[i] * an->value[i] * inv * inv;
    }
  });
}

// ties go to a
template <class R>
Tensor<R> ew_max(const Tensor<R>& a, const Tensor<R>& b) {
  detail::check_same_shape(a, b, "ew_max");
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] >= bv[i] ? av[i] : bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) {
      if (an->value[i] >= bn->value[i]) {
        if (an->requires_grad) an->tmp[i] += self.tmp[i];
      } else if (bn->requires_grad) {
        bn->tmp[i] += self.tmp[i];
      }
    }
  });
}

template <class R>
Tensor<R> ew_min(const Tensor<R>& a, const Tensor<R>& b) {
  detail::check_same_shape(a, b, "ew_min");
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] <= bv[i] ? av[i] : bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) {
      if (an->value[i] <= bn->value[i]) {
        if (an->requires_grad) an->tmp[i] += self.tmp[i];
      } else if (bn->requires_grad) {
        bn->tmp[i] += self.tmp[i];
      }
    }
  });
}

template <class R>
Tensor<R> scale(const Tensor<R>& a, double c) {
  std::vector<R> out(a.data());
  for (auto& v : out) v = static_cast<R>(v * c);
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a}, [an, c](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i)
      an->tmp[i] += static_cast<R>(self.tmp[i] * c);
  });
}

template <class R>
Tensor<R> add_scalar(const Tensor<R>& a, double c) {
  std::vector<R> out(a.data());
  for (auto& v : out) v = static_cast<R>(v + c);
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a}, [an](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) an->tmp[i] += self.tmp[i];
  });
}

template <class R>
Tensor<R> relu(const Tensor<R>& a) {
  std::vector<R> out(a.data());
  for (auto& v : out) v = v > R(0) ? v : R(0);
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a}, [an](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i)
      if (an->value[i] > R(0)) an->tmp[i] += self.tmp[i];
  });
}

template <class R>
Tensor<R> sigmoid(const Tensor<R>& a) {
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  for (size_t i = 0; i < out.size(); ++i) {
    const R x = av[i];
    out[i] = x >= R(0) ? R(1) / (R(1) + std::exp(-x))
                       : std::exp(x) / (R(1) + std::exp(x));
  }
  auto saved = out;
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a},
                              [an, saved = std::move(saved)](TensorNode<R>& self) {
                                for (size_t i = 0; i < self.tmp.size(); ++i)
                                  an->tmp[i] += self.tmp[i] * saved[i] * (R(1) - saved[i]);
                              });
}

// softplus(x) = log(1 + e^x), evaluated stably; derivative is sigmoid(x).
template <class R>
Tensor<R> softplus(const Tensor<R>& a) {
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  for (size_t i = 0; i < out.size(); ++i) {
    const R x = av[i];
    out[i] = std::max(x, R(0)) + std::log1p(std::exp(-std::abs(x)));
  }
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a}, [an](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) {
      const R x = an->value[i];
      const R s = x >= R(0) ? R(1) / (R(1) + std::exp(-x)) : std::exp(x) / (R(1) + std::exp(x));
      an->tmp[i] += self.tmp[i] * s;
    }
  });
}

template <class R>
Tensor<R> abs_val(const Tensor<R>& a) {
  std::vector<R> out(a.data());
  for (auto& v : out) v = std::abs(v);
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a}, [an](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) {
      const R x = an->value[i];
      if (x > R(0)) an->tmp[i] += self.tmp[i];
      else if (x < R(0)) an->tmp[i] -= self.tmp[i];
    }
  });
}

// Huber penalty with transition at 1: 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
template <class R>
Tensor<R> smooth_l1(const Tensor<R>& a) {
  std::vector<R> out(a.numel());
  const auto& av = a.data();
  for (size_t i = 0; i < out.size(); ++i) {
    const R x = av[i];
    out[i] = std::abs(x) < R(1) ? R(0.5) * x * x : std::abs(x) - R(0.5);
  }
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a}, [an](TensorNode<R>& self) {
    for (size_t i = 0; i < self.tmp.size(); ++i) {
      const R x = an->value[i];
      const R d = std::abs(x) < R(1) ? x : (x > R(0) ? R(1) : R(-1));
      an->tmp[i] += self.tmp[i] * d;
    }
  });
}

// Adds e (whose shape must be a trailing suffix of x's shape) to every leading
// slice of x. Backward sums the leading dimensions into e.
template <class R>
Tensor<R> add_broadcast(const Tensor<R>& x, const Tensor<R>& e) {
  const auto& xs = x.shape();
  const auto& es = e.shape();
  if (es.size() > xs.size() ||
      !std::equal(es.begin(), es.end(), xs.end() - static_cast<long>(es.size())))
    throw ShapeError("add_broadcast: " + shape_str(es) + " is not a suffix of " + shape_str(xs));
  const size_t block = static_cast<size_t>(shape_numel(es));
  std::vector<R> out(x.data());
  const auto& ev = e.data();
  for (size_t off = 0; off < out.size(); off += block)
    for (size_t i = 0; i < block; ++i) out[off + i] += ev[i];
  auto* xn = x.node().get();
  auto* en = e.node().get();
  return detail::make_node<R>(xs, std::move(out), {x, e}, [xn, en, block](TensorNode<R>& self) {
    if (xn->requires_grad)
      for (size_t i = 0; i < self.tmp.size(); ++i) xn->tmp[i] += self.tmp[i];
    if (en->requires_grad)
      for (size_t off = 0; off < self.tmp.size(); off += block)
        for (size_t i = 0; i < block; ++i) en->tmp[i] += self.tmp[off + i];
  });
}

// ------------------------------------------------------------------ matmul

namespace detail {
// C[M,N] += A[M,K] * B[K,N], all row-major.
template <class R>
void gemm_acc(const R* a, const R* b, R* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const R* arow = a + static_cast<size_t>(i) * k;
    R* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const R av = arow[p];
      if (av == R(0)) continue;
      const R* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <class R>
void gemm_bt_acc(const R* a, const R* b, R* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const R* arow = a + static_cast<size_t>(i) * k;
    R* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const R* brow = b + static_cast<size_t>(j) * k;
      R acc = R(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <class R>
void gemm_at_acc(const R* a, const R* b, R* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const R* arow = a + static_cast<size_t>(i) * k;
    const R* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const R av = arow[p];
      if (av == R(0)) continue;
      R* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace detail

template <class R>
Tensor<R> matmul(const Tensor<R>& a, const Tensor<R>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<R> out(static_cast<size_t>(m) * n, R(0));
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>({m, n}, std::move(out), {a, b},
                              [an, bn, m, k, n](TensorNode<R>& self) {
                                if (an->requires_grad)
                                  detail::gemm_bt_acc(self.tmp.data(), bn->value.data(),
                                                      an->tmp.data(), m, n, k);
                                if (bn->requires_grad)
                                  detail::gemm_at_acc(an->value.data(), self.tmp.data(),
                                                      bn->tmp.data(), m, k, n);
                              });
}

// y = x . w + b over the last axis of x; x may have any leading shape.
template <class R>
Tensor<R> linear(const Tensor<R>& x, const Tensor<R>& w, const Tensor<R>& b) {
  if (x.rank() < 1 || w.rank() != 2 || x.dim(x.rank() - 1) != w.dim(0))
    throw ShapeError("linear: input shape " + shape_str(x.shape()) +
                     " incompatible with weight shape " + shape_str(w.shape()));
  const int in = w.dim(0), out_dim = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != out_dim)
    throw ShapeError("linear: bias shape " + shape_str(b.shape()) +
                     " incompatible with weight shape " + shape_str(w.shape()));
  const int m = static_cast<int>(x.numel() / in);
  std::vector<R> out(static_cast<size_t>(m) * out_dim);
  const auto& bv = b.data();
  for (int i = 0; i < m; ++i)
    std::copy(bv.begin(), bv.end(), out.begin() + static_cast<size_t>(i) * out_dim);
  detail::gemm_acc(x.data().data(), w.data().data(), out.data(), m, in, out_dim);

  std::vector<int> oshape(x.shape());
  oshape.back() = out_dim;
  auto* xn = x.node().get();
  auto* wn = w.node().get();
  auto* bn = b.node().get();
  return detail::make_node<R>(std::move(oshape), std::move(out), {x, w, b},
                              [xn, wn, bn, m, in, out_dim](TensorNode<R>& self) {
                                if (xn->requires_grad)
                                  detail::gemm_bt_acc(self.tmp.data(), wn->value.data(),
                                                      xn->tmp.data(), m, out_dim, in);
                                if (wn->requires_grad)
                                  detail::gemm_at_acc(xn->value.data(), self.tmp.data(),
                                                      wn->tmp.data(), m, in, out_dim);
                                if (bn->requires_grad) {
                                  for (int i = 0; i < m; ++i) {
                                    const R* row = self.tmp.data() + static_cast<size_t>(i) * out_dim;
                                    for (int j = 0; j < out_dim; ++j) bn->tmp[j] += row[j];
                                  }
                                }
                              });
}

// -------------------------------------------------------------- reductions

template <class R>
Tensor<R> sum_all(const Tensor<R>& a) {
  R s = R(0);
  for (R v : a.data()) s += v;
  auto* an = a.node().get();
  return detail::make_node<R>({1}, {s}, {a}, [an](TensorNode<R>& self) {
    const R g = self.tmp[0];
    for (auto& t : an->tmp) t += g;
  });
}

template <class R>
Tensor<R> mean_axis(const Tensor<R>& a, int axis) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(a.shape()));
  int64_t outer, mid, inner;
  detail::axis_strides(a.shape(), axis, &outer, &mid, &inner);
  if (mid == 0) throw ShapeError("mean_axis: empty axis in shape " + shape_str(a.shape()));
  std::vector<int> oshape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis) oshape.push_back(a.dim(i));
  if (oshape.empty()) oshape.push_back(1);
  std::vector<R> out(static_cast<size_t>(outer * inner), R(0));
  const R* av = a.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t m = 0; m < mid; ++m) {
      const R* src = av + (o * mid + m) * inner;
      R* dst = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  const R invm = R(1) / static_cast<R>(mid);
  for (auto& v : out) v *= invm;
  auto* an = a.node().get();
  return detail::make_node<R>(std::move(oshape), std::move(out), {a},
                              [an, outer, mid, inner, invm](TensorNode<R>& self) {
                                for (int64_t o = 0; o < outer; ++o)
                                  for (int64_t m = 0; m < mid; ++m) {
                                    R* dst = an->tmp.data() + (o * mid + m) * inner;
                                    const R* src = self.tmp.data() + o * inner;
                                    for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * invm;
                                  }
                              });
}

// -------------------------------------------------------------- structural

template <class R>
Tensor<R> reshape(const Tensor<R>& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto* an = a.node().get();
  return detail::make_node<R>(std::move(shape), std::vector<R>(a.data()), {a},
                              [an](TensorNode<R>& self) {
                                for (size_t i = 0; i < self.tmp.size(); ++i)
                                  an->tmp[i] += self.tmp[i];
                              });
}

template <class R>
Tensor<R> slice_axis(const Tensor<R>& a, int axis, int start, int len) {
  if (axis < 0 || axis >= a.rank())
    throw ShapeError("slice_axis: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(a.shape()));
  if (start < 0 || len < 0 || start + len > a.dim(axis))
    throw ShapeError("slice_axis: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") exceeds axis of size " +
                     std::to_string(a.dim(axis)));
  int64_t outer, mid, inner;
  detail::axis_strides(a.shape(), axis, &outer, &mid, &inner);
  std::vector<int> oshape(a.shape());
  oshape[static_cast<size_t>(axis)] = len;
  std::vector<R> out(static_cast<size_t>(outer * len * inner));
  const R* av = a.data().data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(av + (o * mid + start) * inner, av + (o * mid + start + len) * inner,
              out.begin() + o * len * inner);
  auto* an = a.node().get();
  return detail::make_node<R>(std::move(oshape), std::move(out), {a},
                              [an, outer, mid, inner, start, len](TensorNode<R>& self) {
                                for (int64_t o = 0; o < outer; ++o) {
                                  R* dst = an->tmp.data() + (o * mid + start) * inner;
                                  const R* src = self.tmp.data() + o * len * inner;
                                  for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                                }
                              });
}

// Row `index` along axis 0; the leading axis is dropped from the shape.
template <class R>
Tensor<R> select0(const Tensor<R>& a, int index) {
  if (a.rank() < 1 || index < 0 || index >= a.dim(0))
    throw ShapeError("select0: index " + std::to_string(index) + " out of range for shape " +
                     shape_str(a.shape()));
  std::vector<int> oshape(a.shape().begin() + 1, a.shape().end());
  if (oshape.empty()) oshape.push_back(1);
  const int64_t block = shape_numel(oshape);
  std::vector<R> out(a.data().begin() + index * block, a.data().begin() + (index + 1) * block);
  auto* an = a.node().get();
  return detail::make_node<R>(std::move(oshape), std::move(out), {a},
                              [an, index, block](TensorNode<R>& self) {
                                R* dst = an->tmp.data() + index * block;
                                for (int64_t i = 0; i < block; ++i) dst[i] += self.tmp[i];
                              });
}

template <class R>
Tensor<R> concat(const std::vector<Tensor<R>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank)
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
  int total_mid = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank)
      throw ShapeError("concat: rank mismatch " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.dim(i) != parts[0].dim(i))
        throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
    total_mid += p.dim(axis);
  }
  std::vector<int> oshape(parts[0].shape());
  oshape[static_cast<size_t>(axis)] = total_mid;
  int64_t outer, omid, inner;
  detail::axis_strides(oshape, axis, &outer, &omid, &inner);
  std::vector<R> out(static_cast<size_t>(outer * omid * inner));
  int64_t mid_off = 0;
  for (const auto& p : parts) {
    const int64_t pmid = p.dim(axis);
    const R* pv = p.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pv + o * pmid * inner, pv + (o + 1) * pmid * inner,
                out.begin() + (o * omid + mid_off) * inner);
    mid_off += pmid;
  }
  struct Piece {
    TensorNode<R>* node;
    int64_t mid_off, pmid;
    bool rg;
  };
  std::vector<Piece> pieces;
  mid_off = 0;
  for (const auto& p : parts) {
    pieces.push_back({p.node().get(), mid_off, p.dim(axis), p.requires_grad()});
    mid_off += p.dim(axis);
  }
  return detail::make_node<R>(std::move(oshape), std::move(out), parts,
                              [pieces = std::move(pieces), outer, omid, inner](TensorNode<R>& self) {
                                for (const auto& pc : pieces) {
                                  if (!pc.rg) continue;
                                  for (int64_t o = 0; o < outer; ++o) {
                                    const R* src =
                                        self.tmp.data() + (o * omid + pc.mid_off) * inner;
                                    R* dst = pc.node->tmp.data() + o * pc.pmid * inner;
                                    for (int64_t i = 0; i < pc.pmid * inner; ++i) dst[i] += src[i];
                                  }
                                }
                              });
}

// x with v added to row `index` of axis 0 only.
template <class R>
Tensor<R> add_at_row(const Tensor<R>& x, int index, const Tensor<R>& v) {
  if (x.rank() < 1 || index < 0 || index >= x.dim(0))
    throw ShapeError("add_at_row: index " + std::to_string(index) + " out of range for shape " +
                     shape_str(x.shape()));
  std::vector<int> tail(x.shape().begin() + 1, x.shape().end());
  if (tail.empty()) tail.push_back(1);
  if (v.shape() != tail)
    throw ShapeError("add_at_row: row shape " + shape_str(v.shape()) + " does not match " +
                     shape_str(tail));
  const int64_t block = shape_numel(tail);
  std::vector<R> out(x.data());
  const auto& vv = v.data();
  for (int64_t i = 0; i < block; ++i) out[index * block + i] += vv[i];
  auto* xn = x.node().get();
  auto* vn = v.node().get();
  return detail::make_node<R>(x.shape(), std::move(out), {x, v},
                              [xn, vn, index, block](TensorNode<R>& self) {
                                if (xn->requires_grad)
                                  for (size_t i = 0; i < self.tmp.size(); ++i)
                                    xn->tmp[i] += self.tmp[i];
                                if (vn->requires_grad) {
                                  const R* src = self.tmp.data() + index * block;
                                  for (int64_t i = 0; i < block; ++i) vn->tmp[i] += src[i];
                                }
                              });
}

// Value copy that no gradient flows through.
template <class R>
Tensor<R> detach(const Tensor<R>& a) {
  return Tensor<R>::from_data(a.shape(), a.data(), false);
}

// ------------------------------------------------- softmax / norm / losses

// Numerically stable softmax over the last axis.
template <class R>
Tensor<R> softmax(const Tensor<R>& a) {
  const int k = a.rank() >= 1 ? a.dim(a.rank() - 1) : 0;
  if (k < 1) throw ShapeError("softmax: empty last axis in shape " + shape_str(a.shape()));
  const int rows = static_cast<int>(a.numel() / k);
  std::vector<R> out(a.numel());
  const R* av = a.data().data();
  for (int r = 0; r < rows; ++r) {
    const R* x = av + static_cast<size_t>(r) * k;
    R* y = out.data() + static_cast<size_t>(r) * k;
    R mx = x[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, x[i]);
    R sum = R(0);
    for (int i = 0; i < k; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    const R inv = R(1) / sum;
    for (int i = 0; i < k; ++i) y[i] *= inv;
  }
  auto saved = out;
  auto* an = a.node().get();
  return detail::make_node<R>(a.shape(), std::move(out), {a},
                              [an, saved = std::move(saved), rows, k](TensorNode<R>& self) {
                                for (int r = 0; r < rows; ++r) {
                                  const R* w = saved.data() + static_cast<size_t>(r) * k;
                                  const R* dy = self.tmp.data() + static_cast<size_t>(r) * k;
                                  R dot = R(0);
                                  for (int i = 0; i < k; ++i) dot += w[i] * dy[i];
                                  R* dx = an->tmp.data() + static_cast<size_t>(r) * k;
                                  for (int i = 0; i < k; ++i) dx[i] += w[i] * (dy[i] - dot);
                                }
                              });
}

// Standardizes the last axis to zero mean / unit variance, then applies the
// gamma/beta affine. Variance uses the biased (1/D) estimator.
template <class R>
Tensor<R> layer_norm(const Tensor<R>& x, const Tensor<R>& gamma, const Tensor<R>& beta,
                     double eps) {
  const int d = x.rank() >= 1 ? x.dim(x.rank() - 1) : 0;
  if (d < 1) throw ShapeError("layer_norm: empty last axis in shape " + shape_str(x.shape()));
  if (eps < 0) throw ValidationError("layer_norm: eps must be >= 0");
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d)
    throw ShapeError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");
  const int rows = static_cast<int>(x.numel() / d);
  std::vector<R> out(x.numel());
  std::vector<R> xhat(x.numel());
  std::vector<R> rstd(static_cast<size_t>(rows));
  const R* xv = x.data().data();
  const R* gv = gamma.data().data();
  const R* bv = beta.data().data();
  for (int r = 0; r < rows; ++r) {
    const R* row = xv + static_cast<size_t>(r) * d;
    R mean = R(0);
    for (int i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<R>(d);
    R var = R(0);
    for (int i = 0; i < d; ++i) {
      const R c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<R>(d);
    const R rs = R(1) / std::sqrt(var + static_cast<R>(eps));
    rstd[static_cast<size_t>(r)] = rs;
    R* xh = xhat.data() + static_cast<size_t>(r) * d;
    R* y = out.data() + static_cast<size_t>(r) * d;
    for (int i = 0; i < d; ++i) {
      xh[i] = (row[i] - mean) * rs;
      y[i] = gv[i] * xh[i] + bv[i];
    }
  }
  auto* xn = x.node().get();
  auto* gn = gamma.node().get();
  auto* bn = beta.node().get();
  return detail::make_node<R>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](TensorNode<R>& self) {
        for (int r = 0; r < rows; ++r) {
          const R* dy = self.tmp.data() + static_cast<size_t>(r) * d;
          const R* xh = xhat.data() + static_cast<size_t>(r) * d;
          if (gn->requires_grad)
            for (int i = 0; i < d; ++i) gn->tmp[i] += dy[i] * xh[i];
          if (bn->requires_grad)
            for (int i = 0; i < d; ++i) bn->tmp[i] += dy[i];
          if (xn->requires_grad) {
            R m1 = R(0), m2 = R(0);
            for (int i = 0; i < d; ++i) {
              const R dxh = dy[i] * gn->value[i];
              m1 += dxh;
              m2 += dxh * xh[i];
            }
            m1 /= static_cast<R>(d);
            m2 /= static_cast<R>(d);
            R* dx = xn->tmp.data() + static_cast<size_t>(r) * d;
            const R rs = rstd[static_cast<size_t>(r)];
            for (int i = 0; i < d; ++i) {
              const R dxh = dy[i] * gn->value[i];
              dx[i] += rs * (dxh - m1 - xh[i] * m2);
            }
          }
        }
      });
}

// Weighted mean categorical cross-entropy over rows of [N, C] logits:
//   (1/N) * sum_i w_i * (logsumexp(l_i) - l_i[label_i])
template <class R>
Tensor<R> cross_entropy(const Tensor<R>& logits, const std::vector<int>& labels,
                        const std::vector<double>& weights) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy: logits must be rank 2, got " + shape_str(logits.shape()));
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n || static_cast<int>(weights.size()) != n)
    throw ShapeError("cross_entropy: need one label and weight per row");
  for (int i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= c)
      throw ValidationError("cross_entropy: label " + std::to_string(labels[i]) +
                            " out of vocabulary of size " + std::to_string(c));
  std::vector<R> probs(logits.numel());
  const R* lv = logits.data().data();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const R* row = lv + static_cast<size_t>(i) * c;
    R mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    R sum = R(0);
    R* p = probs.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      p[j] = std::exp(row[j] - mx);
      sum += p[j];
    }
    const R inv = R(1) / sum;
    for (int j = 0; j < c; ++j) p[j] *= inv;
    total += weights[static_cast<size_t>(i)] *
             (std::log(static_cast<double>(sum)) + static_cast<double>(mx) -
              static_cast<double>(row[labels[static_cast<size_t>(i)]]));
  }
  total /= n;
  auto* ln = logits.node().get();
  return detail::make_node<R>(
      {1}, {static_cast<R>(total)}, {logits},
      [ln, probs = std::move(probs), labels, weights, n, c](TensorNode<R>& self) {
        const R up = self.tmp[0];
        for (int i = 0; i < n; ++i) {
          const R wi = static_cast<R>(weights[static_cast<size_t>(i)]) / static_cast<R>(n);
          const R* p = probs.data() + static_cast<size_t>(i) * c;
          R* dl = ln->tmp.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) dl[j] += up * wi * p[j];
          dl[labels[static_cast<size_t>(i)]] -= up * wi;
        }
      });
}

// ------------------------------------------------------------------- misc

template <class R>
bool all_finite(const Tensor<R>& t) {
  for (R v : t.data())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

}  // namespace nextact
