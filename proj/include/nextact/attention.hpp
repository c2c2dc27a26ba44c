#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nextact/tensor.hpp"

namespace nextact {

// Boolean visibility mask for attention: true means the query row may attend
// to the key column. Masked positions receive exactly zero weight, not a
// large-negative-logit approximation, so causality violations are impossible
// rather than merely unlikely.
struct AttnMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> visible;  // rows * cols, row-major

  AttnMask() = default;
  AttnMask(int r, int c, bool init) : rows(r), cols(c), visible(static_cast<size_t>(r) * c, init) {}

  bool at(int i, int j) const { return visible[static_cast<size_t>(i) * cols + j] != 0; }
  void set(int i, int j, bool v) { visible[static_cast<size_t>(i) * cols + j] = v ? 1 : 0; }

  // Row i sees columns 0..i.
  static AttnMask causal(int n) {
    AttnMask m(n, n, false);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) m.set(i, j, true);
    return m;
  }

  // Block-diagonal over `groups` consecutive blocks of `per_group` tokens.
  static AttnMask block_diagonal(int groups, int per_group) {
    AttnMask m(groups * per_group, groups * per_group, false);
    for (int g = 0; g < groups; ++g)
      for (int i = 0; i < per_group; ++i)
        for (int j = 0; j < per_group; ++j)
          m.set(g * per_group + i, g * per_group + j, true);
    return m;
  }
};

// Per-head attention weights captured from a forward pass, for tests and
// causality audits. w[(h * rows + i) * cols + j] is head h's weight of query
// i on key j.
template <class R>
struct AttnWeights {
  int heads = 0;
  int rows = 0;
  int cols = 0;
  std::vector<R> w;

  R at(int h, int i, int j) const {
    return w[(static_cast<size_t>(h) * rows + i) * cols + j];
  }
};

// Multi-head scaled dot-product attention followed by an output projection.
//
// q [Lq, D], k [Lk, D], v [Lk, D]; D must divide evenly into `heads`. Heads
// are contiguous D/heads slices of the embedding axis. Scores are scaled by
// 1/sqrt(D/heads); softmax runs over visible keys only. `mask` may be null
// for full visibility. w_out [D, D] and b_out [D] form the projection; pass
// parameters owned by the caller so the op stays stateless.
//
// A row with no visible key has no valid distribution and raises a
// ValidationError naming the row.
template <class R>
Tensor<R> multi_head_attention(const Tensor<R>& q, const Tensor<R>& k, const Tensor<R>& v,
                               int heads, const AttnMask* mask, const Tensor<R>& w_out,
                               const Tensor<R>& b_out, AttnWeights<R>* weights_out = nullptr) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw ShapeError("attention: q/k/v must be rank 2");
  const int lq = q.dim(0), d = q.dim(1);
  const int lk = k.dim(0);
  if (k.dim(1) != d || v.dim(1) != d || v.dim(0) != lk)
    throw ShapeError("attention: shape mismatch q" + shape_str(q.shape()) + " k" +
                     shape_str(k.shape()) + " v" + shape_str(v.shape()));
  if (heads < 1 || d % heads != 0)
    throw ShapeError("attention: embedding dim " + std::to_string(d) +
                     " not divisible into " + std::to_string(heads) + " heads");
  if (mask && (mask->rows != lq || mask->cols != lk))
    throw ShapeError("attention: mask is " + std::to_string(mask->rows) + "x" +
                     std::to_string(mask->cols) + ", expected " + std::to_string(lq) + "x" +
                     std::to_string(lk));
  const int dh = d / heads;
  const R inv_scale = R(1) / std::sqrt(static_cast<R>(dh));

  // Weights for all heads; exactly zero at masked positions.
  std::vector<R> weights(static_cast<size_t>(heads) * lq * lk, R(0));
  std::vector<R> core(static_cast<size_t>(lq) * d, R(0));
  const R* qv = q.data().data();
  const R* kv = k.data().data();
  const R* vv = v.data().data();

  std::vector<R> scores(static_cast<size_t>(lk));
  for (int i = 0; i < lq; ++i) {
    bool any_visible = !mask;
    if (mask)
      for (int j = 0; j < lk && !any_visible; ++j) any_visible = mask->at(i, j);
    if (!any_visible)
      throw ValidationError("attention: query row " + std::to_string(i) +
                            " has no visible keys");
    for (int h = 0; h < heads; ++h) {
      const R* qh = qv + static_cast<size_t>(i) * d + static_cast<size_t>(h) * dh;
      R mx = R(0);
      bool first = true;
      for (int j = 0; j < lk; ++j) {
        if (mask && !mask->at(i, j)) continue;
        const R* kh = kv + static_cast<size_t>(j) * d + static_cast<size_t>(h) * dh;
        R s = R(0);
        for (int t = 0; t < dh; ++t) s += qh[t] * kh[t];
        s *= inv_scale;
        scores[static_cast<size_t>(j)] = s;
        if (first || s > mx) mx = s;
        first = false;
      }
      R sum = R(0);
      R* wrow = weights.data() + (static_cast<size_t>(h) * lq + i) * lk;
      for (int j = 0; j < lk; ++j) {
        if (mask && !mask->at(i, j)) continue;
        const R e = std::exp(scores[static_cast<size_t>(j)] - mx);
        wrow[j] = e;
        sum += e;
      }
      const R inv = R(1) / sum;
      R* orow = core.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * dh;
      for (int j = 0; j < lk; ++j) {
        if (mask && !mask->at(i, j)) continue;
        wrow[j] *= inv;
        const R* vh = vv + static_cast<size_t>(j) * d + static_cast<size_t>(h) * dh;
        const R wj = wrow[j];
        for (int t = 0; t < dh; ++t) orow[t] += wj * vh[t];
      }
    }
  }

  if (weights_out) {
    weights_out->heads = heads;
    weights_out->rows = lq;
    weights_out->cols = lk;
    weights_out->w = weights;
  }

  auto* qn = q.node().get();
  auto* kn = k.node().get();
  auto* vn = v.node().get();
  Tensor<R> ao = detail::make_node<R>(
      {lq, d}, std::move(core), {q, k, v},
      [qn, kn, vn, weights = std::move(weights), heads, lq, lk, d, dh,
       inv_scale](TensorNode<R>& self) {
        std::vector<R> dw(static_cast<size_t>(lk));
        for (int i = 0; i < lq; ++i) {
          for (int h = 0; h < heads; ++h) {
            const R* wrow = weights.data() + (static_cast<size_t>(h) * lq + i) * lk;
            const R* dao = self.tmp.data() + static_cast<size_t>(i) * d + static_cast<size_t>(h) * dh;
            // d(weight i,j) and softmax backward over the row.
            R dot = R(0);
            for (int j = 0; j < lk; ++j) {
              if (wrow[j] == R(0)) {
                dw[static_cast<size_t>(j)] = R(0);
                continue;
              }
              const R* vh = vn->value.data() + static_cast<size_t>(j) * d +
                            static_cast<size_t>(h) * dh;
              R s = R(0);
              for (int t = 0; t < dh; ++t) s += dao[t] * vh[t];
              dw[static_cast<size_t>(j)] = s;
              dot += wrow[j] * s;
            }
            const R* qh = qn->value.data() + static_cast<size_t>(i) * d +
                          static_cast<size_t>(h) * dh;
            R* dqh = qn->requires_grad ? qn->tmp.data() + static_cast<size_t>(i) * d +
                                             static_cast<size_t>(h) * dh
                                       : nullptr;
            for (int j = 0; j < lk; ++j) {
              const R wj = wrow[j];
              if (wj == R(0)) continue;
              if (vn->requires_grad) {
                R* dvh = vn->tmp.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * dh;
                for (int t = 0; t < dh; ++t) dvh[t] += wj * dao[t];
              }
              const R ds = wj * (dw[static_cast<size_t>(j)] - dot) * inv_scale;
              if (ds == R(0)) continue;
              const R* kh = kn->value.data() + static_cast<size_t>(j) * d +
                            static_cast<size_t>(h) * dh;
              if (dqh)
                for (int t = 0; t < dh; ++t) dqh[t] += ds * kh[t];
              if (kn->requires_grad) {
                R* dkh = kn->tmp.data() + static_cast<size_t>(j) * d + static_cast<size_t>(h) * dh;
                for (int t = 0; t < dh; ++t) dkh[t] += ds * qh[t];
              }
            }
          }
        }
      });
  return linear(ao, w_out, b_out);
}

}  // namespace nextact
