#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "nextact/attention.hpp"
#include "nextact/rng.hpp"
#include "nextact/tensor.hpp"

namespace nextact {

// Ordered registry of named trainable tensors. Order is declaration order,
// which fixes both initialization draws and checkpoint layout.
template <class R>
class ParamSet {
 public:
  Tensor<R> add(const std::string& name, Tensor<R> t) {
    if (find(name))
      throw ValidationError("duplicate parameter name '" + name + "'");
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
  }

  Tensor<R>* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  std::vector<std::pair<std::string, Tensor<R>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<R>>>& items() const { return items_; }

  void zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

  int64_t total_numel() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor<R>>> items_;
};

// Turns gradient tracking off for every parameter in scope. Ops record no
// graph when no input requires grad, so guarded forward passes are pure
// evaluation: cheaper and impossible to backpropagate through.
template <class R>
class NoGradGuard {
 public:
  explicit NoGradGuard(ParamSet<R>& params) : params_(params) {
    saved_.reserve(params_.items().size());
    for (auto& [name, t] : params_.items()) {
      saved_.push_back(t.node()->requires_grad);
      t.node()->requires_grad = false;
    }
  }
  ~NoGradGuard() {
    size_t i = 0;
    for (auto& [name, t] : params_.items()) t.node()->requires_grad = saved_[i++];
  }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  ParamSet<R>& params_;
  std::vector<bool> saved_;
};

// One SGD update with decoupled-from-nothing classic weight decay folded into
// the gradient: p <- p - lr * (g + wd * p). Grads are zeroed afterwards.
template <class R>
void sgd_step(ParamSet<R>& params, double lr, double weight_decay) {
  for (auto& [name, p] : params.items())
    if (!p.has_grad())
      throw ValidationError("sgd_step: uninitialized gradient for parameter '" + name + "'");
  for (auto& [name, p] : params.items()) {
    auto& w = p.data();
    auto& g = p.grad();
    for (size_t i = 0; i < w.size(); ++i)
      w[i] -= static_cast<R>(lr * (static_cast<double>(g[i]) +
                                   weight_decay * static_cast<double>(w[i])));
    p.zero_grad();
  }
}

namespace init {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class R>
void fan_in_uniform(Tensor<R>& w, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.data()) v = static_cast<R>(rng.uniform(-bound, bound));
}

template <class R>
void gaussian(Tensor<R>& t, double sigma, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<R>(rng.normal(0.0, sigma));
}

}  // namespace init

template <class R>
struct LinearLayer {
  Tensor<R> w;  // [in, out]
  Tensor<R> b;  // [out]

  LinearLayer() = default;
  LinearLayer(ParamSet<R>& ps, const std::string& name, int in, int out, Rng& rng) {
    w = ps.add(name + ".w", Tensor<R>::zeros({in, out}));
    b = ps.add(name + ".b", Tensor<R>::zeros({out}));
    init::fan_in_uniform(w, in, rng);
  }

  Tensor<R> operator()(const Tensor<R>& x) const { return linear(x, w, b); }
};

template <class R>
struct LayerNormLayer {
  Tensor<R> gamma;
  Tensor<R> beta;
  double eps = 1e-5;

  LayerNormLayer() = default;
  LayerNormLayer(ParamSet<R>& ps, const std::string& name, int d, double eps_ = 1e-5)
      : eps(eps_) {
    gamma = ps.add(name + ".gamma", Tensor<R>::filled({d}, R(1)));
    beta = ps.add(name + ".beta", Tensor<R>::zeros({d}));
  }

  Tensor<R> operator()(const Tensor<R>& x) const { return layer_norm(x, gamma, beta, eps); }
};

// Fully connected stack with ReLU between layers and none after the last.
// dims = {in, hidden..., out}.
template <class R>
struct Mlp {
  std::vector<LinearLayer<R>> layers;

  Mlp() = default;
  Mlp(ParamSet<R>& ps, const std::string& name, const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw ValidationError("mlp '" + name + "' needs at least two dims");
    for (size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(ps, name + ".fc" + std::to_string(i), dims[i], dims[i + 1], rng);
  }

  Tensor<R> operator()(Tensor<R> x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = relu(x);
    }
    return x;
  }
};

// Attention with learned q/k/v/output projections. Query and key/value
// sources may differ (cross-attention).
template <class R>
struct MhaBlock {
  int heads = 1;
  LinearLayer<R> q_proj, k_proj, v_proj;
  Tensor<R> w_out, b_out;

  MhaBlock() = default;
  MhaBlock(ParamSet<R>& ps, const std::string& name, int d, int heads_, Rng& rng)
      : heads(heads_),
        q_proj(ps, name + ".q", d, d, rng),
        k_proj(ps, name + ".k", d, d, rng),
        v_proj(ps, name + ".v", d, d, rng) {
    w_out = ps.add(name + ".out.w", Tensor<R>::zeros({d, d}));
    b_out = ps.add(name + ".out.b", Tensor<R>::zeros({d}));
    init::fan_in_uniform(w_out, d, rng);
  }

  Tensor<R> operator()(const Tensor<R>& q_in, const Tensor<R>& kv_in, const AttnMask* mask,
                       AttnWeights<R>* weights_out = nullptr) const {
    return multi_head_attention(q_proj(q_in), k_proj(kv_in), v_proj(kv_in), heads, mask, w_out,
                                b_out, weights_out);
  }
};

// Pre-norm transformer block: x += Attn(LN(x)); x += FFN(LN(x)). With the
// attention output projection and the second FFN weight at zero the block is
// the identity, which keeps fresh stacks well behaved.
template <class R>
struct TransformerBlock {
  LayerNormLayer<R> ln1, ln2;
  MhaBlock<R> attn;
  LinearLayer<R> ffn1, ffn2;

  TransformerBlock() = default;
  TransformerBlock(ParamSet<R>& ps, const std::string& name, int d, int heads, int ffn_hidden,
                   Rng& rng)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        attn(ps, name + ".attn", d, heads, rng),
        ffn1(ps, name + ".ffn1", d, ffn_hidden, rng),
        ffn2(ps, name + ".ffn2", ffn_hidden, d, rng) {}

  // Self-attention form.
  Tensor<R> operator()(const Tensor<R>& x, const AttnMask* mask,
                       AttnWeights<R>* weights_out = nullptr) const {
    Tensor<R> n = ln1(x);
    Tensor<R> h = add(x, attn(n, n, mask, weights_out));
    return add(h, ffn2(relu(ffn1(ln2(h)))));
  }
};

// Pre-norm decoder block: self-attention over the queries, cross-attention
// into the memory, then the FFN.
template <class R>
struct DecoderBlock {
  LayerNormLayer<R> ln1, ln2, ln3;
  MhaBlock<R> self_attn, cross_attn;
  LinearLayer<R> ffn1, ffn2;

  DecoderBlock() = default;
  DecoderBlock(ParamSet<R>& ps, const std::string& name, int d, int heads, int ffn_hidden,
               Rng& rng)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        ln3(ps, name + ".ln3", d),
        self_attn(ps, name + ".self", d, heads, rng),
        cross_attn(ps, name + ".cross", d, heads, rng),
        ffn1(ps, name + ".ffn1", d, ffn_hidden, rng),
        ffn2(ps, name + ".ffn2", ffn_hidden, d, rng) {}

  Tensor<R> operator()(const Tensor<R>& x, const Tensor<R>& memory, const AttnMask* self_mask,
                       const AttnMask* cross_mask,
                       AttnWeights<R>* cross_weights_out = nullptr) const {
    Tensor<R> q = ln1(x);
    Tensor<R> h = add(x, self_attn(q, q, self_mask));
    h = add(h, cross_attn(ln2(h), memory, cross_mask, cross_weights_out));
    return add(h, ffn2(relu(ffn1(ln3(h)))));
  }
};

}  // namespace nextact
