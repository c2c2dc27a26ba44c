#pragma once

#include <vector>

#include "nextact/nn.hpp"

namespace nextact {

// The encoder's output plus the three views downstream modules consume.
template <class R>
struct EncoderMemory {
  Tensor<R> z;             // [T, H*W+Q, D]
  Tensor<R> z_lt;          // [H*W+Q, D]   last frame, all tokens
  Tensor<R> video_memory;  // [T, H*W, D]  spatial tokens only
  Tensor<R> z_t_grid;      // [H, W, D]    last frame spatial tokens, unflattened
};

// Slices Z into (z_lt, video_memory, z_t_grid). Values are copied; mutating
// one view never aliases another.
template <class R>
EncoderMemory<R> split_memory(const Tensor<R>& z, int h, int w, int q) {
  if (z.rank() != 3)
    throw ShapeError("split_memory: expected rank-3 [T,H*W+Q,D], got " + shape_str(z.shape()));
  const int t = z.dim(0);
  const int d = z.dim(2);
  if (z.dim(1) != h * w + q)
    throw ShapeError("split_memory: token axis " + std::to_string(z.dim(1)) + " != H*W+Q = " +
                     std::to_string(h * w + q));
  EncoderMemory<R> mem;
  mem.z = z;
  mem.z_lt = select0(z, t - 1);
  mem.video_memory = slice_axis(z, 1, 0, h * w);
  mem.z_t_grid = reshape(slice_axis(mem.z_lt, 0, 0, h * w), {h, w, d});
  return mem;
}

// Pre-norm transformer encoder over the full T*(H*W+Q) token set. `per_frame`
// restricts attention to tokens of the same frame via a block-diagonal mask;
// the default attends jointly across frames.
template <class R>
struct Encoder {
  int h = 0, w = 0, q = 0, d = 0;
  bool per_frame = false;
  std::vector<TransformerBlock<R>> blocks;

  Encoder() = default;
  Encoder(ParamSet<R>& ps, const std::string& name, int h_, int w_, int q_, int d_, int heads,
          int layers, int ffn_hidden, bool per_frame_, Rng& rng)
      : h(h_), w(w_), q(q_), d(d_), per_frame(per_frame_) {
    if (layers < 1) throw ValidationError("encoder: need at least one layer");
    if (d % heads != 0)
      throw ShapeError("encoder: D=" + std::to_string(d) + " not divisible into " +
                       std::to_string(heads) + " heads");
    for (int l = 0; l < layers; ++l)
      blocks.emplace_back(ps, name + ".block" + std::to_string(l), d, heads, ffn_hidden, rng);
  }

  EncoderMemory<R> operator()(const Tensor<R>& tokens) const {
    if (tokens.rank() != 3 || tokens.dim(1) != h * w + q || tokens.dim(2) != d)
      throw ShapeError("encoder: tokens " + shape_str(tokens.shape()) + ", expected [T," +
                       std::to_string(h * w + q) + "," + std::to_string(d) + "]");
    const int t = tokens.dim(0);
    const int per = h * w + q;
    Tensor<R> x = reshape(tokens, {t * per, d});
    AttnMask mask;
    const AttnMask* mp = nullptr;
    if (per_frame) {
      mask = AttnMask::block_diagonal(t, per);
      mp = &mask;
    }
    for (const auto& block : blocks) x = block(x, mp);
    return split_memory(reshape(x, {t, per, d}), h, w, q);
  }
};

}  // namespace nextact
