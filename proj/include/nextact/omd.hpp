#pragma once

#include <cmath>
#include <vector>

#include "nextact/data.hpp"
#include "nextact/features.hpp"
#include "nextact/nn.hpp"

namespace nextact {

// Object Motion Dynamics: detection boxes across frames become tokens, the
// tokens exchange information in one self-attention block, and the result is
// splat back onto the T x H x W grid at each box's center. Output is the
// trajectory ("background motion") feature grid.
template <class R>
struct ObjectMotionDynamics {
  int h = 0, w = 0, q = 0, d = 0;
  // Sampler direction: false = scatter (tokens splat additive mass onto the
  // grid), true = gather (each cell takes the weight-normalized average of the
  // tokens covering it). Scatter is the default and the tuned path.
  bool cell_average = false;
  Mlp<R> box_mlp;  // 4 -> D, shared across all slots
  LayerNormLayer<R> ln;
  MhaBlock<R> attn;

  ObjectMotionDynamics() = default;
  ObjectMotionDynamics(ParamSet<R>& ps, const std::string& name, int h_, int w_, int q_, int d_,
                       int heads, Rng& rng, bool cell_average_ = false)
      : h(h_),
        w(w_),
        q(q_),
        d(d_),
        cell_average(cell_average_),
        box_mlp(ps, name + ".box", {4, d_, d_}, rng),
        ln(ps, name + ".ln", d_),
        attn(ps, name + ".attn", d_, heads, rng) {}

  // Shared MLP over the 4 box coordinates (score excluded); dummy slots are
  // masked to exact zero tokens rather than MLP(0). T is taken from the
  // input, so shorter observed prefixes reuse the same parameters.
  Tensor<R> expand_boxes(const std::vector<DetectionSet>& ds_seq) const {
    const int t = static_cast<int>(ds_seq.size());
    if (t < 1) throw ShapeError("expand_boxes: empty detection sequence");
    std::vector<R> rows(static_cast<size_t>(t) * q * 4, R(0));
    std::vector<R> mask(static_cast<size_t>(t) * q * d, R(0));
    for (int f = 0; f < t; ++f) {
      if (static_cast<int>(ds_seq[static_cast<size_t>(f)].d.size()) != q)
        throw ShapeError("expand_boxes: detection set not padded to Q");
      for (int s = 0; s < q; ++s) {
        const Detection& det = ds_seq[static_cast<size_t>(f)].d[static_cast<size_t>(s)];
        if (det.is_dummy) continue;
        R* r = rows.data() + (static_cast<size_t>(f) * q + s) * 4;
        r[0] = static_cast<R>(det.box.x0);
        r[1] = static_cast<R>(det.box.y0);
        r[2] = static_cast<R>(det.box.x1);
        r[3] = static_cast<R>(det.box.y1);
        R* m = mask.data() + (static_cast<size_t>(f) * q + s) * d;
        for (int i = 0; i < d; ++i) m[i] = R(1);
      }
    }
    Tensor<R> x = Tensor<R>::from_data({t * q, 4}, std::move(rows));
    Tensor<R> m = Tensor<R>::from_data({t * q, d}, std::move(mask));
    return reshape(mul(box_mlp(x), m), {t, q, d});
  }

  // One pre-norm self-attention block over the flattened T*Q tokens with
  // temporal positional encoding. Dummy slots are masked out as keys; every
  // slot may attend to itself, so no row is ever fully masked. Dummy rows are
  // re-masked to zero on output.
  Tensor<R> omd_attend(const Tensor<R>& box_tokens, const std::vector<DetectionSet>& ds_seq)
      const {
    const int t = static_cast<int>(ds_seq.size());
    if (box_tokens.rank() != 3 || box_tokens.dim(0) != t || box_tokens.dim(1) != q ||
        box_tokens.dim(2) != d)
      throw ShapeError("omd_attend: tokens " + shape_str(box_tokens.shape()));
    const int n = t * q;
    AttnMask mask(n, n, false);
    std::vector<R> outmask(static_cast<size_t>(n) * d, R(0));
    for (int j = 0; j < n; ++j) {
      const bool real =
          !ds_seq[static_cast<size_t>(j / q)].d[static_cast<size_t>(j % q)].is_dummy;
      if (real) {
        for (int i = 0; i < n; ++i) mask.set(i, j, true);
        R* m = outmask.data() + static_cast<size_t>(j) * d;
        for (int i = 0; i < d; ++i) m[i] = R(1);
      }
      mask.set(j, j, true);
    }
    // Temporal encoding broadcast over the Q slots of each frame.
    const std::vector<R> frame_pe = make_temporal_pos_encoding<R>(t, d);
    std::vector<R> pe(static_cast<size_t>(n) * d);
    for (int f = 0; f < t; ++f)
      for (int s = 0; s < q; ++s)
        std::copy(frame_pe.begin() + static_cast<size_t>(f) * d,
                  frame_pe.begin() + static_cast<size_t>(f + 1) * d,
                  pe.begin() + (static_cast<size_t>(f) * q + s) * d);
    Tensor<R> x = add(reshape(box_tokens, {n, d}),
                      Tensor<R>::from_data({n, d}, std::move(pe)));
    Tensor<R> xn = ln(x);
    Tensor<R> y = add(x, attn(xn, xn, &mask));
    Tensor<R> m = Tensor<R>::from_data({n, d}, std::move(outmask));
    return reshape(mul(y, m), {t, q, d});
  }

  // Splats each real token at its box center onto the frame's H x W grid with
  // bilinear weights over the 4 nearest cell centers; contributions sum.
  // Centers at the canvas border lose the off-grid share of their weight.
  Tensor<R> sample_to_grid(const Tensor<R>& attended,
                           const std::vector<DetectionSet>& ds_seq) const {
    const int t = static_cast<int>(ds_seq.size());
    if (attended.rank() != 3 || attended.dim(0) != t || attended.dim(1) != q ||
        attended.dim(2) != d)
      throw ShapeError("sample_to_grid: tokens " + shape_str(attended.shape()));
    std::vector<Tensor<R>> frames;
    frames.reserve(static_cast<size_t>(t));
    for (int f = 0; f < t; ++f) {
      std::vector<R> splat(static_cast<size_t>(h) * w * q, R(0));
      for (int s = 0; s < q; ++s) {
        const Detection& det = ds_seq[static_cast<size_t>(f)].d[static_cast<size_t>(s)];
        if (det.is_dummy) continue;
        const double u = det.box.cx() * w - 0.5;  // continuous cell-center coords
        const double v = det.box.cy() * h - 0.5;
        const int gx0 = static_cast<int>(std::floor(u));
        const int gy0 = static_cast<int>(std::floor(v));
        const double fx = u - gx0;
        const double fy = v - gy0;
        const double wx[2] = {1.0 - fx, fx};
        const double wy[2] = {1.0 - fy, fy};
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int gx = gx0 + dx;
            const int gy = gy0 + dy;
            if (gx < 0 || gx >= w || gy < 0 || gy >= h) continue;
            const double wt = wx[dx] * wy[dy];
            if (wt == 0.0) continue;
            splat[(static_cast<size_t>(gy) * w + gx) * q + s] += static_cast<R>(wt);
          }
      }
      if (cell_average) {
        for (int cell = 0; cell < h * w; ++cell) {
          R* row = splat.data() + static_cast<size_t>(cell) * q;
          R total = R(0);
          for (int s = 0; s < q; ++s) total += row[s];
          if (total > R(0))
            for (int s = 0; s < q; ++s) row[s] /= total;
        }
      }
      Tensor<R> s_m = Tensor<R>::from_data({h * w, q}, std::move(splat));
      frames.push_back(reshape(matmul(s_m, select0(attended, f)), {1, h, w, d}));
    }
    return concat<R>(frames, 0);
  }

  // Boxes to tokens, one attention pass, then back onto the grid.
  Tensor<R> operator()(const std::vector<DetectionSet>& ds_seq) const {
    Tensor<R> tokens = expand_boxes(ds_seq);
    return sample_to_grid(omd_attend(tokens, ds_seq), ds_seq);
  }
};

}  // namespace nextact
