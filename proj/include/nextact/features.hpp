#pragma once

#include <cmath>
#include <vector>

#include "nextact/data.hpp"
#include "nextact/nn.hpp"

namespace nextact {

// Fixed 2-D sinusoidal positional table for an H x W grid: the first half of
// each D-vector encodes the row, the second half the column. Identical for
// every frame. D must be divisible by 4.
template <class R>
std::vector<R> make_spatial_pos_encoding(int h, int w, int d) {
  if (d % 4 != 0)
    throw ValidationError("spatial positional encoding needs D divisible by 4, got " +
                          std::to_string(d));
  const int quarter = d / 4;
  std::vector<R> pe(static_cast<size_t>(h) * w * d);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      R* row = pe.data() + (static_cast<size_t>(y) * w + x) * d;
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / quarter);
        row[2 * i] = static_cast<R>(std::sin(y * freq));
        row[2 * i + 1] = static_cast<R>(std::cos(y * freq));
        row[d / 2 + 2 * i] = static_cast<R>(std::sin(x * freq));
        row[d / 2 + 2 * i + 1] = static_cast<R>(std::cos(x * freq));
      }
    }
  return pe;
}

// 1-D sinusoidal table over T positions.
template <class R>
std::vector<R> make_temporal_pos_encoding(int t, int d) {
  if (d % 2 != 0)
    throw ValidationError("temporal positional encoding needs even D, got " + std::to_string(d));
  std::vector<R> pe(static_cast<size_t>(t) * d);
  for (int p = 0; p < t; ++p) {
    R* row = pe.data() + static_cast<size_t>(p) * d;
    for (int i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / d);
      row[2 * i] = static_cast<R>(std::sin(p * freq));
      row[2 * i + 1] = static_cast<R>(std::cos(p * freq));
    }
  }
  return pe;
}

// Backbone stand-in: splits each frame into non-overlapping patches, maps
// each patch's raw pixels through one learnable linear layer, then a second
// linear projection. Purely per-frame, purely linear.
template <class R>
struct FrameEmbedder {
  int c = 3, h0 = 0, w0 = 0, h = 0, w = 0, d = 0;
  int py = 0, px = 0;  // patch height/width
  LinearLayer<R> patch_fc;
  LinearLayer<R> proj;

  FrameEmbedder() = default;
  FrameEmbedder(ParamSet<R>& ps, const std::string& name, int c_, int h0_, int w0_, int h_,
                int w_, int d_, Rng& rng)
      : c(c_), h0(h0_), w0(w0_), h(h_), w(w_), d(d_) {
    if (h <= 0 || w <= 0 || h0 % h != 0 || w0 % w != 0)
      throw ValidationError("frame embedder: canvas " + std::to_string(h0) + "x" +
                            std::to_string(w0) + " not divisible into a " + std::to_string(h) +
                            "x" + std::to_string(w) + " patch grid");
    py = h0 / h;
    px = w0 / w;
    patch_fc = LinearLayer<R>(ps, name + ".patch", c * py * px, d, rng);
    proj = LinearLayer<R>(ps, name + ".proj", d, d, rng);
  }

  // [T, H, W, D]
  Tensor<R> operator()(const Clip& clip) const {
    if (clip.c != c || clip.h0 != h0 || clip.w0 != w0)
      throw ShapeError("frame embedder: clip frames are " + std::to_string(clip.c) + "x" +
                       std::to_string(clip.h0) + "x" + std::to_string(clip.w0) + ", expected " +
                       std::to_string(c) + "x" + std::to_string(h0) + "x" + std::to_string(w0));
    const int t = clip.t;
    const int pdim = c * py * px;
    std::vector<R> patches(static_cast<size_t>(t) * h * w * pdim);
    size_t at = 0;
    for (int f = 0; f < t; ++f)
      for (int gy = 0; gy < h; ++gy)
        for (int gx = 0; gx < w; ++gx)
          for (int ch = 0; ch < c; ++ch)
            for (int yy = 0; yy < py; ++yy)
              for (int xx = 0; xx < px; ++xx)
                patches[at++] =
                    static_cast<R>(clip.pixel(f, ch, gy * py + yy, gx * px + xx)) / R(255);
    Tensor<R> x = Tensor<R>::from_data({t * h * w, pdim}, std::move(patches));
    return reshape(proj(patch_fc(x)), {t, h, w, d});
  }
};

// Shared MLP from (x0, y0, x1, y1, score) to a D-vector. Dummy slots pass the
// zero vector through the same MLP.
template <class R>
struct DetectionEmbedder {
  int d = 0;
  Mlp<R> mlp;

  DetectionEmbedder() = default;
  DetectionEmbedder(ParamSet<R>& ps, const std::string& name, int d_, Rng& rng)
      : d(d_), mlp(ps, name, {5, d_, d_}, rng) {}

  // [T, Q, D]
  Tensor<R> operator()(const std::vector<DetectionSet>& ds_seq) const {
    const int t = static_cast<int>(ds_seq.size());
    if (t == 0) throw ValidationError("detection embedder: no detection sets");
    const int q = static_cast<int>(ds_seq[0].d.size());
    std::vector<R> rows(static_cast<size_t>(t) * q * 5, R(0));
    for (int f = 0; f < t; ++f) {
      if (static_cast<int>(ds_seq[static_cast<size_t>(f)].d.size()) != q)
        throw ShapeError("detection embedder: ragged detection sets");
      for (int s = 0; s < q; ++s) {
        const Detection& det = ds_seq[static_cast<size_t>(f)].d[static_cast<size_t>(s)];
        if (det.is_dummy) continue;
        R* r = rows.data() + (static_cast<size_t>(f) * q + s) * 5;
        r[0] = static_cast<R>(det.box.x0);
        r[1] = static_cast<R>(det.box.y0);
        r[2] = static_cast<R>(det.box.x1);
        r[3] = static_cast<R>(det.box.y1);
        r[4] = static_cast<R>(det.score);
      }
    }
    Tensor<R> x = Tensor<R>::from_data({t * q, 5}, std::move(rows));
    return reshape(mlp(x), {t, q, d});
  }
};

// Concatenates flattened spatial tokens with detection tokens per frame and
// adds positional encoding: fixed sinusoidal for the H*W spatial slots, a
// learned embedding for the Q detection slots. The encoding does not vary
// across frames.
template <class R>
struct TokenAssembler {
  int h = 0, w = 0, q = 0, d = 0;
  Tensor<R> spatial_pe;  // constant [H*W, D]
  Tensor<R> det_pe;      // learned  [Q, D]

  TokenAssembler() = default;
  TokenAssembler(ParamSet<R>& ps, const std::string& name, int h_, int w_, int q_, int d_,
                 Rng& rng)
      : h(h_), w(w_), q(q_), d(d_) {
    spatial_pe = Tensor<R>::from_data({h * w, d}, make_spatial_pos_encoding<R>(h, w, d));
    det_pe = ps.add(name + ".det_pe", Tensor<R>::zeros({q, d}));
    init::gaussian(det_pe, 0.02, rng);
  }

  // frame_grids [T, H, W, D] + det_tokens [T, Q, D] -> [T, H*W+Q, D]
  Tensor<R> operator()(const Tensor<R>& frame_grids, const Tensor<R>& det_tokens) const {
    if (frame_grids.rank() != 4 || frame_grids.dim(1) != h || frame_grids.dim(2) != w ||
        frame_grids.dim(3) != d)
      throw ShapeError("assemble_tokens: frame grids " + shape_str(frame_grids.shape()) +
                       ", expected [T," + std::to_string(h) + "," + std::to_string(w) + "," +
                       std::to_string(d) + "]");
    if (det_tokens.rank() != 3 || det_tokens.dim(1) != q || det_tokens.dim(2) != d)
      throw ShapeError("assemble_tokens: detection tokens " + shape_str(det_tokens.shape()) +
                       " do not match Q=" + std::to_string(q) + " D=" + std::to_string(d));
    const int t = frame_grids.dim(0);
    if (det_tokens.dim(0) != t)
      throw ShapeError("assemble_tokens: T mismatch between modalities");
    Tensor<R> spatial = reshape(frame_grids, {t, h * w, d});
    Tensor<R> tokens = concat<R>({spatial, det_tokens}, 1);
    Tensor<R> pe = concat<R>({spatial_pe, det_pe}, 0);  // [H*W+Q, D]
    return add_broadcast(tokens, pe);
  }
};

}  // namespace nextact
