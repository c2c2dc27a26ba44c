#pragma once

#include <vector>

#include "nextact/features.hpp"
#include "nextact/nn.hpp"

namespace nextact {

// Fused per-frame sequence: pre_pool keeps the full grid for the feature-loss
// target, z_prime is its spatial mean.
template <class R>
struct FusedSequence {
  Tensor<R> pre_pool;  // [T, H*W, D]
  Tensor<R> z_prime;   // [T, D]
};

// z_hat[t] is the prediction for frame t+1; the final row extrapolates one
// frame past the observed clip.
template <class R>
struct PredictedSequence {
  Tensor<R> z_hat;  // [T, D]
};

template <class R>
struct STAOutput {
  Tensor<R> verb_logits;  // [C_v]
  Tensor<R> ttc;          // [1], strictly positive (softplus output)
};

// Motion decoder: fuses video memory with OMD trajectory features, pools to
// per-frame tokens, injects the NAO prior into the last observed position,
// and extrapolates forward under a strict causal mask.
template <class R>
struct MotionDecoder {
  int hw = 0, d = 0;
  LayerNormLayer<R> fuse_ln;
  Mlp<R> fuse_mlp;
  LinearLayer<R> nao_proj;
  bool has_nao_proj = false;
  std::vector<TransformerBlock<R>> blocks;
  LinearLayer<R> out_head;
  LinearLayer<R> verb_head;
  LinearLayer<R> ttc_head;

  MotionDecoder() = default;
  MotionDecoder(ParamSet<R>& ps, const std::string& name, int hw_, int d_, int heads, int layers,
                int ffn_hidden, int c_v, bool with_nao_proj, Rng& rng)
      : hw(hw_),
        d(d_),
        fuse_ln(ps, name + ".fuse_ln", d_),
        fuse_mlp(ps, name + ".fuse_mlp", {d_, d_, d_}, rng) {
    if (layers < 1) throw ValidationError("motion decoder: need at least one layer");
    if (with_nao_proj) {
      nao_proj = LinearLayer<R>(ps, name + ".nao_proj", d_, d_, rng);
      has_nao_proj = true;
    }
    for (int l = 0; l < layers; ++l)
      blocks.emplace_back(ps, name + ".block" + std::to_string(l), d_, heads, ffn_hidden, rng);
    out_head = LinearLayer<R>(ps, name + ".out", d_, d_, rng);
    verb_head = LinearLayer<R>(ps, name + ".verb", d_, c_v, rng);
    ttc_head = LinearLayer<R>(ps, name + ".ttc", d_, 1, rng);
  }

  // Element-wise sum of the two grids, LN, MLP, then spatial mean-pool. T is
  // taken from the input so observed prefixes of any length share parameters.
  FusedSequence<R> fuse(const Tensor<R>& video_memory, const Tensor<R>& omd_grid) const {
    if (video_memory.rank() != 3 || video_memory.dim(1) != hw || video_memory.dim(2) != d)
      throw ShapeError("fuse: video memory " + shape_str(video_memory.shape()) +
                       ", expected [T," + std::to_string(hw) + "," + std::to_string(d) + "]");
    const int t = video_memory.dim(0);
    Tensor<R> grid = video_memory;
    if (omd_grid.defined()) {
      if (shape_numel(omd_grid.shape()) != shape_numel(video_memory.shape()))
        throw ShapeError("fuse: OMD grid " + shape_str(omd_grid.shape()) +
                         " incompatible with video memory " + shape_str(video_memory.shape()));
      grid = add(grid, reshape(omd_grid, {t, hw, d}));
    }
    FusedSequence<R> out;
    out.pre_pool = fuse_mlp(fuse_ln(grid));
    out.z_prime = mean_axis(out.pre_pool, 1);
    return out;
  }

  // Adds the pooled, projected NAO prior to the last observed frame only.
  Tensor<R> inject_nao(const Tensor<R>& z_prime, const Tensor<R>& z_nao) const {
    if (!has_nao_proj)
      throw ValidationError("inject_nao: module built without the NAO projection");
    Tensor<R> pooled = mean_axis(z_nao, 0);  // [D]
    return add_at_row(z_prime, z_prime.dim(0) - 1, nao_proj(pooled));
  }

  // Causally masked decoder; slot t may see inputs 0..t only, enforced by
  // exact-zero attention weights.
  PredictedSequence<R> decode_motion(const Tensor<R>& decoder_input) const {
    if (decoder_input.rank() != 2 || decoder_input.dim(1) != d)
      throw ShapeError("decode_motion: input " + shape_str(decoder_input.shape()) +
                       ", expected [T," + std::to_string(d) + "]");
    const int t = decoder_input.dim(0);
    if (t < 2) throw ValidationError("decode_motion: T must be >= 2");
    Tensor<R> x = add(decoder_input,
                      Tensor<R>::from_data({t, d}, make_temporal_pos_encoding<R>(t, d)));
    const AttnMask causal = AttnMask::causal(t);
    for (const auto& block : blocks) x = block(x, &causal);
    return PredictedSequence<R>{out_head(x)};
  }

  // Verb logits and a softplus-positive TTC from the future-frame feature.
  STAOutput<R> predict_action(const Tensor<R>& z_hat_future) const {
    if (z_hat_future.rank() != 1 || z_hat_future.dim(0) != d)
      throw ShapeError("predict_action: feature " + shape_str(z_hat_future.shape()));
    Tensor<R> row = reshape(z_hat_future, {1, d});
    STAOutput<R> out;
    out.verb_logits = reshape(verb_head(row), {c_v_dim()});
    out.ttc = reshape(softplus(ttc_head(row)), {1});
    return out;
  }

 private:
  int c_v_dim() const { return verb_head.b.dim(0); }
};

}  // namespace nextact
