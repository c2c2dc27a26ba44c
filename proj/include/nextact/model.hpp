#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "nextact/checkpoint.hpp"
#include "nextact/config.hpp"
#include "nextact/encoder.hpp"
#include "nextact/features.hpp"
#include "nextact/losses.hpp"
#include "nextact/matching.hpp"
#include "nextact/metrics.hpp"
#include "nextact/motion.hpp"
#include "nextact/nao.hpp"
#include "nextact/omd.hpp"

namespace nextact {

// Everything one forward pass produces. NAO fields are populated only when
// the NAO decoder is enabled; omd_grid is undefined when OMD is disabled.
template <class R>
struct ForwardResult {
  EncoderMemory<R> memory;
  ObjectQuerySet<R> queries;
  NAOPredictionSet<R> nao;
  bool has_nao = false;
  Tensor<R> omd_grid;
  FusedSequence<R> fused;
  PredictedSequence<R> predicted;
  STAOutput<R> action;
};

// Unweighted per-component values for logging; `total` carries the weights.
struct LossBreakdown {
  double box = 0, noun = 0, verb = 0, ttc = 0, feature = 0, total = 0;
  bool box_pairs = false;
};

template <class R>
struct ClipLoss {
  Tensor<R> total;
  LossBreakdown parts;
};

// The full anticipation model: frame/detection embedding, joint encoder, NAO
// query decoding, object motion dynamics, and the causal motion decoder with
// verb/TTC heads. Construction order is fixed so the parameter registry (and
// therefore checkpoints and the init RNG stream) is deterministic per config.
template <class R>
struct StaModel {
  RunConfig cfg;
  ParamSet<R> params;
  FrameEmbedder<R> frame_embedder;
  DetectionEmbedder<R> det_embedder;
  TokenAssembler<R> assembler;
  Encoder<R> encoder;
  QueryBuilder<R> query_builder;
  NaoDecoder<R> nao_decoder;
  NaoHeads<R> nao_heads;
  ObjectMotionDynamics<R> omd;
  MotionDecoder<R> motion;
  bool use_nao = false, use_omd = false, use_injection = false;

  explicit StaModel(const RunConfig& c) : cfg(c) {
    cfg.validate();
    Rng rng(cfg.seed, 0);  // stream 0: parameter init
    use_nao = cfg.nao_decoder_enabled;
    use_omd = cfg.omd_enabled;
    // Injection needs the decoder's output; without it the flag is inert.
    use_injection = cfg.nao_injection_enabled && use_nao;

    frame_embedder = FrameEmbedder<R>(params, "frame", 3, cfg.frame_h, cfg.frame_w, cfg.h, cfg.w,
                                      cfg.d, rng);
    det_embedder = DetectionEmbedder<R>(params, "det", cfg.d, rng);
    assembler = TokenAssembler<R>(params, "tok", cfg.h, cfg.w, cfg.q, cfg.d, rng);
    encoder = Encoder<R>(params, "enc", cfg.h, cfg.w, cfg.q, cfg.d, cfg.heads,
                         cfg.encoder_layers, cfg.ffn_hidden, cfg.encoder_attention == "per_frame",
                         rng);
    if (use_nao) {
      query_builder = QueryBuilder<R>(params, "query", cfg.h, cfg.w, cfg.d, cfg.n_q, rng);
      nao_decoder = NaoDecoder<R>(params, "naodec", cfg.d, cfg.h * cfg.w, cfg.heads,
                                  cfg.nao_layers, cfg.ffn_hidden, /*spatial_only=*/false, rng);
      nao_heads = NaoHeads<R>(params, "naohead", cfg.d, cfg.c_n, rng);
    }
    if (use_omd)
      omd = ObjectMotionDynamics<R>(params, "omd", cfg.h, cfg.w, cfg.q, cfg.d, cfg.heads, rng,
                                    cfg.omd_sampler == "gather");
    motion = MotionDecoder<R>(params, "motion", cfg.h * cfg.w, cfg.d, cfg.heads,
                              cfg.motion_layers, cfg.ffn_hidden, cfg.c_v, use_injection, rng);
  }

  // Accepts any clip with T >= 2 whose frame geometry and detection padding
  // match the config; sequence length itself is free, so the same parameters
  // serve shorter observed prefixes.
  ForwardResult<R> forward(const Clip& clip) const {
    if (clip.t < 2)
      throw ValidationError("forward: clip has T=" + std::to_string(clip.t) + ", need >= 2");
    ForwardResult<R> out;
    Tensor<R> grids = frame_embedder(clip);                 // [T,H,W,D]
    Tensor<R> det_tokens = det_embedder(clip.detections);   // [T,Q,D]
    Tensor<R> tokens = assembler(grids, det_tokens);        // [T,H*W+Q,D]
    out.memory = encoder(tokens);
    if (use_nao) {
      out.queries = query_builder(out.memory.z_t_grid, clip.detections.back());
      Tensor<R> z_nao = nao_decoder(out.queries.queries, out.memory.z_lt);
      out.nao = nao_heads(z_nao);
      out.has_nao = true;
    }
    if (use_omd) out.omd_grid = omd(clip.detections);
    out.fused = motion.fuse(out.memory.video_memory, out.omd_grid);
    Tensor<R> decoder_input =
        use_injection ? motion.inject_nao(out.fused.z_prime, out.nao.z_nao) : out.fused.z_prime;
    out.predicted = motion.decode_motion(decoder_input);
    const int t = out.predicted.z_hat.dim(0);
    out.action = motion.predict_action(select0(out.predicted.z_hat, t - 1));
    return out;
  }

  // Combined loss over one clip. A hidden-NAO clip (nao_present=false)
  // contributes no box/TTC terms and supervises every query toward
  // no-object; verb and future-feature terms always apply.
  ClipLoss<R> clip_loss(const ForwardResult<R>& f, const Clip& clip) const {
    const LossWeights wts = cfg.loss_weights();
    std::vector<STATarget> targets;
    if (clip.target.nao_present) targets.push_back(clip.target);

    Tensor<R> l_box, l_noun, l_verb;
    ClipLoss<R> out;
    if (f.has_nao) {
      Assignment assignment = hungarian_match(f.nao, targets, wts);
      auto bl = box_loss(f.nao.boxes, assignment, targets, wts);
      l_box = bl.loss;
      out.parts.box_pairs = bl.has_pairs;
      auto pair = class_losses(f.nao.class_logits, assignment, targets, f.action.verb_logits,
                               clip.target.verb, wts.noobj_weight);
      l_noun = pair.first;
      l_verb = pair.second;
    } else {
      l_box = Tensor<R>::scalar(R(0));
      l_noun = Tensor<R>::scalar(R(0));
      l_verb = cross_entropy(reshape(f.action.verb_logits, {1, cfg.c_v}),
                             std::vector<int>{clip.target.verb}, std::vector<double>{1.0});
    }
    Tensor<R> l_ttc = clip.target.nao_present ? ttc_loss(f.action.ttc, clip.target.ttc)
                                              : Tensor<R>::scalar(R(0));
    Tensor<R> l_feat = feature_loss(f.predicted.z_hat, f.fused.z_prime);

    out.parts.box = static_cast<double>(l_box.item());
    out.parts.noun = static_cast<double>(l_noun.item());
    out.parts.verb = static_cast<double>(l_verb.item());
    out.parts.ttc = static_cast<double>(l_ttc.item());
    out.parts.feature = static_cast<double>(l_feat.item());
    out.total = total_loss(l_box, l_noun, l_verb, l_ttc, l_feat, wts);
    out.parts.total = static_cast<double>(out.total.item());
    return out;
  }

  ClipLoss<R> clip_loss(const Clip& clip) const { return clip_loss(forward(clip), clip); }

  // Candidate set for metrics: every query becomes one prediction scored by
  // 1 - p(no-object); the clip-level verb/TTC are attached to each candidate.
  EvalRecord eval_record(const Clip& clip, int clip_index) const {
    ForwardResult<R> f = forward(clip);
    EvalRecord rec;
    rec.clip_id = clip.clip_id;
    rec.clip_index = clip_index;
    rec.target = clip.target;
    const auto& vl = f.action.verb_logits.data();
    rec.verb_logits.assign(vl.begin(), vl.end());
    rec.clip_ttc = static_cast<double>(f.action.ttc.item());
    if (f.has_nao) {
      const int n_q = f.nao.boxes.dim(0);
      const int verb = argmax_index(rec.verb_logits);
      rec.preds.reserve(static_cast<size_t>(n_q));
      for (int qi = 0; qi < n_q; ++qi) {
        const auto p = softmax_row(f.nao.class_logits, qi);
        EvalPrediction ep;
        ep.box = clamp_unit(pred_box_xyxy(f.nao.boxes, qi));
        ep.noun = argmax_index(std::vector<double>(p.begin(), p.end() - 1));
        ep.verb = verb;
        ep.ttc = rec.clip_ttc;
        ep.confidence = 1.0 - p.back();
        rec.preds.push_back(ep);
      }
      std::stable_sort(rec.preds.begin(), rec.preds.end(),
                       [](const EvalPrediction& a, const EvalPrediction& b) {
                         return a.confidence > b.confidence;
                       });
    }
    return rec;
  }

  void save(const std::string& path) const { ckpt::save(path, params, cfg.dump()); }

  // Restores parameters from a checkpoint after verifying that the embedded
  // config builds the same architecture as this model.
  void load(const std::string& path) {
    const RunConfig saved = RunConfig::parse(ckpt::peek_config(path));
    const auto diff = config_compat_diff(saved, cfg);
    if (!diff.empty()) {
      std::string msg = "checkpoint incompatible with run config:";
      for (const auto& line : diff) msg += "\n  " + line;
      throw ValidationError(msg);
    }
    ckpt::load(path, params);
  }
};

}  // namespace nextact
