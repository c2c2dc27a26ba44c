#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nextact/data.hpp"
#include "nextact/rng.hpp"

namespace nextact {

struct NoiseConfig {
  double jitter_sigma = 0.0;
  double p_drop = 0.0;
  double p_fp = 0.0;
};

// Deterministic synthetic scene: colored rectangles drifting on a canvas, a
// white "actor" square approaching one of them. The approached object is the
// NAO; contact happens a configured number of frames past the last observed
// frame, which fixes the TTC exactly. The verb is a deterministic function of
// (NAO noun, approach-speed bucket), so verb accuracy above the marginal
// requires actually reading the NAO.
struct SceneConfig {
  int h0 = 56, w0 = 56, c = 3;
  int t = 8;
  double fps = 4.0;
  int q = 8;
  int c_n = 7, c_v = 7;
  int objects_min = 3, objects_max = 6;
  int horizon_min = 1, horizon_max = 7;  // contact frames past T-1
  double speed_min = 0.02, speed_max = 0.10;
  double speed_bucket = 0.06;  // bucket boundary: fast iff speed >= this
  double actor_side = 0.06;
  NoiseConfig noise;
  uint64_t seed = 1;
  double nao_hidden_fraction = 0.125;

  void validate() const {
    if (t < 2) throw ValidationError("scene config: T must be >= 2");
    if (c != 3) throw ValidationError("scene config: frames are 3-channel");
    if (c_n < 2 || c_v < 2) throw ValidationError("scene config: vocabularies need >= 2 classes");
    if (horizon_min < 1 || horizon_max < horizon_min)
      throw ValidationError("scene config: contact horizon must be >= 1 frame");
    if (objects_min < 1 || objects_max < objects_min || objects_max > c_n)
      throw ValidationError("scene config: object count range invalid (distinct nouns need <= " +
                            std::to_string(c_n) + ")");
    if (!(speed_min > 0) || speed_max < speed_min)
      throw ValidationError("scene config: bad actor speed range");
    if (q < 1) throw ValidationError("scene config: Q must be >= 1");
    if (fps <= 0) throw ValidationError("scene config: fps must be positive");
  }
};

inline int verb_rule(int noun, int speed_bucket, int c_v) {
  return (2 * noun + speed_bucket) % c_v;
}

// Distinct palette color per noun (HSV wheel), background dark gray, actor
// white.
inline void noun_color(int noun, int c_n, uint8_t rgb[3]) {
  const double h = 6.0 * noun / c_n;
  const double s = 0.85, v = 0.9;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), qq = v * (1 - s * f), tt = v * (1 - s * (1 - f));
  double r, g, b;
  switch (i) {
    case 0: r = v; g = tt; b = p; break;
    case 1: r = qq; g = v; b = p; break;
    case 2: r = p; g = v; b = tt; break;
    case 3: r = p; g = qq; b = v; break;
    case 4: r = tt; g = p; b = v; break;
    default: r = v; g = p; b = qq; break;
  }
  rgb[0] = static_cast<uint8_t>(std::lround(r * 255));
  rgb[1] = static_cast<uint8_t>(std::lround(g * 255));
  rgb[2] = static_cast<uint8_t>(std::lround(b * 255));
}

struct TrueObject {
  Box box;
  int class_id = -1;  // noun; -1 for the actor
};

// Ground-truth boxes per frame, before detector noise.
struct WorldState {
  std::vector<std::vector<TrueObject>> frames;
};

namespace synth_detail {

struct MovingRect {
  double cx, cy, w, h, vx, vy;
  int noun;

  Box at(int frame) const {
    const double x = std::clamp(cx + vx * frame, w / 2, 1.0 - w / 2);
    const double y = std::clamp(cy + vy * frame, h / 2, 1.0 - h / 2);
    return Box{x - w / 2, y - h / 2, x + w / 2, y + h / 2};
  }
};

inline void fill_rect(std::vector<uint8_t>& frames, int t, int c, int h0, int w0, int frame,
                      const Box& b, const uint8_t rgb[3]) {
  const int x0 = std::clamp(static_cast<int>(std::lround(b.x0 * w0)), 0, w0);
  const int x1 = std::clamp(static_cast<int>(std::lround(b.x1 * w0)), 0, w0);
  const int y0 = std::clamp(static_cast<int>(std::lround(b.y0 * h0)), 0, h0);
  const int y1 = std::clamp(static_cast<int>(std::lround(b.y1 * h0)), 0, h0);
  (void)t;
  for (int ch = 0; ch < c; ++ch)
    for (int y = y0; y < y1; ++y) {
      uint8_t* row = frames.data() + ((static_cast<size_t>(frame) * c + ch) * h0 + y) * w0;
      for (int x = x0; x < x1; ++x) row[x] = rgb[ch];
    }
}

// Visible part of a box; returns false when nothing remains on canvas.
inline bool visible_part(const Box& b, Box* out) {
  Box v{std::clamp(b.x0, 0.0, 1.0), std::clamp(b.y0, 0.0, 1.0), std::clamp(b.x1, 0.0, 1.0),
        std::clamp(b.y1, 0.0, 1.0)};
  if (v.area() < 1e-6) return false;
  *out = v;
  return true;
}

}  // namespace synth_detail

// Detector simulation: per-coordinate Gaussian jitter, drops, false
// positives; scores fall with jitter magnitude and are exactly 1 when clean.
inline std::vector<DetectionSet> simulate_detector(const WorldState& world,
                                                   const NoiseConfig& noise, Rng& rng, int q) {
  std::vector<DetectionSet> out;
  out.reserve(world.frames.size());
  for (const auto& frame : world.frames) {
    std::vector<Detection> dets;
    for (const auto& obj : frame) {
      if (noise.p_drop > 0 && rng.bernoulli(noise.p_drop)) continue;
      Detection det;
      double jitter_mag = 0.0;
      double coords[4] = {obj.box.x0, obj.box.y0, obj.box.x1, obj.box.y1};
      if (noise.jitter_sigma > 0)
        for (double& v : coords) {
          const double j = rng.normal(0.0, noise.jitter_sigma);
          jitter_mag += std::abs(j) / 4.0;
          v = std::clamp(v + j, 0.0, 1.0);
        }
      det.box = Box{std::min(coords[0], coords[2]), std::min(coords[1], coords[3]),
                    std::max(coords[0], coords[2]), std::max(coords[1], coords[3])};
      det.score = std::max(0.05, 1.0 - 4.0 * jitter_mag);
      det.class_id = obj.class_id;
      dets.push_back(det);
    }
    if (noise.p_fp > 0 && rng.bernoulli(noise.p_fp)) {
      Detection fp;
      const double w = rng.uniform(0.05, 0.3), h = rng.uniform(0.05, 0.3);
      const double cx = rng.uniform(w / 2, 1 - w / 2), cy = rng.uniform(h / 2, 1 - h / 2);
      fp.box = Box{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
      fp.score = rng.uniform(0.3, 0.7);
      fp.class_id = static_cast<int>(rng.below(1u << 16)) % 7;
      dets.push_back(fp);
    }
    out.push_back(pad_detections(dets, q));
  }
  return out;
}

// Deterministic function of (cfg.seed, index): same inputs, bit-identical
// clip. `hidden` removes the NAO from view before the last observed frame and
// clears the target annotations.
inline Clip generate_clip_impl(const SceneConfig& cfg, int index, bool hidden) {
  cfg.validate();
  Rng rng(cfg.seed, static_cast<uint64_t>(index));
  const int t = cfg.t;

  const int k = rng.range_int(cfg.objects_min, cfg.objects_max);
  std::vector<int> nouns(static_cast<size_t>(cfg.c_n));
  for (int i = 0; i < cfg.c_n; ++i) nouns[static_cast<size_t>(i)] = i;
  rng.shuffle(nouns);
  nouns.resize(static_cast<size_t>(k));

  std::vector<synth_detail::MovingRect> objects;
  for (int i = 0; i < k; ++i) {
    synth_detail::MovingRect o;
    o.w = rng.uniform(0.16, 0.30);
    o.h = rng.uniform(0.16, 0.30);
    o.cx = rng.uniform(o.w / 2 + 0.02, 0.98 - o.w / 2);
    o.cy = rng.uniform(o.h / 2 + 0.02, 0.98 - o.h / 2);
    o.vx = rng.uniform(-0.008, 0.008);
    o.vy = rng.uniform(-0.008, 0.008);
    o.noun = nouns[static_cast<size_t>(i)];
    objects.push_back(o);
  }
  const int nao_idx = static_cast<int>(rng.below(static_cast<uint64_t>(k)));

  // Approach geometry: pick the speed bucket first so retries preserve the
  // verb, then search for a horizon/speed/angle with the actor on-canvas over
  // all observed frames.
  const int bucket = rng.bernoulli(0.5) ? 1 : 0;
  const double lo = bucket ? cfg.speed_bucket : cfg.speed_min;
  const double hi = bucket ? cfg.speed_max : cfg.speed_bucket;
  int contact_frame = 0;
  double speed = 0.0;
  double ax0 = 0.0, ay0 = 0.0;  // actor position at frame 0
  double dirx = 0.0, diry = 0.0;
  bool placed = false;
  int horizon = 0;
  for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
    horizon = rng.range_int(cfg.horizon_min, cfg.horizon_max);
    contact_frame = (t - 1) + horizon;
    speed = rng.uniform(lo, hi);
    const Box nao_at_contact = objects[static_cast<size_t>(nao_idx)].at(contact_frame);
    const double tx = nao_at_contact.cx(), ty = nao_at_contact.cy();
    const double dist0 = speed * contact_frame;
    for (int angle_try = 0; angle_try < 16 && !placed; ++angle_try) {
      const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      dirx = std::cos(theta);
      diry = std::sin(theta);
      ax0 = tx + dirx * dist0;
      ay0 = ty + diry * dist0;
      const double m = cfg.actor_side / 2 + 0.01;
      if (ax0 > m && ax0 < 1 - m && ay0 > m && ay0 < 1 - m) placed = true;
    }
  }
  if (!placed)
    throw ValidationError("generate_clip: infeasible actor geometry for clip index " +
                          std::to_string(index));

  const int nao_noun = objects[static_cast<size_t>(nao_idx)].noun;
  const int verb = verb_rule(nao_noun, bucket, cfg.c_v);

  // Hidden variant: the NAO leaves the canvas two frames before the end.
  const int exit_start = hidden ? std::max(1, t - 3) : t + contact_frame + 1;
  auto nao_box_at = [&](int frame) -> Box {
    Box b = objects[static_cast<size_t>(nao_idx)].at(frame);
    if (frame >= exit_start) {
      const double push = 1.5 * (frame - exit_start + 1);
      b.x0 += push;
      b.x1 += push;
    }
    return b;
  };

  // Actor walks a straight line toward the NAO's contact-time center.
  const Box nao_contact_box = objects[static_cast<size_t>(nao_idx)].at(contact_frame);
  auto actor_center = [&](int frame) {
    const double remaining = speed * (contact_frame - frame);
    return std::pair<double, double>(nao_contact_box.cx() + dirx * remaining,
                                     nao_contact_box.cy() + diry * remaining);
  };

  Clip clip;
  clip.clip_id = (hidden ? "h" : "s") + std::to_string(cfg.seed) + "_" + std::to_string(index);
  clip.fps = cfg.fps;
  clip.t = t;
  clip.c = cfg.c;
  clip.h0 = cfg.h0;
  clip.w0 = cfg.w0;
  clip.frames.assign(static_cast<size_t>(t) * cfg.c * cfg.h0 * cfg.w0, 38);

  WorldState world;
  world.frames.resize(static_cast<size_t>(t));
  for (int f = 0; f < t; ++f) {
    for (int i = 0; i < k; ++i) {
      const Box b = i == nao_idx ? nao_box_at(f) : objects[static_cast<size_t>(i)].at(f);
      Box vis;
      if (!synth_detail::visible_part(b, &vis)) continue;
      uint8_t rgb[3];
      noun_color(objects[static_cast<size_t>(i)].noun, cfg.c_n, rgb);
      synth_detail::fill_rect(clip.frames, t, cfg.c, cfg.h0, cfg.w0, f, vis, rgb);
      world.frames[static_cast<size_t>(f)].push_back({vis, objects[static_cast<size_t>(i)].noun});
    }
    const auto [acx, acy] = actor_center(f);
    Box actor{acx - cfg.actor_side / 2, acy - cfg.actor_side / 2, acx + cfg.actor_side / 2,
              acy + cfg.actor_side / 2};
    Box vis;
    if (synth_detail::visible_part(actor, &vis)) {
      const uint8_t white[3] = {255, 255, 255};
      synth_detail::fill_rect(clip.frames, t, cfg.c, cfg.h0, cfg.w0, f, vis, white);
      world.frames[static_cast<size_t>(f)].push_back({vis, -1});
    }
  }

  clip.detections = simulate_detector(world, cfg.noise, rng, cfg.q);

  if (hidden) {
    clip.target.nao_present = false;
    clip.target.box = Box{0, 0, 0, 0};
    clip.target.noun = nao_noun;
    clip.target.verb = verb;
    clip.target.ttc = 0.0;
  } else {
    clip.target.nao_present = true;
    clip.target.box = nao_box_at(t - 1);
    clip.target.noun = nao_noun;
    clip.target.verb = verb;
    clip.target.ttc = static_cast<double>(horizon) / cfg.fps;
  }
  return clip;
}

inline Clip generate_clip(const SceneConfig& cfg, int index) {
  return generate_clip_impl(cfg, index, false);
}

// Bresenham-style deterministic flagging: clip `index` is hidden iff the
// integer fraction counter advances across it, giving exactly
// round(fraction * n) flagged clips in any prefix of n.
inline bool hidden_flag(int index, double fraction) {
  return std::floor((index + 1) * fraction) > std::floor(index * fraction);
}

enum class SplitVariant { standard, nao_hidden };

// Writes train/val datasets with disjoint index ranges, plus a provenance
// text file (config dump) next to each.
inline void make_split(const SceneConfig& cfg, int n_train, int n_val, SplitVariant variant,
                       const std::string& train_path, const std::string& val_path,
                       const std::string& provenance_blob = "") {
  cfg.validate();
  if (n_train < 1 || n_val < 1)
    throw ValidationError("make_split: train/val counts must be >= 1");
  auto build = [&](int begin, int count) {
    Dataset ds;
    ds.header.t = cfg.t;
    ds.header.c = cfg.c;
    ds.header.h0 = cfg.h0;
    ds.header.w0 = cfg.w0;
    ds.header.q = cfg.q;
    ds.header.c_n = cfg.c_n;
    ds.header.c_v = cfg.c_v;
    ds.header.num_clips = count;
    ds.clips.reserve(static_cast<size_t>(count));
    for (int i = begin; i < begin + count; ++i) {
      const bool hidden = variant == SplitVariant::nao_hidden &&
                          hidden_flag(i - begin, cfg.nao_hidden_fraction);
      ds.clips.push_back(generate_clip_impl(cfg, i, hidden));
    }
    return ds;
  };
  write_dataset(train_path, build(0, n_train));
  write_dataset(val_path, build(n_train, n_val));
  if (!provenance_blob.empty()) {
    for (const auto& p : {train_path, val_path}) {
      std::ofstream os(p + ".cfg.txt", std::ios::trunc);
      if (!os) throw IoError("cannot write provenance file: " + p + ".cfg.txt");
      os << provenance_blob;
    }
  }
}

}  // namespace nextact
