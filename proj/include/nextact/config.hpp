#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nextact/common.hpp"
#include "nextact/matching.hpp"
#include "nextact/synth.hpp"

namespace nextact {

// Flat "key = value" run configuration. One visitor enumerates every field so
// parse, dump, and compatibility checks cannot drift apart. Dump output is
// byte-stable: fixed key order, shortest round-trip numerals.
struct RunConfig {
  // Model dims.
  int t = 8;
  int h = 7, w = 7;
  int q = 8;    // detection slots per frame
  int n_q = 8;  // NAO queries
  int d = 64;
  int heads = 4;
  int encoder_layers = 2;
  int nao_layers = 2;
  int motion_layers = 2;
  int ffn_hidden = 128;
  int c_n = 7, c_v = 7;
  std::string encoder_attention = "joint";  // joint | per_frame
  std::string omd_sampler = "scatter";      // scatter | gather

  // Ablation switches; each removes its module's parameters entirely.
  bool omd_enabled = true;
  bool nao_decoder_enabled = true;
  bool nao_injection_enabled = true;

  // Loss weights.
  double lambda_iou = 1.0;
  double lambda_l1 = 1.0;
  double lambda_noun = 1.0;
  double lambda_verb = 1.0;
  double lambda_ttc = 10.0;
  double noobj_weight = 0.1;

  // Optimizer.
  double lr = 1e-3;
  double weight_decay = 0.0;
  int epochs = 2;
  int batch_size = 8;

  // Scene generator.
  int frame_h = 56, frame_w = 56;
  double fps = 4.0;
  int objects_min = 3, objects_max = 6;
  int horizon_min = 1, horizon_max = 7;
  double speed_min = 0.02, speed_max = 0.10;
  double speed_bucket = 0.06;
  double actor_side = 0.06;
  double jitter_sigma = 0.0;
  double p_drop = 0.0;
  double p_fp = 0.0;
  std::string variant = "standard";  // standard | nao_hidden
  double nao_hidden_fraction = 0.125;
  int n_train = 2000;
  int n_val = 200;

  uint64_t seed = 1;
  std::string train_path = "data/train.clips";
  std::string val_path = "data/val.clips";
  std::string checkpoint_path = "out/model.ckpt";
  std::string train_log_path;  // empty: stdout only

  template <class Self, class F>
  static void visit(Self& c, F&& f) {
    f("t", c.t);
    f("h", c.h);
    f("w", c.w);
    f("q", c.q);
    f("n_q", c.n_q);
    f("d", c.d);
    f("heads", c.heads);
    f("encoder_layers", c.encoder_layers);
    f("nao_layers", c.nao_layers);
    f("motion_layers", c.motion_layers);
    f("ffn_hidden", c.ffn_hidden);
    f("c_n", c.c_n);
    f("c_v", c.c_v);
    f("encoder_attention", c.encoder_attention);
    f("omd_sampler", c.omd_sampler);
    f("omd_enabled", c.omd_enabled);
    f("nao_decoder_enabled", c.nao_decoder_enabled);
    f("nao_injection_enabled", c.nao_injection_enabled);
    f("lambda_iou", c.lambda_iou);
    f("lambda_l1", c.lambda_l1);
    f("lambda_noun", c.lambda_noun);
    f("lambda_verb", c.lambda_verb);
    f("lambda_ttc", c.lambda_ttc);
    f("noobj_weight", c.noobj_weight);
    f("lr", c.lr);
    f("weight_decay", c.weight_decay);
    f("epochs", c.epochs);
    f("batch_size", c.batch_size);
    f("frame_h", c.frame_h);
    f("frame_w", c.frame_w);
    f("fps", c.fps);
    f("objects_min", c.objects_min);
    f("objects_max", c.objects_max);
    f("horizon_min", c.horizon_min);
    f("horizon_max", c.horizon_max);
    f("speed_min", c.speed_min);
    f("speed_max", c.speed_max);
    f("speed_bucket", c.speed_bucket);
    f("actor_side", c.actor_side);
    f("jitter_sigma", c.jitter_sigma);
    f("p_drop", c.p_drop);
    f("p_fp", c.p_fp);
    f("variant", c.variant);
    f("nao_hidden_fraction", c.nao_hidden_fraction);
    f("n_train", c.n_train);
    f("n_val", c.n_val);
    f("seed", c.seed);
    f("train_path", c.train_path);
    f("val_path", c.val_path);
    f("checkpoint_path", c.checkpoint_path);
    f("train_log_path", c.train_log_path);
  }

  void validate() const {
    auto positive = [](const char* name, int v) {
      if (v < 1) throw ValidationError(std::string("config: ") + name + " must be positive");
    };
    positive("t", t);
    positive("h", h);
    positive("w", w);
    positive("q", q);
    positive("n_q", n_q);
    positive("d", d);
    positive("heads", heads);
    positive("encoder_layers", encoder_layers);
    positive("nao_layers", nao_layers);
    positive("motion_layers", motion_layers);
    positive("ffn_hidden", ffn_hidden);
    positive("c_n", c_n);
    positive("c_v", c_v);
    positive("epochs", epochs);
    positive("batch_size", batch_size);
    positive("n_train", n_train);
    positive("n_val", n_val);
    if (t < 2) throw ValidationError("config: t must be >= 2 (motion loss needs a shift)");
    if (d % heads != 0) throw ValidationError("config: d must divide evenly across heads");
    if (d % 4 != 0) throw ValidationError("config: d must be a multiple of 4 (spatial encoding)");
    if (frame_h % h != 0 || frame_w % w != 0)
      throw ValidationError("config: frame size must be a multiple of the token grid");
    if (encoder_attention != "joint" && encoder_attention != "per_frame")
      throw ValidationError("config: encoder_attention must be 'joint' or 'per_frame'");
    if (omd_sampler != "scatter" && omd_sampler != "gather")
      throw ValidationError("config: omd_sampler must be 'scatter' or 'gather'");
    if (variant != "standard" && variant != "nao_hidden")
      throw ValidationError("config: variant must be 'standard' or 'nao_hidden'");
    if (lambda_iou < 0 || lambda_l1 < 0 || lambda_noun < 0 || lambda_verb < 0 || lambda_ttc < 0)
      throw ValidationError("config: loss weights must be non-negative");
    if (noobj_weight <= 0) throw ValidationError("config: noobj_weight must be positive");
    if (lr <= 0) throw ValidationError("config: lr must be positive");
    if (weight_decay < 0) throw ValidationError("config: weight_decay must be non-negative");
    if (nao_hidden_fraction < 0 || nao_hidden_fraction > 1)
      throw ValidationError("config: nao_hidden_fraction must lie in [0,1]");
    scene_config().validate();
  }

  SceneConfig scene_config() const {
    SceneConfig sc;
    sc.h0 = frame_h;
    sc.w0 = frame_w;
    sc.c = 3;
    sc.t = t;
    sc.fps = fps;
    sc.q = q;
    sc.c_n = c_n;
    sc.c_v = c_v;
    sc.objects_min = objects_min;
    sc.objects_max = objects_max;
    sc.horizon_min = horizon_min;
    sc.horizon_max = horizon_max;
    sc.speed_min = speed_min;
    sc.speed_max = speed_max;
    sc.speed_bucket = speed_bucket;
    sc.actor_side = actor_side;
    sc.noise = NoiseConfig{jitter_sigma, p_drop, p_fp};
    sc.seed = seed;
    sc.nao_hidden_fraction = nao_hidden_fraction;
    return sc;
  }

  LossWeights loss_weights() const {
    LossWeights lw;
    lw.lambda_iou = lambda_iou;
    lw.lambda_l1 = lambda_l1;
    lw.lambda_noun = lambda_noun;
    lw.lambda_verb = lambda_verb;
    lw.lambda_ttc = lambda_ttc;
    lw.noobj_weight = noobj_weight;
    return lw;
  }

  std::string dump() const;
  void apply(const std::string& text);  // parses "key = value" lines onto *this
  static RunConfig parse(const std::string& text);
  static RunConfig load_file(const std::string& path);
};

namespace detail {

inline std::string config_num(int v) { return std::to_string(v); }
inline std::string config_num(uint64_t v) { return std::to_string(v); }
inline std::string config_num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string config_trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigSetter {
  const std::string& key;
  const std::string& value;
  int line;
  bool found = false;

  [[noreturn]] void bad(const char* kind) const {
    throw ValidationError("config line " + std::to_string(line) + ": key '" + key +
                          "' expects " + kind + ", got '" + value + "'");
  }
  void operator()(const char* name, int& v) {
    if (key != name) return;
    found = true;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) bad("an integer");
  }
  void operator()(const char* name, uint64_t& v) {
    if (key != name) return;
    found = true;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
      bad("an unsigned integer");
  }
  void operator()(const char* name, double& v) {
    if (key != name) return;
    found = true;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) bad("a number");
  }
  void operator()(const char* name, bool& v) {
    if (key != name) return;
    found = true;
    if (value == "true")
      v = true;
    else if (value == "false")
      v = false;
    else
      bad("'true' or 'false'");
  }
  void operator()(const char* name, std::string& v) {
    if (key != name) return;
    found = true;
    v = value;
  }
};

}  // namespace detail

inline std::string RunConfig::dump() const {
  std::string out;
  RunConfig::visit(*this, [&out](const char* name, const auto& v) {
    out += name;
    out += " = ";
    using V = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<V, std::string>)
      out += v;
    else if constexpr (std::is_same_v<V, bool>)
      out += v ? "true" : "false";
    else
      out += detail::config_num(v);
    out += '\n';
  });
  return out;
}

inline void RunConfig::apply(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::config_trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = detail::config_trim(line.substr(0, eq));
    std::string value = detail::config_trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config line " + std::to_string(line_no) + ": empty key");
    detail::ConfigSetter setter{key, value, line_no};
    RunConfig::visit(*this, setter);
    if (!setter.found)
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                            "'");
  }
}

inline RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  cfg.apply(text);
  return cfg;
}

inline RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

// Keys that determine parameter presence and shapes. Used to turn a silent
// checkpoint/config mismatch into a named compatibility error.
inline std::vector<std::string> config_compat_diff(const RunConfig& a, const RunConfig& b) {
  static const char* const kModelKeys[] = {
      "h",        "w",        "q",           "n_q",          "d",
      "heads",    "encoder_layers",          "nao_layers",   "motion_layers",
      "ffn_hidden", "c_n",    "c_v",         "frame_h",      "frame_w",
      "encoder_attention",    "omd_sampler", "omd_enabled",  "nao_decoder_enabled",
      "nao_injection_enabled"};
  std::vector<std::string> diff;
  for (const char* key : kModelKeys) {
    std::string va, vb;
    auto grab = [&key](const RunConfig& c, std::string& out) {
      RunConfig::visit(c, [&](const char* name, const auto& v) {
        if (std::string(name) != key) return;
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, std::string>)
          out = v;
        else if constexpr (std::is_same_v<V, bool>)
          out = v ? "true" : "false";
        else
          out = detail::config_num(v);
      });
    };
    grab(a, va);
    grab(b, vb);
    if (va != vb) diff.push_back(std::string(key) + ": " + va + " vs " + vb);
  }
  return diff;
}

}  // namespace nextact
