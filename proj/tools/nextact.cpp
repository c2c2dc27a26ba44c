// Command-line front end: dataset generation, training, evaluation,
// single-clip progressive prediction, and annotation curation.
//
// Exit codes: 0 success, 2 validation error (bad input, shape or contract
// violation), 3 numeric failure (non-finite values), 1 anything else.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nextact/config.hpp"
#include "nextact/curation.hpp"
#include "nextact/model.hpp"
#include "nextact/synth.hpp"
#include "nextact/trainer.hpp"

namespace {

using nextact::Clip;
using nextact::Dataset;
using nextact::RunConfig;
using nextact::StaModel;

// Duplicates trainer log lines into an optional file.
class TeeStream {
 public:
  explicit TeeStream(const std::string& path) {
    if (!path.empty()) {
      if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
      file_.open(path, std::ios::trunc);
      if (!file_) throw nextact::IoError("cannot open training log: " + path);
    }
  }
  template <class T>
  TeeStream& operator<<(const T& v) {
    std::cout << v;
    if (file_.is_open()) file_ << v;
    return *this;
  }

 private:
  std::ofstream file_;
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool seed_given = false;
  bool no_omd = false, no_nao_decoder = false, no_nao_injection = false;
};

RunConfig effective_config(const CommonArgs& args, const std::string& fallback_blob = "") {
  RunConfig cfg;
  if (!args.config_path.empty())
    cfg = RunConfig::load_file(args.config_path);
  else if (!fallback_blob.empty())
    cfg = RunConfig::parse(fallback_blob);
  for (const auto& kv : args.sets) cfg.apply(kv);
  if (args.seed_given) cfg.seed = args.seed;
  if (args.no_omd) cfg.omd_enabled = false;
  if (args.no_nao_decoder) cfg.nao_decoder_enabled = false;
  if (args.no_nao_injection) cfg.nao_injection_enabled = false;
  return cfg;
}

void check_dataset_header(const RunConfig& cfg, const Dataset& ds, const std::string& path) {
  const auto& h = ds.header;
  if (h.c != 3 || h.h0 != cfg.frame_h || h.w0 != cfg.frame_w || h.q != cfg.q ||
      h.c_n != cfg.c_n || h.c_v != cfg.c_v)
    throw nextact::ValidationError(
        "dataset " + path + " was generated for a different geometry or vocabulary than the "
        "active config");
}

void ensure_parent(const std::string& path) {
  if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty())
    std::filesystem::create_directories(parent);
}

int cmd_generate(const RunConfig& cfg) {
  cfg.validate();
  ensure_parent(cfg.train_path);
  ensure_parent(cfg.val_path);
  const auto variant = cfg.variant == "nao_hidden" ? nextact::SplitVariant::nao_hidden
                                                   : nextact::SplitVariant::standard;
  nextact::make_split(cfg.scene_config(), cfg.n_train, cfg.n_val, variant, cfg.train_path,
                      cfg.val_path, cfg.dump());
  std::cout << "train " << cfg.train_path << " " << cfg.n_train << "\n";
  std::cout << "val " << cfg.val_path << " " << cfg.n_val << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  Dataset train_ds = nextact::read_dataset(cfg.train_path);
  Dataset val_ds = nextact::read_dataset(cfg.val_path);
  check_dataset_header(cfg, train_ds, cfg.train_path);
  check_dataset_header(cfg, val_ds, cfg.val_path);
  StaModel<float> model(cfg);
  std::cout << "parameters " << model.params.total_numel() << "\n";
  std::ostringstream log;
  TeeStream tee(cfg.train_log_path);
  // Stream per step rather than buffering the whole run.
  struct Forwarder : std::ostream, std::streambuf {
    TeeStream& tee;
    explicit Forwarder(TeeStream& t) : std::ostream(this), tee(t) {}
    int overflow(int c) override {
      if (c != EOF) tee << static_cast<char>(c);
      return c;
    }
  } fwd(tee);
  const nextact::TrainResult res = nextact::train(model, train_ds, val_ds, fwd);
  std::cout << "steps " << res.steps << "\n";
  std::cout << "best_epoch " << res.best_epoch << "\n";
  std::cout << "best_val_ap_box " << nextact::fixed6(res.best_val_ap) << "\n";
  std::cout << "checkpoint " << res.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_path, const std::string& data_path,
             const std::string& out_path) {
  const std::string blob = nextact::ckpt::peek_config(ckpt_path);
  RunConfig cfg = effective_config(args, blob);
  StaModel<float> model(cfg);
  model.load(ckpt_path);
  const std::string data = data_path.empty() ? cfg.val_path : data_path;
  Dataset ds = nextact::read_dataset(data);
  check_dataset_header(cfg, ds, data);
  const nextact::MetricsReport rep = nextact::evaluate(model, ds);
  const std::string text = rep.to_text();
  std::cout << text;
  if (!out_path.empty()) {
    ensure_parent(out_path);
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw nextact::IoError("cannot open report output: " + out_path);
    os << text;
  }
  return 0;
}

Clip clip_prefix(const Clip& full, int prefix) {
  if (prefix < 2 || prefix > full.t)
    throw nextact::ValidationError("prefix length must lie in [2, " + std::to_string(full.t) +
                                   "], got " + std::to_string(prefix));
  Clip p = full;
  p.t = prefix;
  p.frames.resize(static_cast<size_t>(prefix) * full.c * full.h0 * full.w0);
  p.detections.resize(static_cast<size_t>(prefix));
  return p;
}

int cmd_predict(const CommonArgs& args, const std::string& ckpt_path,
                const std::string& data_path, int index, int prefix) {
  const std::string blob = nextact::ckpt::peek_config(ckpt_path);
  RunConfig cfg = effective_config(args, blob);
  StaModel<float> model(cfg);
  model.load(ckpt_path);
  Dataset ds = nextact::read_dataset(data_path);
  check_dataset_header(cfg, ds, data_path);
  if (index < 0 || index >= static_cast<int>(ds.clips.size()))
    throw nextact::ValidationError("clip index " + std::to_string(index) +
                                   " outside dataset of " + std::to_string(ds.clips.size()));
  const Clip& full = ds.clips[static_cast<size_t>(index)];
  if (prefix == 0) prefix = full.t;
  const Clip clip = clip_prefix(full, prefix);

  nextact::NoGradGuard<float> guard(model.params);
  const nextact::EvalRecord rec = model.eval_record(clip, index);
  std::cout << "clip " << rec.clip_id << "\n";
  std::cout << "prefix " << prefix << "\n";
  std::cout << "verb " << nextact::argmax_index(rec.verb_logits) << "\n";
  std::cout << "ttc " << nextact::fixed6(rec.clip_ttc) << "\n";
  std::cout << "candidates " << rec.preds.size() << "\n";
  if (!rec.preds.empty()) {
    const auto& best = rec.preds.front();
    std::cout << "best_box " << nextact::fixed6(best.box.x0) << " " << nextact::fixed6(best.box.y0)
              << " " << nextact::fixed6(best.box.x1) << " " << nextact::fixed6(best.box.y1)
              << "\n";
    std::cout << "best_noun " << best.noun << "\n";
    std::cout << "best_confidence " << nextact::fixed6(best.confidence) << "\n";
  }
  for (size_t i = 0; i < rec.preds.size(); ++i) {
    const auto& p = rec.preds[i];
    std::cout << "candidate " << i << " confidence " << nextact::fixed6(p.confidence) << " noun "
              << p.noun << " box " << nextact::fixed6(p.box.x0) << " " << nextact::fixed6(p.box.y0)
              << " " << nextact::fixed6(p.box.x1) << " " << nextact::fixed6(p.box.y1) << " verb "
              << p.verb << " ttc " << nextact::fixed6(p.ttc) << "\n";
  }
  return 0;
}

int cmd_curate(const std::string& in_path, const std::string& out_path) {
  ensure_parent(out_path);
  const nextact::CurationSummary summary = nextact::curate_dataset(in_path, out_path);
  std::cout << summary.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"next-active-object anticipation: synthetic data, training, evaluation"};
  app.require_subcommand(0, 1);

  CommonArgs args;
  bool print_config = false;
  app.add_option("--config", args.config_path, "config file (flat key = value lines)");
  app.add_option("--set", args.sets, "override a config key, e.g. --set epochs=4 (repeatable)");
  app.add_option("--seed", args.seed, "override the seed")->each([&args](const std::string&) {
    args.seed_given = true;
  });
  app.add_flag("--no-omd", args.no_omd, "disable the object motion dynamics stream");
  app.add_flag("--no-nao-decoder", args.no_nao_decoder, "disable the NAO query decoder");
  app.add_flag("--no-nao-injection", args.no_nao_injection,
               "disable NAO feature injection into the motion decoder");
  app.add_flag("--print-config", print_config, "dump the effective config and exit");

  auto* gen = app.add_subcommand("generate", "write synthetic train/val splits");
  auto* train = app.add_subcommand("train", "train a model on the configured splits");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and print the metrics report");
  auto* predict = app.add_subcommand("predict", "predict on one clip from an observed prefix");
  auto* curate = app.add_subcommand("curate", "annotate raw records with curated NAO boxes");
  for (auto* sub : {gen, train, eval, predict, curate}) sub->fallthrough();

  std::string ckpt_path, data_path, out_path;
  int clip_index = 0, prefix_len = 0;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file");
  eval->add_option("--data", data_path, "dataset to evaluate (default: config val_path)");
  eval->add_option("--out", out_path, "also write the report to this file");
  predict->add_option("--checkpoint", ckpt_path, "checkpoint file");
  predict->add_option("--data", data_path, "dataset holding the clip")->required();
  predict->add_option("--index", clip_index, "clip index within the dataset");
  predict->add_option("--prefix", prefix_len, "observed prefix length (default: full clip)");
  std::string cur_in, cur_out;
  curate->add_option("--in", cur_in, "raw records (JSON lines)")->required();
  curate->add_option("--out", cur_out, "annotated output (JSON lines)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_config) {
      std::cout << effective_config(args).dump();
      return 0;
    }
    if (gen->parsed()) return cmd_generate(effective_config(args));
    if (train->parsed()) return cmd_train(effective_config(args));
    if (eval->parsed()) {
      if (ckpt_path.empty()) ckpt_path = effective_config(args).checkpoint_path;
      return cmd_eval(args, ckpt_path, data_path, out_path);
    }
    if (predict->parsed()) {
      if (ckpt_path.empty()) ckpt_path = effective_config(args).checkpoint_path;
      return cmd_predict(args, ckpt_path, data_path, clip_index, prefix_len);
    }
    if (curate->parsed()) return cmd_curate(cur_in, cur_out);
    std::cout << app.help();
    return 0;
  } catch (const nextact::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const nextact::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nextact::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
