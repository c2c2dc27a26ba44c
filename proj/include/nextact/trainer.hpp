#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "nextact/model.hpp"

namespace nextact {

// Formats a metric value exactly like the metrics report so logs diff cleanly.
inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct TrainResult {
  int steps = 0;
  int epochs = 0;
  double best_val_ap = 0.0;
  int best_epoch = -1;
  std::string checkpoint_path;
};

// Runs the model over a split and reduces to the metrics report. Gradient
// tracking is off for the duration, so no graph is built.
template <class R>
MetricsReport evaluate(StaModel<R>& model, const Dataset& ds) {
  NoGradGuard<R> guard(model.params);
  std::vector<EvalRecord> records;
  records.reserve(ds.clips.size());
  for (size_t i = 0; i < ds.clips.size(); ++i)
    records.push_back(model.eval_record(ds.clips[i], static_cast<int>(i)));
  return compute_metrics(records);
}

inline double report_value(const MetricsReport& rep, const std::string& key) {
  for (const auto& [k, v] : rep.entries)
    if (k == key) return v;
  throw ValidationError("metrics report has no entry '" + key + "'");
}

// Mean combined loss over a split, forward-only.
template <class R>
double mean_loss(StaModel<R>& model, const Dataset& ds) {
  if (ds.clips.empty()) throw ValidationError("mean_loss: empty dataset");
  NoGradGuard<R> guard(model.params);
  double sum = 0.0;
  for (const auto& clip : ds.clips) sum += model.clip_loss(clip).parts.total;
  return sum / static_cast<double>(ds.clips.size());
}

// Mini-batch SGD over the training split. Deterministic end to end: epoch
// shuffles are counter-based (seed stream 1000+epoch), iteration order is
// fixed, and gradients accumulate clip by clip scaled by 1/batch. The best
// validation-AP checkpoint (earliest epoch on ties) is kept.
template <class R>
TrainResult train(StaModel<R>& model, const Dataset& train_ds, const Dataset& val_ds,
                  std::ostream& log) {
  const RunConfig& cfg = model.cfg;
  if (train_ds.clips.empty()) throw ValidationError("train: empty training split");
  if (val_ds.clips.empty()) throw ValidationError("train: empty validation split");

  TrainResult result;
  result.checkpoint_path = cfg.checkpoint_path;
  if (const auto parent = std::filesystem::path(cfg.checkpoint_path).parent_path();
      !parent.empty())
    std::filesystem::create_directories(parent);

  double best_ap = -1.0;
  std::vector<int> order(train_ds.clips.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed, 1000 + static_cast<uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    const int n = static_cast<int>(order.size());
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      LossBreakdown batch{};
      for (int k = 0; k < bsz; ++k) {
        const Clip& clip = train_ds.clips[static_cast<size_t>(order[static_cast<size_t>(start + k)])];
        ClipLoss<R> cl = model.clip_loss(clip);
        backward(scale(cl.total, 1.0 / bsz));
        batch.box += cl.parts.box / bsz;
        batch.noun += cl.parts.noun / bsz;
        batch.verb += cl.parts.verb / bsz;
        batch.ttc += cl.parts.ttc / bsz;
        batch.feature += cl.parts.feature / bsz;
        batch.total += cl.parts.total / bsz;
      }
      sgd_step(model.params, cfg.lr, cfg.weight_decay);
      ++result.steps;
      log << "epoch " << epoch << " step " << result.steps << " box " << fixed6(batch.box)
          << " noun " << fixed6(batch.noun) << " verb " << fixed6(batch.verb) << " ttc "
          << fixed6(batch.ttc) << " feature " << fixed6(batch.feature) << " total "
          << fixed6(batch.total) << "\n";
    }
    const MetricsReport rep = evaluate(model, val_ds);
    const double ap = report_value(rep, "ap_box");
    log << "epoch " << epoch << " val ap_box " << fixed6(ap) << "\n";
    if (ap > best_ap) {
      best_ap = ap;
      result.best_epoch = epoch;
      model.save(cfg.checkpoint_path);
      log << "epoch " << epoch << " checkpoint " << cfg.checkpoint_path << "\n";
    }
    ++result.epochs;
  }
  result.best_val_ap = best_ap;
  return result;
}

}  // namespace nextact
