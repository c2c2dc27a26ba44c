#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "nextact/data.hpp"
#include "nextact/geometry.hpp"

namespace nextact {

// Correctness predicates fixed by the evaluation protocol: IoU >= 0.5 counts,
// |TTC error| <= 0.25 s counts.
inline bool box_correct(const Box& pred, const Box& gt) { return iou(pred, gt) >= 0.5; }
inline bool ttc_correct(double pred, double gt) { return std::abs(pred - gt) <= 0.25; }

constexpr unsigned kComboBox = 1u;
constexpr unsigned kComboNoun = 2u;
constexpr unsigned kComboVerb = 4u;
constexpr unsigned kComboTtc = 8u;

struct EvalPrediction {
  Box box;  // corner form
  int noun = -1;
  int verb = -1;
  double ttc = 0.0;
  double confidence = 0.0;  // 1 - p(no-object)
};

// One evaluated clip: its candidate set (sorted by descending confidence),
// the clip-level verb logits, the clip-level TTC estimate, and ground truth.
struct EvalRecord {
  std::string clip_id;
  int clip_index = 0;
  std::vector<EvalPrediction> preds;
  std::vector<double> verb_logits;
  double clip_ttc = 0.0;
  STATarget target;
};

// Argmax with lowest-index tie-break.
inline int argmax_index(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  return best;
}

inline bool top1(const std::vector<double>& logits, int target) {
  return argmax_index(logits) == target;
}

inline bool in_topk(const std::vector<double>& logits, int target, int k) {
  // Rank = number of entries strictly greater, plus equal entries at lower index.
  int rank = 0;
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
    if (i == target) continue;
    if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(target)] ||
        (logits[static_cast<size_t>(i)] == logits[static_cast<size_t>(target)] && i < target))
      ++rank;
  }
  return rank < k;
}

// Pooled-detection Average Precision under the conjunction of the combo's
// predicates. Predictions from all clips are ranked together by confidence
// (ties: clip index, then candidate index); each clip's target can be
// consumed by at most one true positive. Area under the PR curve with
// all-point interpolation.
inline double ap_combo(const std::vector<EvalRecord>& records, unsigned combo) {
  if (!(combo & kComboBox))
    throw ValidationError("ap_combo: every combination includes the box predicate");
  if (records.empty()) throw ValidationError("ap_combo: undefined on an empty record set");
  int positives = 0;
  for (const auto& r : records)
    if (r.target.nao_present) ++positives;
  if (positives == 0)
    throw ValidationError("ap_combo: undefined, no clip has a present target");

  struct Entry {
    double conf;
    int clip, pred;
  };
  std::vector<Entry> pool;
  for (int c = 0; c < static_cast<int>(records.size()); ++c)
    for (int p = 0; p < static_cast<int>(records[static_cast<size_t>(c)].preds.size()); ++p)
      pool.push_back({records[static_cast<size_t>(c)].preds[static_cast<size_t>(p)].confidence,
                      c, p});
  std::sort(pool.begin(), pool.end(), [](const Entry& a, const Entry& b) {
    if (a.conf != b.conf) return a.conf > b.conf;
    if (a.clip != b.clip) return a.clip < b.clip;
    return a.pred < b.pred;
  });

  std::vector<char> consumed(records.size(), 0);
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& e : pool) {
    const auto& rec = records[static_cast<size_t>(e.clip)];
    const auto& pr = rec.preds[static_cast<size_t>(e.pred)];
    bool is_tp = false;
    if (rec.target.nao_present && !consumed[static_cast<size_t>(e.clip)]) {
      bool ok = box_correct(pr.box, rec.target.box);
      if (ok && (combo & kComboNoun)) ok = pr.noun == rec.target.noun;
      if (ok && (combo & kComboVerb)) ok = pr.verb == rec.target.verb;
      if (ok && (combo & kComboTtc)) ok = ttc_correct(pr.ttc, rec.target.ttc);
      if (ok) {
        is_tp = true;
        consumed[static_cast<size_t>(e.clip)] = 1;
      }
    }
    if (is_tp) ++tp;
    else ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / positives);
  }

  // Precision envelope from the right, then rectangle areas at recall steps.
  double ap = 0.0;
  double env = 0.0;
  for (int i = static_cast<int>(pool.size()) - 1; i >= 0; --i) {
    env = std::max(env, precision[static_cast<size_t>(i)]);
    const double prev_recall = i > 0 ? recall[static_cast<size_t>(i - 1)] : 0.0;
    ap += env * (recall[static_cast<size_t>(i)] - prev_recall);
  }
  return ap;
}

// Mean over verb classes (with at least one sample) of per-class top-k
// recall.
inline double topk_classmean(const std::vector<EvalRecord>& records, int k) {
  if (k < 1) throw ValidationError("topk_classmean: k must be >= 1");
  int c_v = 0;
  for (const auto& r : records)
    c_v = std::max(c_v, r.target.verb + 1);
  std::vector<int> hits(static_cast<size_t>(c_v), 0), counts(static_cast<size_t>(c_v), 0);
  for (const auto& r : records) {
    counts[static_cast<size_t>(r.target.verb)]++;
    if (in_topk(r.verb_logits, r.target.verb, k)) hits[static_cast<size_t>(r.target.verb)]++;
  }
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < c_v; ++c)
    if (counts[static_cast<size_t>(c)] > 0) {
      sum += static_cast<double>(hits[static_cast<size_t>(c)]) / counts[static_cast<size_t>(c)];
      ++classes;
    }
  return classes > 0 ? sum / classes : 0.0;
}

// Fixed-order metrics report with %.6f formatting so identical runs produce
// identical bytes.
struct MetricsReport {
  int num_clips = 0;
  std::vector<std::pair<std::string, double>> entries;

  std::string to_text() const {
    std::string out = "num_clips " + std::to_string(num_clips) + "\n";
    char buf[64];
    for (const auto& [k, v] : entries) {
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      out += k;
      out += ' ';
      out += buf;
      out += '\n';
    }
    return out;
  }
};

inline MetricsReport compute_metrics(const std::vector<EvalRecord>& records) {
  MetricsReport rep;
  rep.num_clips = static_cast<int>(records.size());
  const std::pair<const char*, unsigned> combos[] = {
      {"ap_box", kComboBox},
      {"ap_box_noun", kComboBox | kComboNoun},
      {"ap_box_verb", kComboBox | kComboVerb},
      {"ap_box_ttc", kComboBox | kComboTtc},
      {"ap_box_noun_verb", kComboBox | kComboNoun | kComboVerb},
      {"ap_box_noun_ttc", kComboBox | kComboNoun | kComboTtc},
      {"ap_box_verb_ttc", kComboBox | kComboVerb | kComboTtc},
      {"ap_box_noun_verb_ttc", kComboBox | kComboNoun | kComboVerb | kComboTtc},
  };
  for (const auto& [key, combo] : combos) rep.entries.emplace_back(key, ap_combo(records, combo));

  int present = 0, noun_hits = 0, verb_hits = 0, ttc_hits = 0;
  for (const auto& r : records) {
    verb_hits += top1(r.verb_logits, r.target.verb) ? 1 : 0;
    if (!r.target.nao_present) continue;
    ++present;
    if (!r.preds.empty() && r.preds[0].noun == r.target.noun) ++noun_hits;
    if (ttc_correct(r.clip_ttc, r.target.ttc)) ++ttc_hits;
  }
  rep.entries.emplace_back("noun_top1", present ? static_cast<double>(noun_hits) / present : 0.0);
  rep.entries.emplace_back("verb_top1",
                           records.empty() ? 0.0
                                           : static_cast<double>(verb_hits) / records.size());
  rep.entries.emplace_back("verb_top5_classmean", topk_classmean(records, 5));
  rep.entries.emplace_back("ttc_within_band",
                           present ? static_cast<double>(ttc_hits) / present : 0.0);
  return rep;
}

}  // namespace nextact
