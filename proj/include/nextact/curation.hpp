#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextact/geometry.hpp"

namespace nextact {

enum class CurationOutcome { matched_direct, matched_fallback, absent };

inline const char* to_string(CurationOutcome o) {
  switch (o) {
    case CurationOutcome::matched_direct: return "matched_direct";
    case CurationOutcome::matched_fallback: return "matched_fallback";
    default: return "absent";
  }
}

struct RawDetection {
  Box box;
  int class_id = -1;
  double score = 0.0;
};

// Input side of one curation record: the clip's future-noun label, the raw
// detections of the last frame, the hand-object interaction boxes, and an
// optional embedded redetection fixture (top-k class/score lists parallel to
// hand_boxes) for data-driven pipelines.
struct CurationInput {
  std::string clip_id;
  int gt_noun = -1;
  std::vector<RawDetection> raw_detections;
  std::vector<Box> hand_boxes;
  std::vector<std::vector<std::pair<int, double>>> redetect_fixture;
};

struct CurationRecord {
  std::string clip_id;
  int gt_noun = -1;
  CurationOutcome outcome = CurationOutcome::absent;
  std::optional<Box> nao_box;
};

// Re-runs a detector on an ROI, returning (class, score) candidates sorted by
// descending score.
using RedetectFn = std::function<std::vector<std::pair<int, double>>(const Box&)>;

// Derives a NAO box for a clip that only has a noun label.
// 1. If a raw detection carries the ground-truth noun, take the
//    highest-scoring such box (ties: larger area).
// 2. Otherwise re-detect each hand-object box in order and accept the first
//    whose top-3 contains the noun; the hand-object box itself becomes the
//    location (the label never comes from the redetector).
// 3. Otherwise the annotation is absent.
inline CurationRecord curate(const CurationInput& in, const RedetectFn& redetect) {
  if (in.gt_noun < 0)
    throw ValidationError("curate: record '" + in.clip_id + "' has no valid noun label");
  CurationRecord out;
  out.clip_id = in.clip_id;
  out.gt_noun = in.gt_noun;

  const RawDetection* best = nullptr;
  for (const auto& det : in.raw_detections) {
    if (det.class_id != in.gt_noun) continue;
    if (!best || det.score > best->score ||
        (det.score == best->score && det.box.area() > best->box.area()))
      best = &det;
  }
  if (best) {
    out.outcome = CurationOutcome::matched_direct;
    out.nao_box = best->box;
    return out;
  }

  for (size_t h = 0; h < in.hand_boxes.size(); ++h) {
    std::vector<std::pair<int, double>> top;
    if (redetect) {
      try {
        top = redetect(in.hand_boxes[h]);
      } catch (const std::exception& e) {
        throw PipelineError("curate: redetect failed on clip '" + in.clip_id +
                            "': " + e.what());
      }
    } else if (h < in.redetect_fixture.size()) {
      top = in.redetect_fixture[h];
    }
    std::stable_sort(top.begin(), top.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const size_t k = std::min<size_t>(3, top.size());
    for (size_t i = 0; i < k; ++i) {
      if (top[i].first == in.gt_noun) {
        out.outcome = CurationOutcome::matched_fallback;
        out.nao_box = in.hand_boxes[h];
        return out;
      }
    }
  }
  out.outcome = CurationOutcome::absent;
  return out;
}

struct CurationSummary {
  int records = 0;
  int direct = 0;
  int fallback = 0;
  int absent = 0;
  std::vector<std::string> errors;

  std::string to_text() const {
    char frac[32];
    std::snprintf(frac, sizeof(frac), "%.6f",
                  records > 0 ? static_cast<double>(absent) / records : 0.0);
    std::string out;
    out += "records " + std::to_string(records) + "\n";
    out += "matched_direct " + std::to_string(direct) + "\n";
    out += "matched_fallback " + std::to_string(fallback) + "\n";
    out += "absent " + std::to_string(absent) + "\n";
    out += std::string("absent_fraction ") + frac + "\n";
    out += "errors " + std::to_string(errors.size()) + "\n";
    return out;
  }
};

namespace curation_json {

using nlohmann::json;

inline Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ValidationError("curation: box must be [x0,y0,x1,y1]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json box_to_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

inline CurationInput input_from_json(const json& j) {
  CurationInput in;
  in.clip_id = j.at("clip_id").get<std::string>();
  in.gt_noun = j.at("gt_noun").get<int>();
  if (j.contains("raw"))
    for (const auto& d : j["raw"]) {
      RawDetection det;
      det.box = box_from_json(d.at("box"));
      det.class_id = d.at("cls").get<int>();
      det.score = d.at("score").get<double>();
      in.raw_detections.push_back(det);
    }
  if (j.contains("hand_boxes"))
    for (const auto& b : j["hand_boxes"]) in.hand_boxes.push_back(box_from_json(b));
  if (j.contains("redetect"))
    for (const auto& lst : j["redetect"]) {
      std::vector<std::pair<int, double>> top;
      for (const auto& e : lst) top.emplace_back(e[0].get<int>(), e[1].get<double>());
      in.redetect_fixture.push_back(std::move(top));
    }
  return in;
}

}  // namespace curation_json

// Line-delimited JSON in, same records + outcome/nao_box out. Per-record
// failures are collected in the summary, never fatal. When `redetect` is
// null, each record's embedded fixture drives the fallback branch.
inline CurationSummary curate_dataset(const std::string& in_path, const std::string& out_path,
                                      const RedetectFn& redetect = nullptr) {
  std::ifstream is(in_path);
  if (!is) throw IoError("cannot open curation records: " + in_path);
  std::ofstream os(out_path, std::ios::trunc);
  if (!os) throw IoError("cannot open curation output: " + out_path);
  CurationSummary summary;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++summary.records;
    try {
      auto j = curation_json::json::parse(line);
      CurationInput in = curation_json::input_from_json(j);
      CurationRecord rec = curate(in, redetect);
      switch (rec.outcome) {
        case CurationOutcome::matched_direct: ++summary.direct; break;
        case CurationOutcome::matched_fallback: ++summary.fallback; break;
        case CurationOutcome::absent: ++summary.absent; break;
      }
      j["outcome"] = to_string(rec.outcome);
      if (rec.nao_box)
        j["nao_box"] = curation_json::box_to_json(*rec.nao_box);
      else
        j.erase("nao_box");
      os << j.dump() << "\n";
    } catch (const std::exception& e) {
      summary.errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!os) throw IoError("write failure on curation output: " + out_path);
  return summary;
}

}  // namespace nextact
