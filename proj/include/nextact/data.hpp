#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "nextact/geometry.hpp"
#include "nextact/io.hpp"

namespace nextact {

// One detector output. Dummies fill unused slots of a fixed-size set and
// carry an all-zero box with score 0.
struct Detection {
  Box box;
  double score = 0.0;
  int class_id = -1;  // noun index, -1 when unknown
  bool is_dummy = false;

  static Detection dummy() {
    Detection d;
    d.is_dummy = true;
    return d;
  }
};

// Exactly Q detections: real entries first, sorted by descending score, then
// dummies.
struct DetectionSet {
  std::vector<Detection> d;

  int real_count() const {
    int n = 0;
    for (const auto& det : d)
      if (!det.is_dummy) ++n;
    return n;
  }
};

// Ground truth for one clip: the next-active-object box (corner form,
// normalized), its noun, the future verb, and the time to contact in seconds.
struct STATarget {
  Box box;
  int noun = 0;
  int verb = 0;
  double ttc = 0.0;
  bool nao_present = true;
};

// Observed clip: T raw frames (channel-major u8 grids, value/255), per-frame
// padded detections, and the target.
struct Clip {
  std::string clip_id;
  double fps = 4.0;
  int t = 0, c = 0, h0 = 0, w0 = 0;
  std::vector<uint8_t> frames;  // t * c * h0 * w0
  std::vector<DetectionSet> detections;
  STATarget target;

  uint8_t pixel(int frame, int ch, int y, int x) const {
    return frames[((static_cast<size_t>(frame) * c + ch) * h0 + y) * w0 + x];
  }
};

// Pads (or truncates, keeping the top Q by score) a raw detection list to
// exactly Q entries. Real entries are sorted by descending score with the
// original order as tie-break; dummies follow.
inline DetectionSet pad_detections(std::vector<Detection> raw, int q) {
  if (q < 1) throw ValidationError("pad_detections: Q must be >= 1");
  for (const auto& det : raw) {
    if (det.is_dummy) continue;
    check_box(det.box, "pad_detections");
    if (det.score < 0.0 || det.score > 1.0)
      throw ValidationError("pad_detections: score " + std::to_string(det.score) +
                            " outside [0,1]");
  }
  raw.erase(std::remove_if(raw.begin(), raw.end(), [](const Detection& d) { return d.is_dummy; }),
            raw.end());
  std::vector<int> idx(raw.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return raw[static_cast<size_t>(a)].score >
                                              raw[static_cast<size_t>(b)].score; });
  DetectionSet out;
  const int keep = std::min<int>(q, static_cast<int>(raw.size()));
  out.d.reserve(static_cast<size_t>(q));
  for (int i = 0; i < keep; ++i) out.d.push_back(raw[static_cast<size_t>(idx[i])]);
  while (static_cast<int>(out.d.size()) < q) out.d.push_back(Detection::dummy());
  return out;
}

// ------------------------------------------------------------ dataset files

// Self-describing clip container. Frames are stored as raw u8 so that
// write-then-read round-trips bit-exactly.
struct DatasetHeader {
  int t = 0, c = 0, h0 = 0, w0 = 0;
  int q = 0;
  int c_n = 0, c_v = 0;
  int num_clips = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Clip> clips;
};

namespace dataio {

constexpr char kMagic[8] = {'N', 'X', 'T', 'C', 'L', 'I', 'P', '1'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kFramesRawU8 = 0;

inline void write_box(std::ostream& os, const Box& b) {
  lio::write_f32(os, static_cast<float>(b.x0));
  lio::write_f32(os, static_cast<float>(b.y0));
  lio::write_f32(os, static_cast<float>(b.x1));
  lio::write_f32(os, static_cast<float>(b.y1));
}

inline Box read_box(std::istream& is) {
  Box b;
  b.x0 = lio::read_f32(is);
  b.y0 = lio::read_f32(is);
  b.x1 = lio::read_f32(is);
  b.y1 = lio::read_f32(is);
  return b;
}

inline void write_clip(std::ostream& os, const Clip& clip, const DatasetHeader& h) {
  lio::write_str(os, clip.clip_id);
  lio::write_f32(os, static_cast<float>(clip.fps));
  lio::write_u8(os, kFramesRawU8);
  os.write(reinterpret_cast<const char*>(clip.frames.data()),
           static_cast<std::streamsize>(clip.frames.size()));
  for (const auto& ds : clip.detections) {
    for (const auto& det : ds.d) {
      write_box(os, det.box);
      lio::write_f32(os, static_cast<float>(det.score));
      lio::write_i32(os, det.class_id);
      lio::write_u8(os, det.is_dummy ? 1 : 0);
    }
  }
  write_box(os, clip.target.box);
  lio::write_i32(os, clip.target.noun);
  lio::write_i32(os, clip.target.verb);
  lio::write_f32(os, static_cast<float>(clip.target.ttc));
  lio::write_u8(os, clip.target.nao_present ? 1 : 0);
  (void)h;
}

inline Clip read_clip(std::istream& is, const DatasetHeader& h) {
  Clip clip;
  clip.clip_id = lio::read_str(is);
  clip.fps = lio::read_f32(is);
  clip.t = h.t;
  clip.c = h.c;
  clip.h0 = h.h0;
  clip.w0 = h.w0;
  const uint8_t kind = lio::read_u8(is);
  if (kind != kFramesRawU8)
    throw ValidationError("dataset clip '" + clip.clip_id + "' uses unsupported frame kind " +
                          std::to_string(kind));
  clip.frames.resize(static_cast<size_t>(h.t) * h.c * h.h0 * h.w0);
  is.read(reinterpret_cast<char*>(clip.frames.data()),
          static_cast<std::streamsize>(clip.frames.size()));
  clip.detections.resize(static_cast<size_t>(h.t));
  for (auto& ds : clip.detections) {
    ds.d.resize(static_cast<size_t>(h.q));
    for (auto& det : ds.d) {
      det.box = read_box(is);
      det.score = lio::read_f32(is);
      det.class_id = lio::read_i32(is);
      det.is_dummy = lio::read_u8(is) != 0;
    }
  }
  clip.target.box = read_box(is);
  clip.target.noun = lio::read_i32(is);
  clip.target.verb = lio::read_i32(is);
  clip.target.ttc = lio::read_f32(is);
  clip.target.nao_present = lio::read_u8(is) != 0;
  return clip;
}

}  // namespace dataio

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open dataset for writing: " + path);
  os.write(dataio::kMagic, 8);
  lio::write_u32(os, dataio::kVersion);
  const auto& h = ds.header;
  for (int v : {h.t, h.c, h.h0, h.w0, h.q, h.c_n, h.c_v,
                static_cast<int>(ds.clips.size())})
    lio::write_u32(os, static_cast<uint32_t>(v));
  for (const auto& clip : ds.clips) dataio::write_clip(os, clip, h);
  if (!os) throw IoError("write failure on dataset: " + path);
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset for reading: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, dataio::kMagic, 8) != 0)
    throw ValidationError("not a clip dataset file: " + path);
  const uint32_t version = lio::read_u32(is);
  if (version != dataio::kVersion)
    throw ValidationError("unsupported dataset version " + std::to_string(version) + " in " +
                          path);
  Dataset ds;
  auto rd = [&] { return static_cast<int>(lio::read_u32(is)); };
  ds.header.t = rd();
  ds.header.c = rd();
  ds.header.h0 = rd();
  ds.header.w0 = rd();
  ds.header.q = rd();
  ds.header.c_n = rd();
  ds.header.c_v = rd();
  ds.header.num_clips = rd();
  if (!is) throw IoError("truncated dataset header: " + path);
  ds.clips.reserve(static_cast<size_t>(ds.header.num_clips));
  for (int i = 0; i < ds.header.num_clips; ++i) {
    ds.clips.push_back(dataio::read_clip(is, ds.header));
    if (!is) throw IoError("truncated dataset at clip " + std::to_string(i) + ": " + path);
  }
  return ds;
}

}  // namespace nextact
