#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nextact/synth.hpp"

using namespace nextact;

namespace {

SceneConfig scene() {
  SceneConfig cfg;
  cfg.h0 = 32;
  cfg.w0 = 32;
  cfg.t = 6;
  cfg.q = 6;
  cfg.c_n = 5;
  cfg.c_v = 5;
  cfg.objects_min = 2;
  cfg.objects_max = 4;
  cfg.horizon_min = 1;
  cfg.horizon_max = 5;
  cfg.seed = 7;
  return cfg;
}

bool clips_identical(const Clip& a, const Clip& b) {
  if (a.clip_id != b.clip_id || a.t != b.t || a.fps != b.fps) return false;
  if (a.frames != b.frames) return false;
  if (a.detections.size() != b.detections.size()) return false;
  for (size_t f = 0; f < a.detections.size(); ++f) {
    const auto& da = a.detections[f].d;
    const auto& db = b.detections[f].d;
    if (da.size() != db.size()) return false;
    for (size_t s = 0; s < da.size(); ++s) {
      if (da[s].is_dummy != db[s].is_dummy || da[s].class_id != db[s].class_id ||
          da[s].score != db[s].score)
        return false;
      if (da[s].box.x0 != db[s].box.x0 || da[s].box.y0 != db[s].box.y0 ||
          da[s].box.x1 != db[s].box.x1 || da[s].box.y1 != db[s].box.y1)
        return false;
    }
  }
  return a.target.noun == b.target.noun && a.target.verb == b.target.verb &&
         a.target.ttc == b.target.ttc && a.target.nao_present == b.target.nao_present;
}

}  // namespace

TEST(Synth, SameSeedAndIndexIsBitIdentical) {
  const SceneConfig cfg = scene();
  EXPECT_TRUE(clips_identical(generate_clip(cfg, 5), generate_clip(cfg, 5)));
  EXPECT_FALSE(clips_identical(generate_clip(cfg, 5), generate_clip(cfg, 6)));
  SceneConfig other = cfg;
  other.seed = 8;
  EXPECT_FALSE(clips_identical(generate_clip(cfg, 5), generate_clip(other, 5)));
}

TEST(Synth, TtcIsContactHorizonOverFps) {
  const SceneConfig cfg = scene();
  for (int i = 0; i < 200; ++i) {
    const Clip clip = generate_clip(cfg, i);
    ASSERT_TRUE(clip.target.nao_present);
    const double frames = clip.target.ttc * cfg.fps;
    EXPECT_NEAR(frames, std::round(frames), 1e-9) << "clip " << i;
    EXPECT_GE(frames, cfg.horizon_min - 1e-9);
    EXPECT_LE(frames, cfg.horizon_max + 1e-9);
    EXPECT_DOUBLE_EQ(clip.fps, cfg.fps);
  }
}

TEST(Synth, NaoIsVisibleAndDetectedInTheLastObservedFrame) {
  const SceneConfig cfg = scene();  // noise-free defaults
  for (int i = 0; i < 100; ++i) {
    const Clip clip = generate_clip(cfg, i);
    const Box& gt = clip.target.box;
    check_box(gt, "synth target");
    EXPECT_GT(gt.area(), 0.0);
    EXPECT_GE(gt.x0, 0.0);
    EXPECT_GE(gt.y0, 0.0);
    EXPECT_LE(gt.x1, 1.0);
    EXPECT_LE(gt.y1, 1.0);

    // A clean detector reports the target object exactly, at score 1.
    bool found = false;
    for (const auto& det : clip.detections.back().d) {
      if (det.is_dummy || det.class_id != clip.target.noun) continue;
      if (det.box.x0 == gt.x0 && det.box.y0 == gt.y0 && det.box.x1 == gt.x1 &&
          det.box.y1 == gt.y1) {
        EXPECT_DOUBLE_EQ(det.score, 1.0);
        found = true;
      }
    }
    EXPECT_TRUE(found) << "clip " << i;
  }
}

TEST(Synth, VerbIsDeterminedByNounAndSpeedBucket) {
  const SceneConfig cfg = scene();
  bool saw_slow = false, saw_fast = false;
  for (int i = 0; i < 200; ++i) {
    const Clip clip = generate_clip(cfg, i);
    ASSERT_GE(clip.target.noun, 0);
    ASSERT_LT(clip.target.noun, cfg.c_n);
    ASSERT_GE(clip.target.verb, 0);
    ASSERT_LT(clip.target.verb, cfg.c_v);
    const int residue = ((clip.target.verb - 2 * clip.target.noun) % cfg.c_v + cfg.c_v) % cfg.c_v;
    EXPECT_TRUE(residue == 0 || residue == 1) << "clip " << i;
    (residue == 0 ? saw_slow : saw_fast) = true;
  }
  EXPECT_TRUE(saw_slow);
  EXPECT_TRUE(saw_fast);
}

TEST(Synth, CleanDetectorScoresAreExactlyOne) {
  const SceneConfig cfg = scene();
  for (int i = 0; i < 50; ++i) {
    const Clip clip = generate_clip(cfg, i);
    for (const auto& ds : clip.detections) {
      const int real = ds.real_count();
      // Every scene object plus the actor stays on canvas.
      EXPECT_GE(real, cfg.objects_min + 1);
      EXPECT_LE(real, cfg.objects_max + 1);
      for (const auto& det : ds.d)
        if (!det.is_dummy) EXPECT_DOUBLE_EQ(det.score, 1.0);
    }
  }
}

TEST(Synth, DetectorScoreDegradesMonotonicallyWithJitter) {
  const double sigmas[3] = {0.0, 0.02, 0.05};
  double means[3];
  for (int s = 0; s < 3; ++s) {
    SceneConfig cfg = scene();
    cfg.noise.jitter_sigma = sigmas[s];
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < 50; ++i) {
      const Clip clip = generate_clip(cfg, i);
      for (const auto& ds : clip.detections)
        for (const auto& det : ds.d)
          if (!det.is_dummy) {
            sum += det.score;
            ++n;
          }
    }
    means[s] = sum / n;
  }
  EXPECT_DOUBLE_EQ(means[0], 1.0);
  EXPECT_GT(means[0], means[1]);
  EXPECT_GT(means[1], means[2]);
}

TEST(Synth, FullDropLeavesOnlyDummiesOrFalsePositives) {
  SceneConfig cfg = scene();
  cfg.noise.p_drop = 1.0;
  const Clip clip = generate_clip(cfg, 0);
  for (const auto& ds : clip.detections) EXPECT_EQ(ds.real_count(), 0);

  cfg.noise.p_fp = 1.0;
  const Clip with_fp = generate_clip(cfg, 0);
  for (const auto& ds : with_fp.detections) {
    ASSERT_EQ(ds.real_count(), 1);
    const Detection& fp = ds.d[0];
    EXPECT_GE(fp.score, 0.3);
    EXPECT_LE(fp.score, 0.7);
    EXPECT_GE(fp.class_id, 0);
  }
}

TEST(PadDetections, SortsByScoreKeepsTopQAndAppendsDummies) {
  Detection a, b, c;
  a.box = Box{0.1, 0.1, 0.2, 0.2};
  a.score = 0.5;
  b.box = Box{0.3, 0.3, 0.4, 0.4};
  b.score = 0.9;
  c.box = Box{0.5, 0.5, 0.6, 0.6};
  c.score = 0.5;

  DetectionSet five = pad_detections({a, b, c, Detection::dummy()}, 5);
  ASSERT_EQ(five.d.size(), 5u);
  EXPECT_DOUBLE_EQ(five.d[0].score, 0.9);
  // Equal scores keep their original order (a before c).
  EXPECT_DOUBLE_EQ(five.d[1].box.x0, a.box.x0);
  EXPECT_DOUBLE_EQ(five.d[2].box.x0, c.box.x0);
  EXPECT_TRUE(five.d[3].is_dummy);
  EXPECT_TRUE(five.d[4].is_dummy);
  EXPECT_EQ(five.real_count(), 3);

  // Idempotent: repadding an already padded set changes nothing.
  DetectionSet again = pad_detections(five.d, 5);
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(again.d[i].is_dummy, five.d[i].is_dummy);
    EXPECT_DOUBLE_EQ(again.d[i].score, five.d[i].score);
    EXPECT_DOUBLE_EQ(again.d[i].box.x0, five.d[i].box.x0);
  }

  // Truncation keeps the top scorers.
  DetectionSet two = pad_detections({a, b, c}, 2);
  ASSERT_EQ(two.d.size(), 2u);
  EXPECT_DOUBLE_EQ(two.d[0].score, 0.9);
  EXPECT_DOUBLE_EQ(two.d[1].box.x0, a.box.x0);

  Detection bad = a;
  bad.score = 1.5;
  EXPECT_THROW(pad_detections({bad}, 3), ValidationError);
  EXPECT_THROW(pad_detections({a}, 0), ValidationError);
}

TEST(HiddenFlag, PrefixCountsFollowTheFractionExactly) {
  int count = 0;
  for (int i = 0; i < 1000; ++i) {
    if (hidden_flag(i, 0.125)) ++count;
    EXPECT_EQ(count, static_cast<int>(std::floor((i + 1) * 0.125))) << "prefix " << i + 1;
  }
  EXPECT_EQ(count, 125);
  for (int i = 0; i < 100; ++i) {
    EXPECT_FALSE(hidden_flag(i, 0.0));
    EXPECT_TRUE(hidden_flag(i, 1.0));
  }
}

TEST(MakeSplit, WritesDisjointRangesWithTheRequestedHiddenFraction) {
  const SceneConfig cfg = scene();
  const std::string dir = testing::TempDir();
  const std::string train_path = dir + "/synth_train.clips";
  const std::string val_path = dir + "/synth_val.clips";
  make_split(cfg, 16, 8, SplitVariant::nao_hidden, train_path, val_path, "provenance blob");

  const Dataset train = read_dataset(train_path);
  const Dataset val = read_dataset(val_path);
  ASSERT_EQ(train.clips.size(), 16u);
  ASSERT_EQ(val.clips.size(), 8u);
  EXPECT_EQ(train.header.q, cfg.q);
  EXPECT_EQ(train.header.c_n, cfg.c_n);

  int train_hidden = 0, val_hidden = 0;
  for (const auto& c : train.clips) train_hidden += c.target.nao_present ? 0 : 1;
  for (const auto& c : val.clips) val_hidden += c.target.nao_present ? 0 : 1;
  EXPECT_EQ(train_hidden, 2);  // floor(16 * 0.125)
  EXPECT_EQ(val_hidden, 1);    // floor(8 * 0.125)

  // Val picks up exactly where train stopped: clip 0 of val is source index 16.
  const Clip regen = generate_clip(cfg, 16);
  EXPECT_EQ(val.clips[0].clip_id, regen.clip_id);
  EXPECT_EQ(val.clips[0].frames, regen.frames);
  EXPECT_EQ(val.clips[0].target.noun, regen.target.noun);
  EXPECT_EQ(val.clips[0].target.verb, regen.target.verb);
  // Dataset IO stores reals as f32; compare through that rounding.
  EXPECT_DOUBLE_EQ(val.clips[0].target.ttc, static_cast<double>(static_cast<float>(regen.target.ttc)));

  std::ifstream prov(train_path + ".cfg.txt");
  ASSERT_TRUE(prov.good());
  std::string blob((std::istreambuf_iterator<char>(prov)), std::istreambuf_iterator<char>());
  EXPECT_EQ(blob, "provenance blob");

  for (const auto& p : {train_path, val_path, train_path + ".cfg.txt", val_path + ".cfg.txt"})
    std::filesystem::remove(p);
}

TEST(DatasetIo, WriteReadWriteIsByteStable) {
  const SceneConfig cfg = scene();
  const std::string dir = testing::TempDir();
  const std::string p1 = dir + "/roundtrip_a.clips";
  const std::string p2 = dir + "/roundtrip_b.clips";
  const std::string pv = dir + "/roundtrip_v.clips";
  make_split(cfg, 4, 1, SplitVariant::standard, p1, pv);
  write_dataset(p2, read_dataset(p1));

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  EXPECT_FALSE(b1.empty());
  EXPECT_EQ(b1, b2);
  for (const auto& p : {p1, p2, pv}) std::filesystem::remove(p);
}

TEST(DatasetIo, RejectsMissingAndForeignFiles) {
  EXPECT_THROW(read_dataset(testing::TempDir() + "/does_not_exist.clips"), IoError);
  const std::string junk = testing::TempDir() + "/junk.clips";
  {
    std::ofstream os(junk, std::ios::binary);
    os << "XXXXXXXXXXXXXXXX";
  }
  EXPECT_THROW(read_dataset(junk), ValidationError);
  std::filesystem::remove(junk);
}

TEST(MakeSplit, HiddenClipsCarryLabelsButNoGeometry) {
  SceneConfig cfg = scene();
  cfg.nao_hidden_fraction = 1.0;
  const std::string dir = testing::TempDir();
  const std::string tp = dir + "/hidden_t.clips", vp = dir + "/hidden_v.clips";
  make_split(cfg, 4, 2, SplitVariant::nao_hidden, tp, vp);
  const Dataset ds = read_dataset(tp);
  for (const auto& clip : ds.clips) {
    EXPECT_FALSE(clip.target.nao_present);
    EXPECT_DOUBLE_EQ(clip.target.box.area(), 0.0);
    EXPECT_DOUBLE_EQ(clip.target.ttc, 0.0);
    EXPECT_GE(clip.target.noun, 0);  // labels stay for verb supervision
    EXPECT_GE(clip.target.verb, 0);
    EXPECT_EQ(clip.clip_id[0], 'h');
  }
  for (const auto& p : {tp, vp}) std::filesystem::remove(p);
}
