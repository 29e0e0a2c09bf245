#include <array>
#include <fstream>

#include <gtest/gtest.h>

#include "cubic/dataset.hpp"
#include "cubic/errors.hpp"
#include "cubic/rng.hpp"
#include "helpers.hpp"

using namespace cubic;
using cubic::testing::TempDir;

namespace {

VideoClip random_clip(int64_t t, int64_t h, int64_t w, uint64_t seed) {
  VideoClip c = VideoClip::blank(t, h, w);
  Rng rng(seed);
  for (uint8_t& p : c.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  c.clip_id = "clip-" + std::to_string(seed);
  c.action_label = static_cast<int>(seed % 5);
  return c;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::array<int64_t, 256> frame_histogram(const VideoClip& c, int64_t t) {
  std::array<int64_t, 256> h{};
  const size_t n = c.frame_bytes();
  for (size_t i = 0; i < n; ++i) ++h[c.pixels[static_cast<size_t>(t) * n + i]];
  return h;
}

}  // namespace

TEST(Clip, RoundTripIsBitExact) {
  TempDir dir;
  VideoClip a = random_clip(5, 7, 9, 3);
  write_clip(a, dir / "a.stcl");
  EXPECT_EQ(read_clip(dir / "a.stcl"), a);
  a.action_label.reset();
  a.clip_id.clear();
  write_clip(a, dir / "b.stcl");
  EXPECT_EQ(read_clip(dir / "b.stcl"), a);
}

TEST(Clip, CorruptedFilesAreRejected) {
  TempDir dir;
  write_clip(random_clip(3, 4, 4, 1), dir / "good.stcl");
  const std::vector<char> good = read_bytes(dir / "good.stcl");
  auto rejected = [&](std::vector<char> bytes) {
    write_bytes(dir / "bad.stcl", bytes);
    EXPECT_THROW(read_clip(dir / "bad.stcl"), FormatError);
  };
  std::vector<char> b = good;
  b[1] = 'X';
  rejected(b);
  b = good;
  b[4] = 2;
  rejected(b);
  b = good;
  b[8] = 4;  // frame count no longer matches the payload
  rejected(b);
  b = good;
  b[20] = 4;  // channel count
  rejected(b);
  rejected(std::vector<char>(good.begin(), good.end() - 1));
  b = good;
  b.push_back(1);
  rejected(b);
  EXPECT_THROW(read_clip(dir / "none.stcl"), FormatError);
}

TEST(Clip, TimeReversalReversesFrames) {
  const VideoClip a = random_clip(4, 3, 3, 2);
  const VideoClip r = a.time_reversed();
  EXPECT_EQ(r.at(0, 1, 2, 1), a.at(3, 1, 2, 1));
  EXPECT_EQ(r.time_reversed(), a);
}

TEST(Index, WriteReadAndRejectMalformed) {
  TempDir dir;
  const std::vector<IndexEntry> entries = {{"clips/a.stcl", 0}, {"clips/b.stcl", 3}};
  write_index(entries, dir / "i.txt");
  EXPECT_EQ(read_index(dir / "i.txt"), entries);
  std::ofstream(dir / "bad.txt") << "clips/a.stcl\tx\n";
  EXPECT_THROW(read_index(dir / "bad.txt"), FormatError);
  std::ofstream(dir / "neg.txt") << "clips/a.stcl\t-1\n";
  EXPECT_THROW(read_index(dir / "neg.txt"), FormatError);
  std::ofstream(dir / "nolabel.txt") << "clips/a.stcl\n";
  EXPECT_THROW(read_index(dir / "nolabel.txt"), FormatError);
}

TEST(KeyValues, ParsingRules) {
  TempDir dir;
  std::ofstream(dir / "a.cfg") << "# comment\n\n key = value \nother=1=2\n";
  const KeyValues kv = read_key_values(dir / "a.cfg");
  EXPECT_EQ(kv.at("key"), "value");
  EXPECT_EQ(kv.at("other"), "1=2");
  std::ofstream(dir / "dup.cfg") << "a=1\na=2\n";
  EXPECT_THROW(read_key_values(dir / "dup.cfg"), FormatError);
  std::ofstream(dir / "noeq.cfg") << "just words\n";
  EXPECT_THROW(read_key_values(dir / "noeq.cfg"), FormatError);
  write_key_values(kv, dir / "b.cfg");
  EXPECT_EQ(read_key_values(dir / "b.cfg"), kv);
}

TEST(Synthetic, RenderingIsDeterministicAndMirrorPairsAreTimeReversals) {
  SyntheticSpec spec;
  for (int pair = 0; pair < 4; ++pair) {
    const VideoClip fwd = render_synthetic_clip(spec, 2 * pair, 99);
    const VideoClip again = render_synthetic_clip(spec, 2 * pair, 99);
    EXPECT_EQ(fwd, again);
    const VideoClip back = render_synthetic_clip(spec, 2 * pair + 1, 99);
    EXPECT_EQ(back.action_label, 2 * pair + 1);
    for (int64_t t = 0; t < spec.frames; ++t) {
      EXPECT_EQ(frame_histogram(fwd, t), frame_histogram(back, spec.frames - 1 - t)) << "pair " << pair;
    }
    EXPECT_NE(fwd.pixels, back.pixels);
  }
  EXPECT_EQ(synthetic_class_name(0), "move_right");
  EXPECT_EQ(synthetic_class_name(1), "move_left");
  EXPECT_THROW(render_synthetic_clip(spec, 8, 1), std::out_of_range);
  SyntheticSpec odd;
  odd.num_classes = 7;
  EXPECT_THROW(odd.validate(), ConfigError);
}

TEST(Synthetic, GeneratedDatasetLoadsBack) {
  TempDir dir;
  SyntheticSpec spec;
  spec.num_classes = 4;
  spec.clips_per_class = 25;
  spec.seed = 5;
  const Dataset d = generate_synthetic_dataset(spec, dir.path());
  EXPECT_EQ(d.train.size() + d.test.size(), 100u);
  EXPECT_EQ(d.test.size(), 20u);
  const Dataset loaded = load_dataset(dir.path());
  EXPECT_EQ(loaded.num_classes, 4);
  EXPECT_EQ(loaded.train, d.train);
  EXPECT_EQ(loaded.class_names[3], "move_up");
  const std::vector<VideoClip> test = load_clips(loaded, loaded.test);
  ASSERT_EQ(test.size(), 20u);
  EXPECT_EQ(test[0].action_label, loaded.test[0].label);

  TempDir other;
  generate_synthetic_dataset(spec, other.path());
  for (const IndexEntry& e : d.train) {
    EXPECT_EQ(read_bytes(dir.path() / e.path), read_bytes(other.path() / e.path)) << e.path;
  }
}

TEST(Synthetic, DatasetErrors) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path()), FormatError);
  SyntheticSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 2;
  spec.test_fraction = 0.5;
  generate_synthetic_dataset(spec, dir.path());
  std::ofstream(dir / "train.txt", std::ios::app) << "clips/c00_0000.stcl\t5\n";
  EXPECT_THROW(load_dataset(dir.path()), FormatError);
  write_index({{"clips/c00_0000.stcl", 1}}, dir / "train.txt");
  const Dataset d = load_dataset(dir.path());
  EXPECT_THROW(load_clips(d, d.train), FormatError);
}

TEST(Synthetic, MirrorPairsAreInvisibleToAFramewiseBlindProbe) {
  // Nearest-centroid probes. A temporally blind feature (the mean frame,
  // 7x7-pooled) must stay near chance within each mirror pair, while a
  // gradient-based motion feature (frame difference times spatial gradient)
  // separates the translation pairs.
  SyntheticSpec spec;
  const int per_class = 48, train_count = 36;
  auto features = [&](const VideoClip& c, bool temporal) {
    if (temporal) {
      std::vector<double> f(2, 0.0);
      double norm = 1e-9;
      for (int64_t t = 0; t + 1 < c.frames; ++t)
        for (int64_t y = 1; y + 1 < c.height; ++y)
          for (int64_t x = 1; x + 1 < c.width; ++x)
            for (int k = 0; k < 3; ++k) {
              const double dt = double(c.at(t + 1, y, x, k)) - c.at(t, y, x, k);
              const double dx = double(c.at(t, y, x + 1, k)) - c.at(t, y, x - 1, k);
              const double dy = double(c.at(t, y + 1, x, k)) - c.at(t, y - 1, x, k);
              f[0] += dt * dx;
              f[1] += dt * dy;
              norm += dx * dx + dy * dy;
            }
      for (double& v : f) v /= norm;
      return f;
    }
    std::vector<double> f(7 * 7 * 3, 0.0);
    for (int64_t t = 0; t < c.frames; ++t)
      for (int64_t y = 0; y < c.height; ++y)
        for (int64_t x = 0; x < c.width; ++x)
          for (int k = 0; k < 3; ++k) f[static_cast<size_t>(((y / 8) * 7 + x / 8) * 3 + k)] += c.at(t, y, x, k);
    return f;
  };
  double blind_correct = 0, temporal_correct = 0, total = 0, temporal_total = 0;
  for (int pair = 0; pair < 4; ++pair) {
    std::array<std::vector<std::vector<double>>, 2> blind, temporal;
    for (int side = 0; side < 2; ++side) {
      for (int i = 0; i < per_class; ++i) {
        const int label = 2 * pair + side;
        const VideoClip c = render_synthetic_clip(spec, label, derive_seed(7, {static_cast<uint64_t>(label),
                                                                                static_cast<uint64_t>(i)}));
        blind[side].push_back(features(c, false));
        temporal[side].push_back(features(c, true));
      }
    }
    auto accuracy = [&](const std::array<std::vector<std::vector<double>>, 2>& feats) {
      std::array<std::vector<double>, 2> centroid;
      for (int s = 0; s < 2; ++s) {
        centroid[s].assign(feats[s][0].size(), 0.0);
        for (int i = 0; i < train_count; ++i)
          for (size_t k = 0; k < centroid[s].size(); ++k) centroid[s][k] += feats[s][i][k] / train_count;
      }
      int correct = 0;
      for (int s = 0; s < 2; ++s) {
        for (int i = train_count; i < per_class; ++i) {
          double d[2] = {0, 0};
          for (int c = 0; c < 2; ++c)
            for (size_t k = 0; k < centroid[c].size(); ++k) {
              const double e = feats[s][i][k] - centroid[c][k];
              d[c] += e * e;
            }
          correct += (d[1] < d[0] ? 1 : 0) == s;
        }
      }
      return correct;
    };
    blind_correct += accuracy(blind);
    total += 2 * (per_class - train_count);
    if (pair < 2) {
      temporal_correct += accuracy(temporal);
      temporal_total += 2 * (per_class - train_count);
    }
  }
  EXPECT_LE(blind_correct / total, 0.5 + 0.10);
  EXPECT_GE(temporal_correct / temporal_total, 0.75);
}
