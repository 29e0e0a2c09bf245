#pragma once

// Clip datasets on disk and the synthetic moving-shapes generator.
//
// A dataset directory holds
//   dataset.txt   key=value header (format, classes, extents, seed, ...)
//   train.txt     one "clip_path<TAB>label" line per training clip
//   test.txt      same for the test split
//   clips/        the clip files; index paths are relative to the directory

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cubic/clip.hpp"
#include "cubic/geometry.hpp"

namespace cubic {

struct IndexEntry {
  std::string path;  // relative to the dataset directory
  int label = 0;
  bool operator==(const IndexEntry&) const = default;
};

// Throws FormatError on malformed lines or negative labels.
std::vector<IndexEntry> read_index(const std::filesystem::path& path);
void write_index(const std::vector<IndexEntry>& entries, const std::filesystem::path& path);

using KeyValues = std::map<std::string, std::string>;

// Lines of "key=value"; blank lines and lines starting with '#' are skipped.
// Throws FormatError on lines without '=' or repeated keys.
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);

struct Dataset {
  std::filesystem::path root;
  KeyValues header;
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<IndexEntry> train;
  std::vector<IndexEntry> test;
};

// Reads dataset.txt and both indexes. Throws FormatError when the header is
// missing required keys or an index label is outside [0, num_classes).
Dataset load_dataset(const std::filesystem::path& root);

// Reads every clip of a split. Throws FormatError when a file is missing or
// corrupt, or when its stored label disagrees with the index.
std::vector<VideoClip> load_clips(const Dataset& dataset, const std::vector<IndexEntry>& split);

// ---------------------------------------------------------------------------
// Synthetic moving shapes.
//
// Classes come in time-mirror pairs: class 2p renders motion pair p forward
// and class 2p+1 renders the same motion played backwards, so the two
// classes of a pair have identical frame statistics and differ only in
// temporal direction.

enum class MotionPair { kHorizontal, kVertical, kRotation, kScale, kDiagonal };

inline constexpr int kMaxSyntheticClasses = 10;

// e.g. "move_right" / "move_left" for class 0 / 1.
std::string synthetic_class_name(int label);

struct SyntheticSpec {
  int num_classes = 8;
  int clips_per_class = 25;
  int64_t frames = 32;
  int64_t height = 56;
  int64_t width = 56;
  double test_fraction = 0.2;
  uint64_t seed = 1;
  // Standard deviation of per-frame pixel noise, in 8-bit levels.
  double noise_level = 6.0;

  // Throws ConfigError for unsupported values.
  void validate() const;
};

// Deterministic in (seed, label). Odd labels are the exact time reversal of
// the even label of their pair rendered with the same seed.
VideoClip render_synthetic_clip(const SyntheticSpec& spec, int label, uint64_t clip_seed);

// Writes a complete dataset directory. Entries per split are ordered by class
// then clip index; the last round(clips_per_class * test_fraction) clips of
// every class form the test split.
Dataset generate_synthetic_dataset(const SyntheticSpec& spec, const std::filesystem::path& root);

// Clip whose puzzle cells each carry a constant colour code for their
// (h, w, t) grid position plus a vertical brightness ramp, so every puzzle
// drawn from it is solvable from low-level cues alone.
VideoClip render_watermark_clip(const GeometryConfig& geometry, uint64_t clip_seed);

}  // namespace cubic
