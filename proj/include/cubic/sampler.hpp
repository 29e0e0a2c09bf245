#pragma once

// Puzzle-sample generation: cuboid gridding, tuple selection, jittered crop
// extraction, channel replication, flip augmentation and label encoding.

#include <array>
#include <cstdint>

#include "cubic/clip.hpp"
#include "cubic/geometry.hpp"
#include "cubic/permutation.hpp"
#include "cubic/rng.hpp"
#include "cubic/tensor.hpp"

namespace cubic {

enum class TupleMode { kSpatial, kTemporal };

const char* to_string(TupleMode mode);

struct CellCoord {
  int h = 0;
  int w = 0;
  int t = 0;
  bool operator==(const CellCoord&) const = default;
};

using CellTuple = std::array<CellCoord, kTupleSize>;

// Canonical cell order for a tuple. For kSpatial, `anchor` is the temporal
// index t in [0,4) and the cells are (h,w) in row-major order. For kTemporal,
// `anchor` is the spatial position h*2+w in [0,4) and the cells ascend in t.
CellTuple tuple_cells(TupleMode mode, int anchor);

// Draws the anchor uniformly and returns the canonical cells.
CellTuple select_tuple_cells(TupleMode mode, Rng& rng);

// Offset of a crop inside its cell, per axis.
struct CropOffset {
  int64_t t = 0;
  int64_t h = 0;
  int64_t w = 0;
  bool operator==(const CropOffset&) const = default;
};

// Uniform in [0, cell - crop] per axis when jittering; centered otherwise.
CropOffset draw_crop_offset(const GeometryConfig& geometry, Rng& rng, bool jitter);

// Crop of shape [3, crop_frames, crop_height, crop_width] scaled to [0,1].
// Throws ShapeError when the clip does not match the geometry.
Tensor extract_crop(const VideoClip& clip, const CellCoord& cell, const CropOffset& offset,
                    const GeometryConfig& geometry);

Tensor extract_crop_jittered(const VideoClip& clip, const CellCoord& cell,
                             const GeometryConfig& geometry, Rng& rng, bool jitter = true);

// Copies channel `source` into all three channels. Throws ShapeError unless
// the crop is [3, ...].
Tensor channel_replicate(const Tensor& crop, int source);
// Same with the source channel drawn uniformly.
Tensor channel_replicate(const Tensor& crop, Rng& rng);

// Mirrors every frame along the height axis of a [C, T, H, W] crop.
Tensor flip_vertical(const Tensor& crop);

struct SamplerOptions {
  double mode_prob_spatial = 0.5;
  double flip_prob = 0.5;
  bool jitter = true;
  bool channel_replication = true;
  // Rotation with classification: upside-down tuples form 24 extra classes.
  bool rotation_classification = true;

  int num_classes() const { return rotation_classification ? 2 * kNumPermutations : kNumPermutations; }
  // Throws ConfigError for probabilities outside [0,1].
  void validate() const;
};

struct PuzzleSample {
  // Crops in emitted order: crops[i] comes from canonical position perm[i].
  std::array<Tensor, kTupleSize> crops;
  PuzzleLabel label;
  TupleMode mode = TupleMode::kSpatial;
  // Value subtracted from every pixel during normalization.
  float pixel_mean = 0.0f;
};

// Reorders canonical crops by permutation `rank`, flips all of them when
// `flipped`, then subtracts the mean pixel of the whole tuple.
PuzzleSample assemble_puzzle(const std::array<Tensor, kTupleSize>& canonical_crops, TupleMode mode,
                             int rank, bool flipped);

// Full sampling pipeline: mode -> cells -> jittered crops -> replication ->
// permutation -> flip -> normalization.
PuzzleSample make_puzzle_sample(const VideoClip& clip, const GeometryConfig& geometry,
                                const SamplerOptions& options, Rng& rng);

// Undoes the permutation and the flip of a sample, returning the (still
// normalized) crops in canonical position order.
std::array<Tensor, kTupleSize> restore_canonical_order(const PuzzleSample& sample);

}  // namespace cubic
