#include "cubic/sampler.hpp"

#include <algorithm>
#include <string>

#include "cubic/errors.hpp"

namespace cubic {

const char* to_string(TupleMode mode) {
  return mode == TupleMode::kSpatial ? "spatial" : "temporal";
}

CellTuple tuple_cells(TupleMode mode, int anchor) {
  if (anchor < 0 || anchor >= 4) {
    throw std::out_of_range("tuple_cells: anchor " + std::to_string(anchor) + " outside [0,4)");
  }
  CellTuple cells{};
  for (int i = 0; i < kTupleSize; ++i) {
    if (mode == TupleMode::kSpatial) {
      cells[i] = {i / 2, i % 2, anchor};
    } else {
      cells[i] = {anchor / 2, anchor % 2, i};
    }
  }
  return cells;
}

CellTuple select_tuple_cells(TupleMode mode, Rng& rng) {
  return tuple_cells(mode, static_cast<int>(rng.uniform_int(0, 3)));
}

CropOffset draw_crop_offset(const GeometryConfig& g, Rng& rng, bool jitter) {
  const int64_t st = g.cell_frames() - g.crop_frames;
  const int64_t sh = g.cell_height() - g.crop_height;
  const int64_t sw = g.cell_width() - g.crop_width;
  if (!jitter) return {st / 2, sh / 2, sw / 2};
  CropOffset o;
  o.t = rng.uniform_int(0, st);
  o.h = rng.uniform_int(0, sh);
  o.w = rng.uniform_int(0, sw);
  return o;
}

Tensor extract_crop(const VideoClip& clip, const CellCoord& cell, const CropOffset& offset,
                    const GeometryConfig& g) {
  if (clip.frames < g.clip_frames || clip.height < g.frame_height || clip.width < g.frame_width) {
    throw ShapeError("clip " + clip.clip_id + " (" + std::to_string(clip.frames) + "x" +
                     std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                     ") is smaller than the geometry (" + to_string(g) + ")");
  }
  if (cell.h < 0 || cell.h >= GeometryConfig::kGridH || cell.w < 0 || cell.w >= GeometryConfig::kGridW ||
      cell.t < 0 || cell.t >= GeometryConfig::kGridT) {
    throw std::out_of_range("extract_crop: cell outside the 2x2x4 grid");
  }
  if (offset.t < 0 || offset.t + g.crop_frames > g.cell_frames() || offset.h < 0 ||
      offset.h + g.crop_height > g.cell_height() || offset.w < 0 ||
      offset.w + g.crop_width > g.cell_width()) {
    throw std::out_of_range("extract_crop: offset places the crop outside its cell");
  }
  const int64_t t0 = cell.t * g.cell_frames() + offset.t;
  const int64_t h0 = cell.h * g.cell_height() + offset.h;
  const int64_t w0 = cell.w * g.cell_width() + offset.w;
  const int64_t CT = g.crop_frames, CH = g.crop_height, CW = g.crop_width;
  Tensor crop({VideoClip::kChannels, CT, CH, CW});
  constexpr float kScale = 1.0f / 255.0f;
  for (int64_t t = 0; t < CT; ++t) {
    for (int64_t h = 0; h < CH; ++h) {
      for (int64_t w = 0; w < CW; ++w) {
        const size_t src = clip.index(t0 + t, h0 + h, w0 + w, 0);
        for (int64_t c = 0; c < VideoClip::kChannels; ++c) {
          crop[static_cast<size_t>(((c * CT + t) * CH + h) * CW + w)] =
              static_cast<float>(clip.pixels[src + static_cast<size_t>(c)]) * kScale;
        }
      }
    }
  }
  return crop;
}

Tensor extract_crop_jittered(const VideoClip& clip, const CellCoord& cell, const GeometryConfig& g,
                             Rng& rng, bool jitter) {
  return extract_crop(clip, cell, draw_crop_offset(g, rng, jitter), g);
}

Tensor channel_replicate(const Tensor& crop, int source) {
  if (crop.rank() < 1 || crop.dim(0) != 3) {
    throw ShapeError("channel_replicate: expected 3 channels, got shape " + shape_to_string(crop.shape()));
  }
  if (source < 0 || source > 2) throw std::out_of_range("channel_replicate: source channel outside [0,3)");
  Tensor out = crop;
  const size_t plane = crop.size() / 3;
  const float* src = crop.raw() + static_cast<size_t>(source) * plane;
  for (int c = 0; c < 3; ++c) std::copy_n(src, plane, out.raw() + static_cast<size_t>(c) * plane);
  return out;
}

Tensor channel_replicate(const Tensor& crop, Rng& rng) {
  return channel_replicate(crop, static_cast<int>(rng.uniform_int(0, 2)));
}

Tensor flip_vertical(const Tensor& crop) {
  if (crop.rank() != 4) throw ShapeError("flip_vertical: expected [C,T,H,W], got " + shape_to_string(crop.shape()));
  const int64_t planes = crop.dim(0) * crop.dim(1);
  const int64_t H = crop.dim(2), W = crop.dim(3);
  Tensor out = Tensor::zeros_like(crop);
  for (int64_t p = 0; p < planes; ++p) {
    for (int64_t h = 0; h < H; ++h) {
      std::copy_n(crop.raw() + (p * H + h) * W, W, out.raw() + (p * H + (H - 1 - h)) * W);
    }
  }
  return out;
}

void SamplerOptions::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(mode_prob_spatial)) throw ConfigError("mode_prob_spatial must lie in [0,1]");
  if (!prob(flip_prob)) throw ConfigError("flip_prob must lie in [0,1]");
}

PuzzleSample assemble_puzzle(const std::array<Tensor, kTupleSize>& canonical, TupleMode mode, int rank,
                             bool flipped) {
  for (const Tensor& c : canonical) {
    if (!c.same_shape(canonical[0]) || c.rank() != 4) {
      throw ShapeError("assemble_puzzle: the 4 crops must share one [C,T,H,W] shape");
    }
  }
  const Permutation4 perm = permutation_unrank(rank);
  PuzzleSample s;
  s.mode = mode;
  s.label = {rank, flipped};
  for (int i = 0; i < kTupleSize; ++i) {
    s.crops[i] = flipped ? flip_vertical(canonical[perm[i]]) : canonical[perm[i]];
  }
  double total = 0.0;
  size_t count = 0;
  for (const Tensor& c : s.crops) {
    total += sum(c);
    count += c.size();
  }
  s.pixel_mean = static_cast<float>(total / static_cast<double>(count));
  for (Tensor& c : s.crops) {
    for (float& v : c.data()) v -= s.pixel_mean;
  }
  return s;
}

PuzzleSample make_puzzle_sample(const VideoClip& clip, const GeometryConfig& g,
                                const SamplerOptions& options, Rng& rng) {
  options.validate();
  if (clip.frames != g.clip_frames || clip.height != g.frame_height || clip.width != g.frame_width) {
    throw ShapeError("clip " + clip.clip_id + " is " + std::to_string(clip.frames) + "x" +
                     std::to_string(clip.height) + "x" + std::to_string(clip.width) +
                     " but the geometry expects " + std::to_string(g.clip_frames) + "x" +
                     std::to_string(g.frame_height) + "x" + std::to_string(g.frame_width));
  }
  const TupleMode mode = rng.uniform01() < options.mode_prob_spatial ? TupleMode::kSpatial
                                                                       : TupleMode::kTemporal;
  const CellTuple cells = select_tuple_cells(mode, rng);
  std::array<Tensor, kTupleSize> crops;
  for (int i = 0; i < kTupleSize; ++i) {
    crops[i] = extract_crop_jittered(clip, cells[i], g, rng, options.jitter);
    if (options.channel_replication) crops[i] = channel_replicate(crops[i], rng);
  }
  const int rank = static_cast<int>(rng.uniform_int(0, kNumPermutations - 1));
  const bool flipped = options.rotation_classification && rng.uniform01() < options.flip_prob;
  return assemble_puzzle(crops, mode, rank, flipped);
}

std::array<Tensor, kTupleSize> restore_canonical_order(const PuzzleSample& sample) {
  const Permutation4 perm = permutation_unrank(sample.label.perm_rank);
  std::array<Tensor, kTupleSize> out;
  for (int i = 0; i < kTupleSize; ++i) {
    out[perm[i]] = sample.label.flipped ? flip_vertical(sample.crops[i]) : sample.crops[i];
  }
  return out;
}

}  // namespace cubic
