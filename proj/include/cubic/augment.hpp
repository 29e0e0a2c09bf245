#pragma once

// Fine-tuning inputs: random multi-scale windows for training and
// non-overlapping sliding windows for evaluation.

#include <array>
#include <cstdint>
#include <vector>

#include "cubic/clip.hpp"
#include "cubic/geometry.hpp"
#include "cubic/rng.hpp"
#include "cubic/tensor.hpp"

namespace cubic {

// Crop side as a fraction of the shorter frame side.
inline constexpr std::array<double, 5> kFinetuneScales = {1.0, 0.8408964152537145, 0.7071067811865476,
                                                          0.5946035575013605, 0.5};

struct FinetuneWindow {
  int64_t t0 = 0;
  int64_t y0 = 0;
  int64_t x0 = 0;
  int64_t side = 0;  // square crop side in source pixels
  bool flipped = false;
  bool operator==(const FinetuneWindow&) const = default;
};

// Uniform start frame, scale from kFinetuneScales, uniform crop position and
// a horizontal flip with probability 0.5. Throws ShapeError when the clip has
// fewer than geometry.finetune_frames frames.
FinetuneWindow draw_finetune_window(const VideoClip& clip, const GeometryConfig& geometry, Rng& rng);

// [3, F, S, S]: the window's frames, bilinearly resized to S = finetune_size,
// scaled to [0,1] and shifted to zero mean.
Tensor render_finetune_window(const VideoClip& clip, const FinetuneWindow& window,
                              const GeometryConfig& geometry);

Tensor finetune_sample(const VideoClip& clip, const GeometryConfig& geometry, Rng& rng);

// Mirrors every frame of a [C, T, H, W] tensor along the width axis.
Tensor flip_horizontal(const Tensor& clip);

// floor(T / F) consecutive non-overlapping windows, each the centred square
// of the shorter side resized to S. Throws ShapeError when T < F.
std::vector<Tensor> sliding_window_clips(const VideoClip& clip, const GeometryConfig& geometry);

// Bilinear resize (half-pixel centres) of a square region of one frame
// channel into an S x S block.
void resize_bilinear(const VideoClip& clip, int64_t t, int c, int64_t y0, int64_t x0, int64_t side,
                     int64_t out_size, float* out);

}  // namespace cubic
