#pragma once

#include <cstdint>
#include <string>

namespace cubic {

/// Spatial/temporal dimensions of clips, puzzle cells, puzzle crops and
/// fine-tuning inputs.
///
/// The puzzle grid is fixed at 2 (height) x 2 (width) x 4 (time) cells, so
/// the clip extents must divide evenly into it.
struct GeometryConfig {
  static constexpr int64_t kGridH = 2;
  static constexpr int64_t kGridW = 2;
  static constexpr int64_t kGridT = 4;

  int64_t clip_frames = 32;
  int64_t frame_height = 56;
  int64_t frame_width = 56;
  int64_t crop_frames = 4;
  int64_t crop_height = 20;
  int64_t crop_width = 20;
  // Fine-tuning / evaluation window.
  int64_t finetune_frames = 8;
  int64_t finetune_size = 28;

  int64_t cell_frames() const { return clip_frames / kGridT; }
  int64_t cell_height() const { return frame_height / kGridH; }
  int64_t cell_width() const { return frame_width / kGridW; }

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const GeometryConfig&) const = default;

  // 224x224 frames, 128-frame clips, 112x112x32 cells, 80x80x16 crops,
  // 16-frame 112x112 fine-tuning windows.
  static GeometryConfig paper();
  // 56x56 frames, 32-frame clips, 28x28x8 cells, 20x20x4 crops,
  // 8-frame 28x28 fine-tuning windows.
  static GeometryConfig desk();
};

std::string to_string(const GeometryConfig& g);

}  // namespace cubic
