#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cubic/geometry.hpp"
#include "cubic/network.hpp"
#include "cubic/params.hpp"

namespace cubic {

enum class HeadKind : uint32_t { kNone = 0, kPuzzle = 1, kAction = 2 };

struct CheckpointHeader {
  BackboneConfig backbone;
  GeometryConfig geometry;
  HeadKind head = HeadKind::kNone;
  int64_t num_classes = 0;
  int64_t head_hidden = 0;
  // Optimizer steps taken so far; used to resume a run.
  uint64_t step = 0;

  bool operator==(const CheckpointHeader&) const = default;
};

struct Checkpoint {
  CheckpointHeader header;
  NetworkParams params;
};

// Little-endian layout:
//   char[4] "STCK" | u32 version
//   | backbone: u32 variant, u32 in_channels, u32 stem_channels, 3x u32 stem
//     kernel, 3x u32 stem stride, u8 stem_maxpool, u32 stages, stages x
//     (u32 channels, u32 blocks)
//   | geometry: 8x u32 (clip_frames, frame_height, frame_width, crop_frames,
//     crop_height, crop_width, finetune_frames, finetune_size)
//   | u32 head kind | u32 num_classes | u32 head_hidden | u64 step
//   | u32 record count | records: u32 name_len, name, u32 rank,
//     rank x u32 extents, raw f32 values
//
// Record names carry a kind prefix: "param/", "momentum/", "bn_mean/",
// "bn_var/" and "bn_updates/" (a one-element tensor holding the count).
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws FormatError on bad magic, version or malformed records.
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LoadOptions {
  // Copy momentum buffers too (resume) rather than leaving target momenta.
  bool include_momentum = true;
  // Skip names for which `skip` returns true (e.g. a head being replaced).
  std::function<bool(const std::string&)> skip;
  // Allow target names that the source does not have.
  bool allow_missing = false;
};

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> kept;  // left at the target's initialization
};

// Copies parameters and batch-norm statistics by name. Throws FormatError
// listing every name whose shape differs, or every required name that is
// missing from the source.
LoadReport load_into(NetworkParams& target, const NetworkParams& source, const LoadOptions& options);

// Throws FormatError when the checkpoint backbone differs from `expected`.
void require_backbone(const CheckpointHeader& header, const BackboneConfig& expected);

}  // namespace cubic
