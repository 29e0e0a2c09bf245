#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cubic {

/// Dense 8-bit RGB frame volume, stored T x H x W x 3 row-major.
struct VideoClip {
  static constexpr int64_t kChannels = 3;

  int64_t frames = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> pixels;
  std::string clip_id;
  std::optional<int> action_label;

  static VideoClip blank(int64_t frames, int64_t height, int64_t width, uint8_t fill = 0);

  size_t index(int64_t t, int64_t h, int64_t w, int64_t c) const {
    return static_cast<size_t>(((t * height + h) * width + w) * kChannels + c);
  }
  uint8_t at(int64_t t, int64_t h, int64_t w, int64_t c) const { return pixels[index(t, h, w, c)]; }
  uint8_t& at(int64_t t, int64_t h, int64_t w, int64_t c) { return pixels[index(t, h, w, c)]; }

  size_t frame_bytes() const { return static_cast<size_t>(height * width * kChannels); }

  // Same clip with the frame order reversed.
  VideoClip time_reversed() const;

  bool operator==(const VideoClip&) const = default;
};

// Clip file layout (little-endian):
//   char[4] "STCL" | u32 version | u32 T | u32 H | u32 W | u32 C (=3)
//   | i32 label (-1 = none) | u32 id_len | id bytes | T*H*W*C pixel bytes
inline constexpr uint32_t kClipFormatVersion = 1;

void write_clip(const VideoClip& clip, const std::filesystem::path& path);
// Throws FormatError on bad magic, unsupported version, header extents that
// disagree with the payload size, or truncation.
VideoClip read_clip(const std::filesystem::path& path);

}  // namespace cubic
