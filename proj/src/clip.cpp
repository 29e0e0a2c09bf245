#include "cubic/clip.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "cubic/errors.hpp"

namespace cubic {

namespace detail {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace detail

namespace {
constexpr char kClipMagic[4] = {'S', 'T', 'C', 'L'};
}

VideoClip VideoClip::blank(int64_t frames, int64_t height, int64_t width, uint8_t fill) {
  VideoClip c;
  c.frames = frames;
  c.height = height;
  c.width = width;
  c.pixels.assign(static_cast<size_t>(frames * height * width * kChannels), fill);
  return c;
}

VideoClip VideoClip::time_reversed() const {
  VideoClip r = *this;
  const size_t fb = frame_bytes();
  for (int64_t t = 0; t < frames; ++t) {
    std::copy_n(pixels.begin() + static_cast<ptrdiff_t>(t * fb), fb,
                r.pixels.begin() + static_cast<ptrdiff_t>((frames - 1 - t) * fb));
  }
  return r;
}

void write_clip(const VideoClip& clip, const std::filesystem::path& path) {
  if (clip.pixels.size() != static_cast<size_t>(clip.frames) * clip.frame_bytes()) {
    throw FormatError("write_clip: pixel buffer does not match " + std::to_string(clip.frames) + "x" +
                      std::to_string(clip.height) + "x" + std::to_string(clip.width));
  }
  detail::ByteWriter w;
  w.bytes(kClipMagic, 4);
  w.u32(kClipFormatVersion);
  w.u32(static_cast<uint32_t>(clip.frames));
  w.u32(static_cast<uint32_t>(clip.height));
  w.u32(static_cast<uint32_t>(clip.width));
  w.u32(static_cast<uint32_t>(VideoClip::kChannels));
  w.i32(clip.action_label.value_or(-1));
  w.str(clip.clip_id);
  w.bytes(clip.pixels.data(), clip.pixels.size());
  detail::write_file_bytes(path.string(), w.buffer());
}

VideoClip read_clip(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = detail::read_file_bytes(path.string());
  detail::ByteReader r(bytes, "clip " + path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kClipMagic)) throw FormatError("clip " + path.string() + ": bad magic");
  const uint32_t version = r.u32();
  if (version != kClipFormatVersion) {
    throw FormatError("clip " + path.string() + ": unsupported version " + std::to_string(version));
  }
  VideoClip clip;
  clip.frames = r.u32();
  clip.height = r.u32();
  clip.width = r.u32();
  const uint32_t channels = r.u32();
  if (channels != VideoClip::kChannels) {
    throw FormatError("clip " + path.string() + ": expected 3 channels, header says " + std::to_string(channels));
  }
  if (clip.frames == 0 || clip.height == 0 || clip.width == 0) {
    throw FormatError("clip " + path.string() + ": zero extent in header");
  }
  const int32_t label = r.i32();
  if (label < -1) throw FormatError("clip " + path.string() + ": invalid label " + std::to_string(label));
  if (label >= 0) clip.action_label = label;
  clip.clip_id = r.str();
  const uint64_t expected = static_cast<uint64_t>(clip.frames) * clip.frame_bytes();
  if (r.remaining() != expected) {
    throw FormatError("clip " + path.string() + ": header extents " + std::to_string(clip.frames) + "x" +
                      std::to_string(clip.height) + "x" + std::to_string(clip.width) + " need " +
                      std::to_string(expected) + " pixel bytes, file has " + std::to_string(r.remaining()));
  }
  clip.pixels.resize(expected);
  r.bytes(clip.pixels.data(), expected);
  return clip;
}

}  // namespace cubic
