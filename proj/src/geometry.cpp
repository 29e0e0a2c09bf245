#include "cubic/geometry.hpp"

#include <sstream>

#include "cubic/errors.hpp"

namespace cubic {

void GeometryConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("geometry: " + what);
  };
  require(clip_frames > 0 && frame_height > 0 && frame_width > 0, "clip extents must be positive");
  require(crop_frames > 0 && crop_height > 0 && crop_width > 0, "crop extents must be positive");
  require(clip_frames % kGridT == 0, "clip_frames must be divisible by the 4 temporal grid cells");
  require(frame_height % kGridH == 0, "frame_height must be divisible by the 2 vertical grid cells");
  require(frame_width % kGridW == 0, "frame_width must be divisible by the 2 horizontal grid cells");
  require(crop_frames <= cell_frames(), "crop_frames exceeds cell_frames");
  require(crop_height <= cell_height(), "crop_height exceeds cell_height");
  require(crop_width <= cell_width(), "crop_width exceeds cell_width");
  require(finetune_frames > 0 && finetune_frames <= clip_frames,
          "finetune_frames must be in [1, clip_frames]");
  require(finetune_size > 0, "finetune_size must be positive");
}

GeometryConfig GeometryConfig::paper() {
  GeometryConfig g;
  g.clip_frames = 128;
  g.frame_height = 224;
  g.frame_width = 224;
  g.crop_frames = 16;
  g.crop_height = 80;
  g.crop_width = 80;
  g.finetune_frames = 16;
  g.finetune_size = 112;
  return g;
}

GeometryConfig GeometryConfig::desk() { return GeometryConfig{}; }

std::string to_string(const GeometryConfig& g) {
  std::ostringstream os;
  os << "clip " << g.frame_height << "x" << g.frame_width << "x" << g.clip_frames << ", cell "
     << g.cell_height() << "x" << g.cell_width() << "x" << g.cell_frames() << ", crop "
     << g.crop_height << "x" << g.crop_width << "x" << g.crop_frames << ", finetune "
     << g.finetune_size << "x" << g.finetune_size << "x" << g.finetune_frames;
  return os.str();
}

}  // namespace cubic
