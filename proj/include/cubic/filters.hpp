#pragma once

// Rendering of first-layer 3D filters as images.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cubic/params.hpp"
#include "cubic/tensor.hpp"

namespace cubic {

// 8-bit image, interleaved channels (1 = gray, 3 = RGB).
struct Image {
  int64_t width = 0;
  int64_t height = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;

  Image() = default;
  Image(int64_t w, int64_t h, int c, uint8_t fill = 0);
  uint8_t& at(int64_t y, int64_t x, int c) { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
  uint8_t at(int64_t y, int64_t x, int c) const {
    return pixels[static_cast<size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const Image&) const = default;
};

// Binary PGM (P5) for one channel, PPM (P6) for three; max value 255.
void write_pnm(const Image& image, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

// Filter `index` of a [out, in, kt, kh, kw] weight: its kt temporal slices
// side by side, separated by `gap` black pixels, each pixel enlarged to a
// scale x scale block. Values are min-max normalized over the whole filter; a
// constant filter maps to mid-gray. Three input channels give RGB, any other
// count the channel mean in gray.
Image render_filter(const Tensor& weight, int64_t index, int scale = 8, int gap = 1);

// Images laid out row-major on a grid `columns` wide with `gap` pixel borders.
// All images must share size and channel count.
Image montage(const std::vector<Image>& images, int64_t columns, int gap = 2);

inline constexpr const char* kStemWeightName = "conv1.weight";

// Writes filter_NNN.ppm/.pgm per stem filter and montage.ppm/.pgm into
// out_dir. Throws FormatError when the parameters have no stem convolution.
std::vector<std::filesystem::path> export_filters(const NetworkParams& params, const std::filesystem::path& out_dir,
                                                  int scale = 8);

}  // namespace cubic
