#include "cubic/filters.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cubic/errors.hpp"

namespace cubic {

namespace fs = std::filesystem;

Image::Image(int64_t w, int64_t h, int c, uint8_t fill)
    : width(w), height(h), channels(c), pixels(static_cast<size_t>(w * h * c), fill) {}

void write_pnm(const Image& image, const fs::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ShapeError("pnm images need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  int64_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || (magic != "P5" && magic != "P6") || w < 1 || h < 1 || maxval != 255) {
    throw FormatError(path.string() + ": not a binary 8-bit PGM/PPM");
  }
  in.get();
  Image img(w, h, magic == "P5" ? 1 : 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw FormatError(path.string() + ": truncated");
  return img;
}

Image render_filter(const Tensor& weight, int64_t index, int scale, int gap) {
  if (weight.rank() != 5) throw ShapeError("filter weights must be [out,in,kt,kh,kw], got " + shape_to_string(weight.shape()));
  if (index < 0 || index >= weight.dim(0)) throw std::out_of_range("filter index " + std::to_string(index));
  if (scale < 1 || gap < 0) throw std::invalid_argument("render_filter: scale must be >= 1 and gap >= 0");
  const int64_t C = weight.dim(1), T = weight.dim(2), H = weight.dim(3), W = weight.dim(4);
  const size_t n = static_cast<size_t>(C * T * H * W);
  const float* f = weight.raw() + static_cast<size_t>(index) * n;
  const auto [lo, hi] = std::minmax_element(f, f + n);
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  auto level = [&](double v) {
    const double u = range > 0.0 ? (v - *lo) / range : 0.5;
    return static_cast<uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0));
  };
  const int channels = C == 3 ? 3 : 1;
  Image img(T * W * scale + (T - 1) * gap, H * scale, channels);
  for (int64_t t = 0; t < T; ++t) {
    const int64_t x0 = t * (W * scale + gap);
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        uint8_t px[3];
        if (channels == 3) {
          for (int c = 0; c < 3; ++c) px[c] = level(f[((c * T + t) * H + y) * W + x]);
        } else {
          double mean = 0.0;
          for (int64_t c = 0; c < C; ++c) mean += f[((c * T + t) * H + y) * W + x];
          px[0] = level(mean / static_cast<double>(C));
        }
        for (int64_t dy = 0; dy < scale; ++dy) {
          for (int64_t dx = 0; dx < scale; ++dx) {
            for (int c = 0; c < channels; ++c) img.at(y * scale + dy, x0 + x * scale + dx, c) = px[c];
          }
        }
      }
    }
  }
  return img;
}

Image montage(const std::vector<Image>& images, int64_t columns, int gap) {
  if (images.empty()) throw std::invalid_argument("montage: no images");
  if (columns < 1 || gap < 0) throw std::invalid_argument("montage: columns must be >= 1 and gap >= 0");
  const Image& first = images.front();
  for (const Image& im : images) {
    if (im.width != first.width || im.height != first.height || im.channels != first.channels) {
      throw ShapeError("montage: images differ in size or channels");
    }
  }
  const int64_t cols = std::min<int64_t>(columns, static_cast<int64_t>(images.size()));
  const int64_t rows = (static_cast<int64_t>(images.size()) + cols - 1) / cols;
  Image out(cols * (first.width + gap) + gap, rows * (first.height + gap) + gap, first.channels);
  for (size_t i = 0; i < images.size(); ++i) {
    const int64_t oy = gap + static_cast<int64_t>(i) / cols * (first.height + gap);
    const int64_t ox = gap + static_cast<int64_t>(i) % cols * (first.width + gap);
    for (int64_t y = 0; y < first.height; ++y) {
      const auto src = images[i].pixels.begin() + y * first.width * first.channels;
      std::copy_n(src, first.width * first.channels, &out.at(oy + y, ox, 0));
    }
  }
  return out;
}

std::vector<fs::path> export_filters(const NetworkParams& params, const fs::path& out_dir, int scale) {
  if (!params.contains(kStemWeightName)) throw FormatError(std::string("parameters have no ") + kStemWeightName);
  const Tensor& w = params.at(kStemWeightName);
  const int64_t count = w.rank() == 5 ? w.dim(0) : 0;
  std::vector<Image> images;
  for (int64_t i = 0; i < count; ++i) images.push_back(render_filter(w, i, scale));
  if (images.empty()) throw ShapeError("stem weight has unexpected shape " + shape_to_string(w.shape()));
  const char* ext = images.front().channels == 3 ? ".ppm" : ".pgm";
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (int64_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "filter_%03lld", static_cast<long long>(i));
    written.push_back(out_dir / (std::string(name) + ext));
    write_pnm(images[static_cast<size_t>(i)], written.back());
  }
  const auto columns = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(count))));
  written.push_back(out_dir / (std::string("montage") + ext));
  write_pnm(montage(images, columns), written.back());
  return written;
}

}  // namespace cubic
