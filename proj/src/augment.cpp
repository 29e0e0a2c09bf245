#include "cubic/augment.hpp"

#include <algorithm>
#include <cmath>

#include "cubic/errors.hpp"

namespace cubic {

namespace {

void require_frames(const VideoClip& clip, const GeometryConfig& geometry) {
  if (clip.frames < geometry.finetune_frames) {
    throw ShapeError("clip has " + std::to_string(clip.frames) + " frames, fine-tuning windows need " +
                     std::to_string(geometry.finetune_frames));
  }
}

void subtract_mean(Tensor& t) {
  const float mean = static_cast<float>(sum(t) / static_cast<double>(t.size()));
  for (float& v : t.data()) v -= mean;
}

}  // namespace

FinetuneWindow draw_finetune_window(const VideoClip& clip, const GeometryConfig& geometry, Rng& rng) {
  require_frames(clip, geometry);
  FinetuneWindow w;
  w.t0 = rng.uniform_int(0, clip.frames - geometry.finetune_frames);
  const int64_t shorter = std::min(clip.height, clip.width);
  const double scale = kFinetuneScales[static_cast<size_t>(rng.uniform_int(0, kFinetuneScales.size() - 1))];
  w.side = std::max<int64_t>(1, std::lround(scale * static_cast<double>(shorter)));
  w.y0 = rng.uniform_int(0, clip.height - w.side);
  w.x0 = rng.uniform_int(0, clip.width - w.side);
  w.flipped = rng.bernoulli(0.5);
  return w;
}

void resize_bilinear(const VideoClip& clip, int64_t t, int c, int64_t y0, int64_t x0, int64_t side,
                     int64_t out_size, float* out) {
  const double ratio = static_cast<double>(side) / static_cast<double>(out_size);
  auto axis = [&](int64_t i, int64_t origin, int64_t& lo, int64_t& hi, double& frac) {
    // Source coordinate of the output pixel centre, clamped to the region.
    double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(side - 1));
    lo = static_cast<int64_t>(std::floor(s));
    hi = std::min(lo + 1, side - 1);
    frac = s - static_cast<double>(lo);
    lo += origin;
    hi += origin;
  };
  for (int64_t oy = 0; oy < out_size; ++oy) {
    int64_t ya, yb;
    double fy;
    axis(oy, y0, ya, yb, fy);
    for (int64_t ox = 0; ox < out_size; ++ox) {
      int64_t xa, xb;
      double fx;
      axis(ox, x0, xa, xb, fx);
      const double top = (1 - fx) * clip.at(t, ya, xa, c) + fx * clip.at(t, ya, xb, c);
      const double bottom = (1 - fx) * clip.at(t, yb, xa, c) + fx * clip.at(t, yb, xb, c);
      out[oy * out_size + ox] = static_cast<float>(((1 - fy) * top + fy * bottom) / 255.0);
    }
  }
}

Tensor render_finetune_window(const VideoClip& clip, const FinetuneWindow& w, const GeometryConfig& geometry) {
  require_frames(clip, geometry);
  const int64_t F = geometry.finetune_frames, S = geometry.finetune_size;
  if (w.t0 < 0 || w.t0 + F > clip.frames || w.side < 1 || w.y0 < 0 || w.x0 < 0 || w.y0 + w.side > clip.height ||
      w.x0 + w.side > clip.width) {
    throw ShapeError("fine-tuning window lies outside the clip");
  }
  Tensor out({3, F, S, S});
  for (int c = 0; c < 3; ++c) {
    for (int64_t f = 0; f < F; ++f) {
      resize_bilinear(clip, w.t0 + f, c, w.y0, w.x0, w.side, S, out.raw() + (c * F + f) * S * S);
    }
  }
  if (w.flipped) out = flip_horizontal(out);
  subtract_mean(out);
  return out;
}

Tensor finetune_sample(const VideoClip& clip, const GeometryConfig& geometry, Rng& rng) {
  return render_finetune_window(clip, draw_finetune_window(clip, geometry, rng), geometry);
}

Tensor flip_horizontal(const Tensor& clip) {
  if (clip.rank() != 4) throw ShapeError("flip_horizontal expects [C,T,H,W], got " + shape_to_string(clip.shape()));
  Tensor out(clip.shape());
  const int64_t W = clip.dim(3);
  const int64_t rows = static_cast<int64_t>(clip.size()) / W;
  for (int64_t r = 0; r < rows; ++r) {
    const float* src = clip.raw() + r * W;
    float* dst = out.raw() + r * W;
    for (int64_t x = 0; x < W; ++x) dst[x] = src[W - 1 - x];
  }
  return out;
}

std::vector<Tensor> sliding_window_clips(const VideoClip& clip, const GeometryConfig& geometry) {
  require_frames(clip, geometry);
  const int64_t F = geometry.finetune_frames;
  const int64_t side = std::min(clip.height, clip.width);
  FinetuneWindow w;
  w.side = side;
  w.y0 = (clip.height - side) / 2;
  w.x0 = (clip.width - side) / 2;
  std::vector<Tensor> windows;
  for (int64_t k = 0; k + 1 <= clip.frames / F; ++k) {
    w.t0 = k * F;
    windows.push_back(render_finetune_window(clip, w, geometry));
  }
  return windows;
}

}  // namespace cubic
