#include <algorithm>
#include <string>
#include <vector>

#include <cblas.h>

#include "cubic/errors.hpp"
#include "cubic/ops.hpp"

namespace cubic {

namespace {

constexpr const char* kAxisNames[3] = {"T", "H", "W"};

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }

// Output positions o in [lo, hi) whose tap k lands inside [0, extent).
struct Range {
  int64_t lo;
  int64_t hi;
};

Range valid_range(int64_t extent, int64_t out, int64_t stride, int64_t pad, int64_t k) {
  const int64_t lo = std::max<int64_t>(0, ceil_div(pad - k, stride));
  const int64_t hi = std::min<int64_t>(out, floor_div(extent - 1 + pad - k, stride) + 1);
  return {lo, std::max(lo, hi)};
}

struct ConvGeometry {
  int64_t batch, cin, cout;
  Dims3 in, out;
};

ConvGeometry check_conv(const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 5) {
    throw ShapeError("conv3d: input must be [N,C,T,H,W], got " + shape_to_string(input.shape()));
  }
  if (input.dim(1) != spec.in_channels) {
    throw ShapeError("conv3d: input channel dimension is " + std::to_string(input.dim(1)) +
                     " but spec.in_channels is " + std::to_string(spec.in_channels));
  }
  const Shape expected = spec.weight_shape();
  if (weights.shape() != expected) {
    static constexpr const char* names[5] = {"out_channels", "in_channels", "kT", "kH", "kW"};
    std::string which = "rank";
    if (weights.rank() == 5) {
      for (size_t i = 0; i < 5; ++i) {
        if (weights.dim(i) != expected[i]) {
          which = names[i];
          break;
        }
      }
    }
    throw ShapeError("conv3d: weight shape " + shape_to_string(weights.shape()) + " != " +
                     shape_to_string(expected) + " (mismatch in " + which + ")");
  }
  ConvGeometry g{input.dim(0), input.dim(1), spec.out_channels,
                 {input.dim(2), input.dim(3), input.dim(4)}, {}};
  g.out = spec.output_extent(g.in);
  return g;
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ShapeError("conv3d: channel counts must be >= 1");
  for (int i = 0; i < 3; ++i) {
    if (kernel[i] < 1) throw ShapeError(std::string("conv3d: kernel extent ") + kAxisNames[i] + " must be >= 1");
    if (stride[i] < 1) throw ShapeError(std::string("conv3d: stride ") + kAxisNames[i] + " must be >= 1");
    if (padding[i] < 0) throw ShapeError(std::string("conv3d: padding ") + kAxisNames[i] + " must be >= 0");
  }
}

Shape ConvSpec::weight_shape() const {
  return {out_channels, in_channels, kernel[0], kernel[1], kernel[2]};
}

Dims3 ConvSpec::output_extent(const Dims3& input) const {
  Dims3 out{};
  for (int i = 0; i < 3; ++i) {
    const int64_t span = input[i] + 2 * padding[i] - kernel[i];
    if (span < 0) {
      throw ShapeError(std::string("conv3d: input extent ") + kAxisNames[i] + "=" +
                       std::to_string(input[i]) + " is smaller than the padded kernel (" +
                       std::to_string(kernel[i]) + " - 2*" + std::to_string(padding[i]) + ")");
    }
    out[i] = span / stride[i] + 1;
  }
  return out;
}

namespace {

// Column buffer rows are (ic, kt, kh, kw); columns are output positions of a
// chunk of samples, sample b occupying columns [b * out_plane, (b+1) * out_plane).
// `row` points at the first column of the sample, `ld` is the row stride.
// Taps that fall into the padding are zero.
void im2col(const float* in, const ConvGeometry& g, const ConvSpec& spec, float* row, int64_t ld) {
  const auto [T, H, W] = g.in;
  const auto [OT, OH, OW] = g.out;
  const auto [kT, kH, kW] = spec.kernel;
  const auto [sT, sH, sW] = spec.stride;
  const auto [pT, pH, pW] = spec.padding;
  for (int64_t ic = 0; ic < g.cin; ++ic) {
    const float* in_c = in + ic * T * H * W;
    for (int64_t kt = 0; kt < kT; ++kt) {
      const Range rt = valid_range(T, OT, sT, pT, kt);
      for (int64_t kh = 0; kh < kH; ++kh) {
        const Range rh = valid_range(H, OH, sH, pH, kh);
        for (int64_t kw = 0; kw < kW; ++kw, row += ld) {
          const Range rw = valid_range(W, OW, sW, pW, kw);
          const int64_t shift = kw - pW;
          for (int64_t ot = 0; ot < OT; ++ot) {
            const int64_t it = ot * sT + kt - pT;
            for (int64_t oh = 0; oh < OH; ++oh) {
              float* dst = row + (ot * OH + oh) * OW;
              if (ot < rt.lo || ot >= rt.hi || oh < rh.lo || oh >= rh.hi) {
                std::fill(dst, dst + OW, 0.0f);
                continue;
              }
              const int64_t ih = oh * sH + kh - pH;
              const float* in_row = in_c + (it * H + ih) * W;
              std::fill(dst, dst + rw.lo, 0.0f);
              for (int64_t ow = rw.lo; ow < rw.hi; ++ow) dst[ow] = in_row[ow * sW + shift];
              std::fill(dst + rw.hi, dst + OW, 0.0f);
            }
          }
        }
      }
    }
  }
}

// Inverse scatter of im2col: adds every column entry of one sample back onto
// its input element.
void col2im(const float* row, int64_t ld, const ConvGeometry& g, const ConvSpec& spec, float* in) {
  const auto [T, H, W] = g.in;
  const auto [OT, OH, OW] = g.out;
  const auto [kT, kH, kW] = spec.kernel;
  const auto [sT, sH, sW] = spec.stride;
  const auto [pT, pH, pW] = spec.padding;
  for (int64_t ic = 0; ic < g.cin; ++ic) {
    float* in_c = in + ic * T * H * W;
    for (int64_t kt = 0; kt < kT; ++kt) {
      const Range rt = valid_range(T, OT, sT, pT, kt);
      for (int64_t kh = 0; kh < kH; ++kh) {
        const Range rh = valid_range(H, OH, sH, pH, kh);
        for (int64_t kw = 0; kw < kW; ++kw, row += ld) {
          const Range rw = valid_range(W, OW, sW, pW, kw);
          const int64_t shift = kw - pW;
          for (int64_t ot = rt.lo; ot < rt.hi; ++ot) {
            const int64_t it = ot * sT + kt - pT;
            for (int64_t oh = rh.lo; oh < rh.hi; ++oh) {
              const int64_t ih = oh * sH + kh - pH;
              float* in_row = in_c + (it * H + ih) * W;
              const float* src = row + (ot * OH + oh) * OW;
              for (int64_t ow = rw.lo; ow < rw.hi; ++ow) in_row[ow * sW + shift] += src[ow];
            }
          }
        }
      }
    }
  }
}

constexpr int64_t kMaxColumnElements = int64_t{1} << 22;

// Samples per GEMM so that the column buffer stays below kMaxColumnElements.
int64_t chunk_size(int64_t batch, int64_t kdim, int64_t out_plane) {
  return std::clamp<int64_t>(kMaxColumnElements / std::max<int64_t>(1, kdim * out_plane), 1, batch);
}

void fill_columns(const Tensor& input, const ConvGeometry& g, const ConvSpec& spec, int64_t n0, int64_t count,
                  int64_t kdim, int64_t out_plane, std::vector<float>& col) {
  const int64_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const int64_t ld = count * out_plane;
  col.resize(static_cast<size_t>(kdim * ld));
  for (int64_t b = 0; b < count; ++b) {
    im2col(input.raw() + (n0 + b) * g.cin * in_plane, g, spec, col.data() + b * out_plane, ld);
  }
}

}  // namespace

Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec) {
  const ConvGeometry g = check_conv(input, weights, spec);
  if (!bias.empty() && bias.shape() != Shape{g.cout}) {
    throw ShapeError("conv3d: bias shape " + shape_to_string(bias.shape()) + " != [" +
                     std::to_string(g.cout) + "]");
  }
  const int64_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const int64_t kdim = g.cin * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
  const int64_t chunk = chunk_size(g.batch, kdim, out_plane);

  Tensor out({g.batch, g.cout, g.out[0], g.out[1], g.out[2]});
  std::vector<float> col;
  for (int64_t n0 = 0; n0 < g.batch; n0 += chunk) {
    const int64_t count = std::min(chunk, g.batch - n0);
    const int64_t ld = count * out_plane;
    fill_columns(input, g, spec, n0, count, kdim, out_plane, col);
    // One product per sample keeps each output independent of batch size.
    for (int64_t b = 0; b < count; ++b) {
      float* dst = out.raw() + (n0 + b) * g.cout * out_plane;
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(g.cout), static_cast<int>(out_plane),
                  static_cast<int>(kdim), 1.0f, weights.raw(), static_cast<int>(kdim), col.data() + b * out_plane,
                  static_cast<int>(ld), 0.0f, dst, static_cast<int>(out_plane));
      if (bias.empty()) continue;
      for (int64_t oc = 0; oc < g.cout; ++oc) {
        const float shift = bias[static_cast<size_t>(oc)];
        for (int64_t p = 0; p < out_plane; ++p) dst[oc * out_plane + p] += shift;
      }
    }
  }
  return out;
}

ConvGrads conv3d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          const ConvSpec& spec, bool want_input_grad) {
  const ConvGeometry g = check_conv(input, weights, spec);
  const Shape out_shape{g.batch, g.cout, g.out[0], g.out[1], g.out[2]};
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv3d_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                     " != forward output shape " + shape_to_string(out_shape));
  }
  const int64_t in_plane = g.in[0] * g.in[1] * g.in[2];
  const int64_t out_plane = g.out[0] * g.out[1] * g.out[2];
  const int64_t kdim = g.cin * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
  const int64_t chunk = chunk_size(g.batch, kdim, out_plane);

  ConvGrads grads{Tensor(), Tensor::zeros_like(weights), Tensor({g.cout})};
  const float* go = grad_out.raw();
  for (int64_t oc = 0; oc < g.cout; ++oc) {
    double a = 0.0;
    for (int64_t n = 0; n < g.batch; ++n) {
      const float* src = go + (n * g.cout + oc) * out_plane;
      for (int64_t i = 0; i < out_plane; ++i) a += src[i];
    }
    grads.bias[static_cast<size_t>(oc)] = static_cast<float>(a);
  }
  if (want_input_grad) grads.input = Tensor::zeros_like(input);

  std::vector<float> col, gmat, dcol;
  for (int64_t n0 = 0; n0 < g.batch; n0 += chunk) {
    const int64_t count = std::min(chunk, g.batch - n0);
    const int64_t ld = count * out_plane;
    // grad_out of the chunk as a [cout, count * out_plane] matrix.
    gmat.resize(static_cast<size_t>(g.cout * ld));
    for (int64_t b = 0; b < count; ++b) {
      for (int64_t oc = 0; oc < g.cout; ++oc) {
        const float* src = go + ((n0 + b) * g.cout + oc) * out_plane;
        std::copy(src, src + out_plane, gmat.data() + oc * ld + b * out_plane);
      }
    }
    fill_columns(input, g, spec, n0, count, kdim, out_plane, col);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(g.cout), static_cast<int>(kdim),
                static_cast<int>(ld), 1.0f, gmat.data(), static_cast<int>(ld), col.data(), static_cast<int>(ld),
                1.0f, grads.weights.raw(), static_cast<int>(kdim));
    if (!want_input_grad) continue;
    dcol.resize(static_cast<size_t>(kdim * ld));
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(kdim), static_cast<int>(ld),
                static_cast<int>(g.cout), 1.0f, weights.raw(), static_cast<int>(kdim), gmat.data(),
                static_cast<int>(ld), 0.0f, dcol.data(), static_cast<int>(ld));
    for (int64_t b = 0; b < count; ++b) {
      col2im(dcol.data() + b * out_plane, ld, g, spec, grads.input.raw() + (n0 + b) * g.cin * in_plane);
    }
  }
  return grads;
}

}  // namespace cubic
