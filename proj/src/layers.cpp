#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cubic/errors.hpp"
#include "cubic/ops.hpp"

namespace cubic {

namespace {

// Channel-major view of an [N, C, ...] tensor.
struct ChannelLayout {
  int64_t batch;
  int64_t channels;
  int64_t inner;  // product of the trailing extents
};

ChannelLayout channel_layout(const Tensor& t, const char* op) {
  if (t.rank() < 2) {
    throw ShapeError(std::string(op) + ": expected [N,C,...], got " + shape_to_string(t.shape()));
  }
  return {t.dim(0), t.dim(1), static_cast<int64_t>(t.size()) / (t.dim(0) * t.dim(1))};
}

}  // namespace

RunningStats RunningStats::initial(int64_t channels) {
  return {Tensor({channels}, 0.0f), Tensor({channels}, 1.0f), 0};
}

BatchNormResult batchnorm3d_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                    const RunningStats& stats, NormMode mode, float momentum) {
  const ChannelLayout L = channel_layout(input, "batchnorm3d");
  const Shape cshape{L.channels};
  if (gamma.shape() != cshape || beta.shape() != cshape) {
    throw ShapeError("batchnorm3d: gamma/beta shape " + shape_to_string(gamma.shape()) + "/" +
                     shape_to_string(beta.shape()) + " does not match channel extent " +
                     std::to_string(L.channels));
  }
  if (stats.mean.shape() != cshape || stats.var.shape() != cshape) {
    throw ShapeError("batchnorm3d: running stats do not match channel extent " +
                     std::to_string(L.channels));
  }
  if (mode == NormMode::kEval && stats.updates == 0) {
    throw std::logic_error("batchnorm3d: eval mode requested before running stats were estimated");
  }

  BatchNormResult r{Tensor::zeros_like(input), stats, {Tensor::zeros_like(input), {}, mode}};
  r.cache.inv_std.resize(static_cast<size_t>(L.channels));
  const int64_t count = L.batch * L.inner;
  const float* x = input.raw();
  float* xhat = r.cache.normalized.raw();
  float* y = r.output.raw();

  for (int64_t c = 0; c < L.channels; ++c) {
    double mean;
    double var;
    if (mode == NormMode::kTrain) {
      double s = 0.0;
      for (int64_t n = 0; n < L.batch; ++n) {
        const float* src = x + (n * L.channels + c) * L.inner;
        for (int64_t i = 0; i < L.inner; ++i) s += src[i];
      }
      mean = s / static_cast<double>(count);
      double sq = 0.0;
      for (int64_t n = 0; n < L.batch; ++n) {
        const float* src = x + (n * L.channels + c) * L.inner;
        for (int64_t i = 0; i < L.inner; ++i) {
          const double d = src[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      const size_t ci = static_cast<size_t>(c);
      r.stats.mean[ci] = static_cast<float>((1.0 - momentum) * stats.mean[ci] + momentum * mean);
      r.stats.var[ci] = static_cast<float>((1.0 - momentum) * stats.var[ci] + momentum * unbiased);
    } else {
      mean = stats.mean[static_cast<size_t>(c)];
      var = stats.var[static_cast<size_t>(c)];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    r.cache.inv_std[static_cast<size_t>(c)] = static_cast<float>(inv_std);
    const double g = gamma[static_cast<size_t>(c)];
    const double b = beta[static_cast<size_t>(c)];
    for (int64_t n = 0; n < L.batch; ++n) {
      const int64_t off = (n * L.channels + c) * L.inner;
      for (int64_t i = 0; i < L.inner; ++i) {
        const double h = (x[off + i] - mean) * inv_std;
        xhat[off + i] = static_cast<float>(h);
        y[off + i] = static_cast<float>(g * h + b);
      }
    }
  }
  if (mode == NormMode::kTrain) ++r.stats.updates;
  return r;
}

BatchNormGrads batchnorm3d_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                    const Tensor& gamma) {
  if (!grad_out.same_shape(cache.normalized)) {
    throw ShapeError("batchnorm3d_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                     " != input shape " + shape_to_string(cache.normalized.shape()));
  }
  const ChannelLayout L = channel_layout(grad_out, "batchnorm3d_backward");
  if (gamma.shape() != Shape{L.channels}) {
    throw ShapeError("batchnorm3d_backward: gamma shape does not match channel extent");
  }
  BatchNormGrads g{Tensor::zeros_like(grad_out), Tensor({L.channels}), Tensor({L.channels})};
  const int64_t count = L.batch * L.inner;
  const float* dy = grad_out.raw();
  const float* xhat = cache.normalized.raw();
  float* dx = g.input.raw();

  for (int64_t c = 0; c < L.channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int64_t n = 0; n < L.batch; ++n) {
      const int64_t off = (n * L.channels + c) * L.inner;
      for (int64_t i = 0; i < L.inner; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat[off + i];
      }
    }
    const size_t ci = static_cast<size_t>(c);
    g.gamma[ci] = static_cast<float>(sum_dy_xhat);
    g.beta[ci] = static_cast<float>(sum_dy);
    const double scale = static_cast<double>(gamma[ci]) * cache.inv_std[ci];
    if (cache.mode == NormMode::kEval) {
      for (int64_t n = 0; n < L.batch; ++n) {
        const int64_t off = (n * L.channels + c) * L.inner;
        for (int64_t i = 0; i < L.inner; ++i) dx[off + i] = static_cast<float>(scale * dy[off + i]);
      }
    } else {
      const double m = static_cast<double>(count);
      const double mean_dy = sum_dy / m;
      const double mean_dy_xhat = sum_dy_xhat / m;
      for (int64_t n = 0; n < L.batch; ++n) {
        const int64_t off = (n * L.channels + c) * L.inner;
        for (int64_t i = 0; i < L.inner; ++i) {
          dx[off + i] =
              static_cast<float>(scale * (dy[off + i] - mean_dy - xhat[off + i] * mean_dy_xhat));
        }
      }
    }
  }
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = Tensor::zeros_like(input);
  const float* x = input.raw();
  float* y = out.raw();
  for (size_t i = 0; i < input.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  if (!grad_out.same_shape(input)) {
    throw ShapeError("relu_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                     " != input shape " + shape_to_string(input.shape()));
  }
  Tensor g = Tensor::zeros_like(input);
  const float* x = input.raw();
  const float* dy = grad_out.raw();
  float* dx = g.raw();
  for (size_t i = 0; i < input.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  return g;
}

MaxPoolResult maxpool3d_forward(const Tensor& input, const PoolSpec& spec) {
  if (input.rank() != 5) {
    throw ShapeError("maxpool3d: input must be [N,C,T,H,W], got " + shape_to_string(input.shape()));
  }
  static constexpr const char* axes[3] = {"T", "H", "W"};
  Dims3 in{input.dim(2), input.dim(3), input.dim(4)};
  Dims3 out{};
  for (int i = 0; i < 3; ++i) {
    if (spec.window[i] < 1 || spec.stride[i] < 1 || spec.padding[i] < 0) {
      throw ShapeError("maxpool3d: invalid window/stride/padding on axis " + std::string(axes[i]));
    }
    if (spec.window[i] > in[i] + 2 * spec.padding[i]) {
      throw ShapeError("maxpool3d: window " + std::to_string(spec.window[i]) + " on axis " +
                       axes[i] + " exceeds padded input extent " +
                       std::to_string(in[i] + 2 * spec.padding[i]));
    }
    if (spec.padding[i] * 2 > spec.window[i]) {
      throw ShapeError("maxpool3d: padding on axis " + std::string(axes[i]) +
                       " must be at most half the window");
    }
    out[i] = (in[i] + 2 * spec.padding[i] - spec.window[i]) / spec.stride[i] + 1;
  }
  const int64_t N = input.dim(0);
  const int64_t C = input.dim(1);
  MaxPoolResult r{Tensor({N, C, out[0], out[1], out[2]}), {}};
  r.argmax.resize(r.output.size());
  const int64_t in_plane = in[0] * in[1] * in[2];
  const int64_t out_plane = out[0] * out[1] * out[2];
  const float* x = input.raw();
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const float* src = x + nc * in_plane;
    for (int64_t ot = 0; ot < out[0]; ++ot) {
      for (int64_t oh = 0; oh < out[1]; ++oh) {
        for (int64_t ow = 0; ow < out[2]; ++ow) {
          float best = -std::numeric_limits<float>::infinity();
          int64_t best_idx = -1;
          for (int64_t kt = 0; kt < spec.window[0]; ++kt) {
            const int64_t it = ot * spec.stride[0] + kt - spec.padding[0];
            if (it < 0 || it >= in[0]) continue;
            for (int64_t kh = 0; kh < spec.window[1]; ++kh) {
              const int64_t ih = oh * spec.stride[1] + kh - spec.padding[1];
              if (ih < 0 || ih >= in[1]) continue;
              for (int64_t kw = 0; kw < spec.window[2]; ++kw) {
                const int64_t iw = ow * spec.stride[2] + kw - spec.padding[2];
                if (iw < 0 || iw >= in[2]) continue;
                const int64_t idx = (it * in[1] + ih) * in[2] + iw;
                // Strict comparison keeps the lowest index on ties.
                if (best_idx < 0 || src[idx] > best) {
                  best = src[idx];
                  best_idx = idx;
                }
              }
            }
          }
          const int64_t o = nc * out_plane + (ot * out[1] + oh) * out[2] + ow;
          r.output[static_cast<size_t>(o)] = best;
          r.argmax[static_cast<size_t>(o)] = nc * in_plane + best_idx;
        }
      }
    }
  }
  return r;
}

Tensor maxpool3d_backward(const Tensor& grad_out, std::span<const int64_t> argmax,
                          const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool3d_backward: argmax count " + std::to_string(argmax.size()) +
                     " != grad_out size " + std::to_string(grad_out.size()));
  }
  Tensor g(input_shape, 0.0f);
  const int64_t limit = static_cast<int64_t>(g.size());
  for (size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] < 0 || argmax[i] >= limit) throw ShapeError("maxpool3d_backward: bad argmax index");
    g[static_cast<size_t>(argmax[i])] += grad_out[i];
  }
  return g;
}

Tensor global_avgpool_forward(const Tensor& input) {
  const ChannelLayout L = channel_layout(input, "global_avgpool");
  Tensor out({L.batch, L.channels});
  const float* x = input.raw();
  for (int64_t nc = 0; nc < L.batch * L.channels; ++nc) {
    double s = 0.0;
    for (int64_t i = 0; i < L.inner; ++i) s += x[nc * L.inner + i];
    out[static_cast<size_t>(nc)] = static_cast<float>(s / static_cast<double>(L.inner));
  }
  return out;
}

Tensor global_avgpool_backward(const Tensor& grad_out, const Shape& input_shape) {
  Tensor g(input_shape, 0.0f);
  const ChannelLayout L = channel_layout(g, "global_avgpool_backward");
  if (grad_out.shape() != Shape{L.batch, L.channels}) {
    throw ShapeError("global_avgpool_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                     " does not match input " + shape_to_string(input_shape));
  }
  const float inv = 1.0f / static_cast<float>(L.inner);
  for (int64_t nc = 0; nc < L.batch * L.channels; ++nc) {
    const float v = grad_out[static_cast<size_t>(nc)] * inv;
    std::fill_n(g.raw() + nc * L.inner, L.inner, v);
  }
  return g;
}

Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(0)) {
    throw ShapeError("linear: input " + shape_to_string(input.shape()) + " incompatible with weights " +
                     shape_to_string(weights.shape()));
  }
  const int64_t N = input.dim(0), D = input.dim(1), K = weights.dim(1);
  if (bias.shape() != Shape{K}) {
    throw ShapeError("linear: bias shape " + shape_to_string(bias.shape()) + " != [" +
                     std::to_string(K) + "]");
  }
  Tensor out({N, K});
  std::vector<double> acc(static_cast<size_t>(K));
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t k = 0; k < K; ++k) acc[static_cast<size_t>(k)] = bias[static_cast<size_t>(k)];
    for (int64_t d = 0; d < D; ++d) {
      const double x = input[static_cast<size_t>(n * D + d)];
      if (x == 0.0) continue;
      const float* wrow = weights.raw() + d * K;
      for (int64_t k = 0; k < K; ++k) acc[static_cast<size_t>(k)] += x * wrow[k];
    }
    for (int64_t k = 0; k < K; ++k) out[static_cast<size_t>(n * K + k)] = static_cast<float>(acc[static_cast<size_t>(k)]);
  }
  return out;
}

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights) {
  if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(0) ||
      grad_out.shape() != Shape{input.dim(0), weights.dim(1)}) {
    throw ShapeError("linear_backward: grad_out " + shape_to_string(grad_out.shape()) + ", input " +
                     shape_to_string(input.shape()) + ", weights " + shape_to_string(weights.shape()));
  }
  const int64_t N = input.dim(0), D = input.dim(1), K = weights.dim(1);
  LinearGrads g{Tensor::zeros_like(input), Tensor::zeros_like(weights), Tensor({K})};
  const float* dy = grad_out.raw();
  for (int64_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (int64_t n = 0; n < N; ++n) s += dy[n * K + k];
    g.bias[static_cast<size_t>(k)] = static_cast<float>(s);
  }
  for (int64_t d = 0; d < D; ++d) {
    for (int64_t k = 0; k < K; ++k) {
      double s = 0.0;
      for (int64_t n = 0; n < N; ++n) s += static_cast<double>(input[static_cast<size_t>(n * D + d)]) * dy[n * K + k];
      g.weights[static_cast<size_t>(d * K + k)] = static_cast<float>(s);
    }
  }
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t d = 0; d < D; ++d) {
      double s = 0.0;
      const float* wrow = weights.raw() + d * K;
      for (int64_t k = 0; k < K; ++k) s += static_cast<double>(wrow[k]) * dy[n * K + k];
      g.input[static_cast<size_t>(n * D + d)] = static_cast<float>(s);
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: expected [N,K], got " + shape_to_string(logits.shape()));
  const int64_t N = logits.dim(0), K = logits.dim(1);
  Tensor p = Tensor::zeros_like(logits);
  for (int64_t n = 0; n < N; ++n) {
    const float* row = logits.raw() + n * K;
    const float m = *std::max_element(row, row + K);
    double z = 0.0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - m);
    for (int64_t k = 0; k < K; ++k) {
      p[static_cast<size_t>(n * K + k)] = static_cast<float>(std::exp(static_cast<double>(row[k]) - m) / z);
    }
  }
  return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError("softmax_cross_entropy: expected [N,K], got " + shape_to_string(logits.shape()));
  }
  const int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != N) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(N));
  }
  LossResult r{0.0, Tensor::zeros_like(logits)};
  double total = 0.0;
  for (int64_t n = 0; n < N; ++n) {
    const int label = labels[static_cast<size_t>(n)];
    if (label < 0 || label >= K) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                              " outside [0," + std::to_string(K) + ")");
    }
    const float* row = logits.raw() + n * K;
    const double m = *std::max_element(row, row + K);
    double z = 0.0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(row[k] - m);
    const double log_z = std::log(z);
    total += -(row[label] - m - log_z);
    float* g = r.grad_logits.raw() + n * K;
    for (int64_t k = 0; k < K; ++k) {
      const double p = std::exp(row[k] - m - log_z);
      g[k] = static_cast<float>((p - (k == label ? 1.0 : 0.0)) / static_cast<double>(N));
    }
  }
  r.loss = total / static_cast<double>(N);
  return r;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("argmax_rows: expected [N,K]");
  const int64_t N = scores.dim(0), K = scores.dim(1);
  std::vector<int> out(static_cast<size_t>(N));
  for (int64_t n = 0; n < N; ++n) {
    const float* row = scores.raw() + n * K;
    out[static_cast<size_t>(n)] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

}  // namespace cubic
