#pragma once

// Forward/backward kernels for the layers of the 3D ResNet towers.
//
// All functions are pure: inputs are taken by const reference and never
// modified. Layouts are NCDHW ("N, C, T, H, W") for 5-D activations.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cubic/tensor.hpp"

namespace cubic {

// (t, h, w) triple.
using Dims3 = std::array<int64_t, 3>;

struct ConvSpec {
  int64_t in_channels = 1;
  int64_t out_channels = 1;
  Dims3 kernel{1, 1, 1};
  Dims3 stride{1, 1, 1};
  Dims3 padding{0, 0, 0};

  void validate() const;
  Shape weight_shape() const;
  Dims3 output_extent(const Dims3& input) const;
};

// `bias` may be empty (no bias term).
Tensor conv3d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec);

struct ConvGrads {
  Tensor input;  // empty when not requested
  Tensor weights;
  Tensor bias;  // always produced; equals per-channel sum of grad_out
};

ConvGrads conv3d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights,
                          const ConvSpec& spec, bool want_input_grad = true);

// ---------------------------------------------------------------------------
// Batch norm over (N, T, H, W) per channel.

enum class NormMode { kTrain, kEval };

inline constexpr float kBatchNormEpsilon = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.1f;

struct RunningStats {
  Tensor mean;
  Tensor var;
  // Number of train-mode updates folded into mean/var. Zero means the stats
  // were never estimated and eval mode is refused.
  int64_t updates = 0;

  static RunningStats initial(int64_t channels);
};

struct BatchNormCache {
  Tensor normalized;          // x-hat, same shape as input
  std::vector<float> inv_std; // per channel
  NormMode mode = NormMode::kTrain;
};

struct BatchNormResult {
  Tensor output;
  RunningStats stats;  // updated copy in train mode, unchanged in eval mode
  BatchNormCache cache;
};

// `momentum` weights the new batch statistics when updating running stats.
BatchNormResult batchnorm3d_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                    const RunningStats& stats, NormMode mode,
                                    float momentum = kBatchNormMomentum);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm3d_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                    const Tensor& gamma);

// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& input);
// Gradient passes where input > 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

struct PoolSpec {
  Dims3 window{1, 1, 1};
  Dims3 stride{1, 1, 1};
  Dims3 padding{0, 0, 0};
};

struct MaxPoolResult {
  Tensor output;
  // Flat input index of the winner for every output element. Ties go to the
  // lowest linear index.
  std::vector<int64_t> argmax;
};

MaxPoolResult maxpool3d_forward(const Tensor& input, const PoolSpec& spec);
Tensor maxpool3d_backward(const Tensor& grad_out, std::span<const int64_t> argmax,
                          const Shape& input_shape);

// [N, C, ...] -> [N, C]
Tensor global_avgpool_forward(const Tensor& input);
Tensor global_avgpool_backward(const Tensor& grad_out, const Shape& input_shape);

// input [N, D], weights [D, K], bias [K] -> [N, K]
Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct LinearGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weights);

// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;
};

// Mean over the batch of -log softmax(logits)[label]; gradient (softmax - onehot) / N.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Row-wise softmax probabilities.
Tensor softmax(const Tensor& logits);

// Index of the row maximum, lowest index on ties.
std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace cubic
