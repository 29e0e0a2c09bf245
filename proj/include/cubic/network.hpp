#pragma once

// 3D ResNet towers, the 4-tower shared-weight puzzle classifier and the
// single-tower action classifier.
//
// Tower parameters live once in NetworkParams under their plain names
// ("conv1.weight", "layer2.0.bn1.gamma", ...). The puzzle head uses the
// "puzzle." prefix and the action head the "action." prefix.

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cubic/ops.hpp"
#include "cubic/params.hpp"
#include "cubic/permutation.hpp"
#include "cubic/rng.hpp"
#include "cubic/tensor.hpp"

namespace cubic {

enum class BackboneVariant { kTiny, kResNet10, kResNet18 };

const char* to_string(BackboneVariant v);
// Throws ConfigError for unknown names.
BackboneVariant parse_backbone_variant(const std::string& name);

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::kTiny;
  int64_t in_channels = 3;
  int64_t stem_channels = 8;
  Dims3 stem_kernel{3, 3, 3};
  Dims3 stem_stride{1, 2, 2};
  bool stem_maxpool = false;
  std::vector<int64_t> stage_channels{8, 16};
  std::vector<int64_t> block_counts{1, 1};

  static BackboneConfig make(BackboneVariant variant);

  int64_t feature_dim() const { return stage_channels.back(); }
  // Product of all strides per axis; inputs must be at least this large.
  Dims3 minimum_input() const;
  void validate() const;

  bool operator==(const BackboneConfig&) const = default;
};

struct ConvBnTape {
  Tensor input;
  BatchNormCache bn;
};

struct BlockTape {
  ConvBnTape conv1;
  Tensor act1;
  ConvBnTape conv2;
  std::optional<ConvBnTape> downsample;
  Tensor out;
};

/// Cached activations of one tower pass, plus the running statistics that a
/// train-mode pass produced.
struct TowerTape {
  ConvBnTape stem;
  Tensor stem_act;
  std::vector<int64_t> pool_argmax;
  Shape pool_input_shape;
  std::vector<BlockTape> blocks;
  Shape final_shape;
  std::vector<std::pair<std::string, RunningStats>> updated_stats;
};

class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  const BackboneConfig& config() const { return config_; }

  // Adds tower parameters (He fan-in normal convs, gamma 1, beta 0).
  void init_params(NetworkParams& params, Rng& rng) const;
  std::vector<std::string> param_names() const;
  int64_t parameter_count() const;

  // Throws ShapeError naming the minimum extent when `input` is too small.
  void check_input(const Tensor& input) const;

  // [N, C, T, H, W] -> [N, D]. The tape is filled when non-null; in train
  // mode it also receives the updated running statistics.
  Tensor forward(const NetworkParams& params, const Tensor& input, NormMode mode, TowerTape* tape,
                 float norm_momentum = kBatchNormMomentum) const;

  // Accumulates tower gradients. The input gradient is returned only when
  // `want_input_grad` is set (otherwise the result is empty).
  Tensor backward(const NetworkParams& params, const TowerTape& tape, const Tensor& grad_features,
                  Gradients& grads, bool want_input_grad = false) const;

 private:
  // Visits every conv + batch-norm pair in forward order.
  void for_each_layer(
      const std::function<void(const std::string&, const ConvSpec&, const std::string&)>& fn) const;

  struct BlockSpec {
    std::string prefix;
    int64_t in_channels;
    int64_t out_channels;
    int64_t stride;
  };

  BackboneConfig config_;
  ConvSpec stem_spec_;
  std::vector<BlockSpec> blocks_;
};

NetworkParams build_backbone(const BackboneConfig& config, Rng& rng);

// Writes the running statistics collected in a train-mode tape back into params.
void commit_norm_stats(NetworkParams& params, const TowerTape& tape);

// [N, D] per-tower feature.
Tensor tower_forward(const NetworkParams& params, const Backbone& backbone, const Tensor& crop,
                     NormMode mode = NormMode::kEval);

// ---------------------------------------------------------------------------
// Puzzle head: concat(4 features) -> FC(4D -> F) -> ReLU -> FC(F -> K).

struct HeadTape {
  Tensor input;   // [N, 4D]
  Tensor hidden;  // post-ReLU [N, F]
};

void add_puzzle_head(NetworkParams& params, int64_t feature_dim, int64_t hidden, int64_t classes,
                     Rng& rng);
bool is_puzzle_head_param(const std::string& name);

Tensor puzzle_head_forward(const NetworkParams& params, std::span<const Tensor> features,
                           HeadTape* tape = nullptr);
// Returns the gradient for each of the 4 feature tensors.
std::array<Tensor, kTupleSize> puzzle_head_backward(const NetworkParams& params, const HeadTape& tape,
                                                    const Tensor& grad_logits, Gradients& grads);

struct PuzzleTape {
  TowerTape tower;
  HeadTape head;
  int64_t batch = 0;
};

/// 4-tower siamese network. The four crops of each sample go through the
/// same tower as one concatenated batch of 4N crops, so batch-norm statistics
/// are shared across towers.
class PuzzleNetwork {
 public:
  PuzzleNetwork(BackboneConfig backbone, int64_t hidden, int64_t classes);

  const Backbone& backbone() const { return backbone_; }
  int64_t hidden() const { return hidden_; }
  int64_t classes() const { return classes_; }

  NetworkParams build(Rng& rng) const;

  // crops[i] is the [N, C, t, h, w] batch of emitted slot i.
  Tensor forward(const NetworkParams& params, const std::array<Tensor, kTupleSize>& crops,
                 NormMode mode, PuzzleTape* tape) const;
  void backward(const NetworkParams& params, const PuzzleTape& tape, const Tensor& grad_logits,
                Gradients& grads) const;

 private:
  Backbone backbone_;
  int64_t hidden_;
  int64_t classes_;
};

// ---------------------------------------------------------------------------
// Action classifier: one tower -> global pool -> FC(D -> num_classes).

void add_action_head(NetworkParams& params, int64_t feature_dim, int64_t classes, Rng& rng);
bool is_action_head_param(const std::string& name);

struct ActionTape {
  TowerTape tower;
  Tensor features;
};

class ActionNetwork {
 public:
  ActionNetwork(BackboneConfig backbone, int64_t classes);

  const Backbone& backbone() const { return backbone_; }
  int64_t classes() const { return classes_; }

  NetworkParams build(Rng& rng) const;

  // clips [N, 3, F, h, w] -> logits [N, classes].
  Tensor forward(const NetworkParams& params, const Tensor& clips, NormMode mode, ActionTape* tape,
                 float norm_momentum = kBatchNormMomentum) const;
  // With `head_only`, gradients stop at the features (linear probe).
  void backward(const NetworkParams& params, const ActionTape& tape, const Tensor& grad_logits,
                Gradients& grads, bool head_only) const;

 private:
  Backbone backbone_;
  int64_t classes_;
};

}  // namespace cubic
