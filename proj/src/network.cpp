#include "cubic/network.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "cubic/errors.hpp"

namespace cubic {

namespace {

constexpr PoolSpec kStemPool{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}};

void add_conv(NetworkParams& params, const std::string& name, const ConvSpec& spec, Rng& rng) {
  Tensor w(spec.weight_shape());
  const double fan_in = static_cast<double>(spec.in_channels * spec.kernel[0] * spec.kernel[1] * spec.kernel[2]);
  const double std = std::sqrt(2.0 / fan_in);
  for (float& v : w.data()) v = static_cast<float>(rng.normal() * std);
  params.add(name, std::move(w));
}

void add_bn(NetworkParams& params, const std::string& prefix, int64_t channels) {
  params.add(prefix + ".gamma", Tensor({channels}, 1.0f));
  params.add(prefix + ".beta", Tensor({channels}, 0.0f));
  params.add_norm_stats(prefix, RunningStats::initial(channels));
}

// conv (no bias) -> batch norm
Tensor conv_bn_forward(const NetworkParams& params, const std::string& conv, const std::string& bn,
                       const ConvSpec& spec, const Tensor& x, NormMode mode, float momentum,
                       ConvBnTape* tape, TowerTape* tower) {
  Tensor y = conv3d_forward(x, params.at(conv + ".weight"), Tensor(), spec);
  BatchNormResult r = batchnorm3d_forward(y, params.at(bn + ".gamma"), params.at(bn + ".beta"),
                                          params.norm_stats(bn), mode, momentum);
  if (tape) {
    tape->input = x;
    tape->bn = std::move(r.cache);
  }
  if (tower && mode == NormMode::kTrain) tower->updated_stats.emplace_back(bn, std::move(r.stats));
  return std::move(r.output);
}

Tensor conv_bn_backward(const NetworkParams& params, const std::string& conv, const std::string& bn,
                        const ConvSpec& spec, const ConvBnTape& tape, const Tensor& grad,
                        Gradients& grads, bool want_input_grad) {
  BatchNormGrads b = batchnorm3d_backward(grad, tape.bn, params.at(bn + ".gamma"));
  grads.accumulate(bn + ".gamma", b.gamma);
  grads.accumulate(bn + ".beta", b.beta);
  ConvGrads c = conv3d_backward(b.input, tape.input, params.at(conv + ".weight"), spec, want_input_grad);
  grads.accumulate(conv + ".weight", c.weights);
  return std::move(c.input);
}

// Zeroes gradient entries where the ReLU output was not positive.
Tensor relu_mask(const Tensor& grad, const Tensor& activation) {
  return relu_backward(grad, activation);
}

ConvSpec conv3x3(int64_t cin, int64_t cout, int64_t stride) {
  return {cin, cout, {3, 3, 3}, {stride, stride, stride}, {1, 1, 1}};
}

ConvSpec conv1x1(int64_t cin, int64_t cout, int64_t stride) {
  return {cin, cout, {1, 1, 1}, {stride, stride, stride}, {0, 0, 0}};
}

void init_linear(NetworkParams& params, const std::string& prefix, int64_t in, int64_t out, double std,
                 Rng& rng) {
  Tensor w({in, out});
  for (float& v : w.data()) v = static_cast<float>(rng.normal() * std);
  params.add(prefix + ".weight", std::move(w));
  params.add(prefix + ".bias", Tensor({out}, 0.0f));
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

const char* to_string(BackboneVariant v) {
  switch (v) {
    case BackboneVariant::kTiny:
      return "tiny";
    case BackboneVariant::kResNet10:
      return "resnet10";
    case BackboneVariant::kResNet18:
      return "resnet18";
  }
  return "?";
}

BackboneVariant parse_backbone_variant(const std::string& name) {
  if (name == "tiny") return BackboneVariant::kTiny;
  if (name == "resnet10") return BackboneVariant::kResNet10;
  if (name == "resnet18") return BackboneVariant::kResNet18;
  throw ConfigError("unknown backbone variant '" + name + "' (expected tiny, resnet10 or resnet18)");
}

BackboneConfig BackboneConfig::make(BackboneVariant variant) {
  BackboneConfig c;
  c.variant = variant;
  if (variant == BackboneVariant::kTiny) return c;
  c.stem_channels = 64;
  c.stem_kernel = {7, 7, 7};
  c.stem_stride = {1, 2, 2};
  c.stem_maxpool = true;
  c.stage_channels = {64, 128, 256, 512};
  c.block_counts = variant == BackboneVariant::kResNet18 ? std::vector<int64_t>{2, 2, 2, 2}
                                                         : std::vector<int64_t>{1, 1, 1, 1};
  return c;
}

Dims3 BackboneConfig::minimum_input() const {
  Dims3 m = stem_stride;
  for (int i = 0; i < 3; ++i) {
    if (stem_maxpool) m[i] *= kStemPool.stride[i];
    for (size_t s = 1; s < stage_channels.size(); ++s) m[i] *= 2;
  }
  return m;
}

void BackboneConfig::validate() const {
  if (in_channels < 1 || stem_channels < 1) throw ConfigError("backbone: channel counts must be positive");
  if (stage_channels.empty() || stage_channels.size() != block_counts.size()) {
    throw ConfigError("backbone: stage_channels and block_counts must be non-empty and equally long");
  }
  for (size_t i = 0; i < stage_channels.size(); ++i) {
    if (stage_channels[i] < 1 || block_counts[i] < 1) {
      throw ConfigError("backbone: stage " + std::to_string(i) + " needs positive channels and blocks");
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (stem_kernel[i] < 1 || stem_kernel[i] % 2 == 0 || stem_stride[i] < 1) {
      throw ConfigError("backbone: stem kernel extents must be odd and strides positive");
    }
  }
  if (variant == BackboneVariant::kResNet18 && block_counts != std::vector<int64_t>{2, 2, 2, 2}) {
    throw ConfigError("backbone: resnet18 requires block counts (2,2,2,2)");
  }
  if (variant == BackboneVariant::kResNet10 && block_counts != std::vector<int64_t>{1, 1, 1, 1}) {
    throw ConfigError("backbone: resnet10 requires block counts (1,1,1,1)");
  }
  if (variant == BackboneVariant::kTiny && stage_channels.size() != 2) {
    throw ConfigError("backbone: tiny has exactly two stages");
  }
}

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  stem_spec_ = {config_.in_channels, config_.stem_channels, config_.stem_kernel, config_.stem_stride,
                {config_.stem_kernel[0] / 2, config_.stem_kernel[1] / 2, config_.stem_kernel[2] / 2}};
  int64_t channels = config_.stem_channels;
  for (size_t s = 0; s < config_.stage_channels.size(); ++s) {
    for (int64_t b = 0; b < config_.block_counts[s]; ++b) {
      const int64_t stride = (s > 0 && b == 0) ? 2 : 1;
      blocks_.push_back({"layer" + std::to_string(s + 1) + "." + std::to_string(b), channels,
                         config_.stage_channels[s], stride});
      channels = config_.stage_channels[s];
    }
  }
}

void Backbone::for_each_layer(const std::function<void(const std::string&, const ConvSpec&, const std::string&)>& fn) const {
  fn("conv1", stem_spec_, "bn1");
  for (const BlockSpec& b : blocks_) {
    fn(b.prefix + ".conv1", conv3x3(b.in_channels, b.out_channels, b.stride), b.prefix + ".bn1");
    fn(b.prefix + ".conv2", conv3x3(b.out_channels, b.out_channels, 1), b.prefix + ".bn2");
    if (b.stride != 1 || b.in_channels != b.out_channels) {
      fn(b.prefix + ".downsample.conv", conv1x1(b.in_channels, b.out_channels, b.stride),
         b.prefix + ".downsample.bn");
    }
  }
}

void Backbone::init_params(NetworkParams& params, Rng& rng) const {
  for_each_layer([&](const std::string& conv, const ConvSpec& spec, const std::string& bn) {
    add_conv(params, conv + ".weight", spec, rng);
    add_bn(params, bn, spec.out_channels);
  });
}

std::vector<std::string> Backbone::param_names() const {
  std::vector<std::string> names;
  for_each_layer([&](const std::string& conv, const ConvSpec&, const std::string& bn) {
    names.push_back(conv + ".weight");
    names.push_back(bn + ".gamma");
    names.push_back(bn + ".beta");
  });
  return names;
}

int64_t Backbone::parameter_count() const {
  int64_t n = 0;
  for_each_layer([&](const std::string&, const ConvSpec& spec, const std::string&) {
    n += shape_numel(spec.weight_shape()) + 2 * spec.out_channels;
  });
  return n;
}

void Backbone::check_input(const Tensor& input) const {
  if (input.rank() != 5) {
    throw ShapeError("tower input must be [N,C,T,H,W], got " + shape_to_string(input.shape()));
  }
  if (input.dim(1) != config_.in_channels) {
    throw ShapeError("tower input has " + std::to_string(input.dim(1)) + " channels, backbone expects " +
                     std::to_string(config_.in_channels));
  }
  static constexpr const char* axes[3] = {"temporal", "height", "width"};
  const Dims3 minimum = config_.minimum_input();
  for (int i = 0; i < 3; ++i) {
    if (input.dim(2 + static_cast<size_t>(i)) < minimum[i]) {
      throw ShapeError(std::string("tower input ") + axes[i] + " extent " +
                       std::to_string(input.dim(2 + static_cast<size_t>(i))) +
                       " is too small for the stage strides; minimum is " + std::to_string(minimum[i]));
    }
  }
}

Tensor Backbone::forward(const NetworkParams& params, const Tensor& input, NormMode mode,
                         TowerTape* tape, float norm_momentum) const {
  check_input(input);
  if (tape) *tape = TowerTape{};
  Tensor x = conv_bn_forward(params, "conv1", "bn1", stem_spec_, input, mode, norm_momentum, tape ? &tape->stem : nullptr, tape);
  x = relu_forward(x);
  if (tape) tape->stem_act = x;
  if (config_.stem_maxpool) {
    MaxPoolResult p = maxpool3d_forward(x, kStemPool);
    if (tape) {
      tape->pool_input_shape = x.shape();
      tape->pool_argmax = std::move(p.argmax);
    }
    x = std::move(p.output);
  }
  if (tape) tape->blocks.resize(blocks_.size());
  for (size_t i = 0; i < blocks_.size(); ++i) {
    const BlockSpec& b = blocks_[i];
    BlockTape* bt = tape ? &tape->blocks[i] : nullptr;
    Tensor h = conv_bn_forward(params, b.prefix + ".conv1", b.prefix + ".bn1",
                               conv3x3(b.in_channels, b.out_channels, b.stride), x, mode, norm_momentum,
                               bt ? &bt->conv1 : nullptr, tape);
    h = relu_forward(h);
    if (bt) bt->act1 = h;
    h = conv_bn_forward(params, b.prefix + ".conv2", b.prefix + ".bn2",
                        conv3x3(b.out_channels, b.out_channels, 1), h, mode, norm_momentum, bt ? &bt->conv2 : nullptr, tape);
    if (b.stride != 1 || b.in_channels != b.out_channels) {
      ConvBnTape* dt = nullptr;
      if (bt) dt = &bt->downsample.emplace();
      add_inplace(h, conv_bn_forward(params, b.prefix + ".downsample.conv", b.prefix + ".downsample.bn",
                                     conv1x1(b.in_channels, b.out_channels, b.stride), x, mode, norm_momentum, dt,
                                     tape));
    } else {
      add_inplace(h, x);
    }
    x = relu_forward(h);
    if (bt) bt->out = x;
  }
  if (tape) tape->final_shape = x.shape();
  return global_avgpool_forward(x);
}

Tensor Backbone::backward(const NetworkParams& params, const TowerTape& tape, const Tensor& grad_features,
                          Gradients& grads, bool want_input_grad) const {
  if (tape.blocks.size() != blocks_.size()) throw std::logic_error("tower backward: tape does not match backbone");
  Tensor g = global_avgpool_backward(grad_features, tape.final_shape);
  for (size_t i = blocks_.size(); i-- > 0;) {
    const BlockSpec& b = blocks_[i];
    const BlockTape& bt = tape.blocks[i];
    g = relu_mask(g, bt.out);
    Tensor main = conv_bn_backward(params, b.prefix + ".conv2", b.prefix + ".bn2",
                                   conv3x3(b.out_channels, b.out_channels, 1), bt.conv2, g, grads, true);
    main = relu_mask(main, bt.act1);
    main = conv_bn_backward(params, b.prefix + ".conv1", b.prefix + ".bn1",
                            conv3x3(b.in_channels, b.out_channels, b.stride), bt.conv1, main, grads, true);
    if (bt.downsample) {
      add_inplace(main, conv_bn_backward(params, b.prefix + ".downsample.conv", b.prefix + ".downsample.bn",
                                         conv1x1(b.in_channels, b.out_channels, b.stride), *bt.downsample, g,
                                         grads, true));
    } else {
      add_inplace(main, g);
    }
    g = std::move(main);
  }
  if (config_.stem_maxpool) g = maxpool3d_backward(g, tape.pool_argmax, tape.pool_input_shape);
  g = relu_mask(g, tape.stem_act);
  return conv_bn_backward(params, "conv1", "bn1", stem_spec_, tape.stem, g, grads, want_input_grad);
}

NetworkParams build_backbone(const BackboneConfig& config, Rng& rng) {
  NetworkParams params;
  Backbone(config).init_params(params, rng);
  return params;
}

void commit_norm_stats(NetworkParams& params, const TowerTape& tape) {
  for (const auto& [name, stats] : tape.updated_stats) params.norm_stats(name) = stats;
}

Tensor tower_forward(const NetworkParams& params, const Backbone& backbone, const Tensor& crop, NormMode mode) {
  return backbone.forward(params, crop, mode, nullptr);
}

// ---------------------------------------------------------------------------

void add_puzzle_head(NetworkParams& params, int64_t feature_dim, int64_t hidden, int64_t classes, Rng& rng) {
  if (feature_dim < 1 || hidden < 1 || classes < 1) throw ConfigError("puzzle head: extents must be positive");
  init_linear(params, "puzzle.fc1", kTupleSize * feature_dim, hidden,
              std::sqrt(2.0 / static_cast<double>(kTupleSize * feature_dim)), rng);
  // Small output layer: near-uniform class scores at initialization.
  init_linear(params, "puzzle.fc2", hidden, classes, 0.01, rng);
}

bool is_puzzle_head_param(const std::string& name) { return starts_with(name, "puzzle."); }

Tensor puzzle_head_forward(const NetworkParams& params, std::span<const Tensor> features, HeadTape* tape) {
  if (features.size() != static_cast<size_t>(kTupleSize)) {
    throw ShapeError("puzzle head expects 4 feature tensors, got " + std::to_string(features.size()));
  }
  for (const Tensor& f : features) {
    if (f.rank() != 2 || !f.same_shape(features[0])) {
      throw ShapeError("puzzle head: feature tensors must share one [N,D] shape");
    }
  }
  const int64_t N = features[0].dim(0), D = features[0].dim(1);
  Tensor joined({N, kTupleSize * D});
  for (int64_t n = 0; n < N; ++n) {
    for (int i = 0; i < kTupleSize; ++i) {
      std::copy_n(features[static_cast<size_t>(i)].raw() + n * D, D, joined.raw() + (n * kTupleSize + i) * D);
    }
  }
  Tensor hidden = relu_forward(linear_forward(joined, params.at("puzzle.fc1.weight"), params.at("puzzle.fc1.bias")));
  Tensor logits = linear_forward(hidden, params.at("puzzle.fc2.weight"), params.at("puzzle.fc2.bias"));
  if (tape) {
    tape->input = std::move(joined);
    tape->hidden = std::move(hidden);
  }
  return logits;
}

std::array<Tensor, kTupleSize> puzzle_head_backward(const NetworkParams& params, const HeadTape& tape,
                                                    const Tensor& grad_logits, Gradients& grads) {
  LinearGrads g2 = linear_backward(grad_logits, tape.hidden, params.at("puzzle.fc2.weight"));
  grads.accumulate("puzzle.fc2.weight", g2.weights);
  grads.accumulate("puzzle.fc2.bias", g2.bias);
  Tensor gh = relu_mask(g2.input, tape.hidden);
  LinearGrads g1 = linear_backward(gh, tape.input, params.at("puzzle.fc1.weight"));
  grads.accumulate("puzzle.fc1.weight", g1.weights);
  grads.accumulate("puzzle.fc1.bias", g1.bias);
  const int64_t N = tape.input.dim(0), D = tape.input.dim(1) / kTupleSize;
  std::array<Tensor, kTupleSize> out;
  for (int i = 0; i < kTupleSize; ++i) {
    out[static_cast<size_t>(i)] = Tensor({N, D});
    for (int64_t n = 0; n < N; ++n) {
      std::copy_n(g1.input.raw() + (n * kTupleSize + i) * D, D, out[static_cast<size_t>(i)].raw() + n * D);
    }
  }
  return out;
}

PuzzleNetwork::PuzzleNetwork(BackboneConfig backbone, int64_t hidden, int64_t classes)
    : backbone_(std::move(backbone)), hidden_(hidden), classes_(classes) {
  if (hidden_ < 1 || classes_ < 2) throw ConfigError("puzzle network: invalid head extents");
}

NetworkParams PuzzleNetwork::build(Rng& rng) const {
  NetworkParams params;
  backbone_.init_params(params, rng);
  add_puzzle_head(params, backbone_.config().feature_dim(), hidden_, classes_, rng);
  return params;
}

Tensor PuzzleNetwork::forward(const NetworkParams& params, const std::array<Tensor, kTupleSize>& crops,
                              NormMode mode, PuzzleTape* tape) const {
  for (const Tensor& c : crops) {
    if (!c.same_shape(crops[0])) throw ShapeError("puzzle network: the 4 crop batches must share one shape");
  }
  const int64_t N = crops[0].dim(0);
  Tensor batch = concat_batch(crops);
  Tensor features = backbone_.forward(params, batch, mode, tape ? &tape->tower : nullptr);
  std::array<Tensor, kTupleSize> per_tower;
  for (int i = 0; i < kTupleSize; ++i) per_tower[static_cast<size_t>(i)] = features.slice_batch(i * N, (i + 1) * N);
  if (tape) tape->batch = N;
  return puzzle_head_forward(params, per_tower, tape ? &tape->head : nullptr);
}

void PuzzleNetwork::backward(const NetworkParams& params, const PuzzleTape& tape, const Tensor& grad_logits,
                             Gradients& grads) const {
  std::array<Tensor, kTupleSize> gf = puzzle_head_backward(params, tape.head, grad_logits, grads);
  Tensor joined = concat_batch(gf);
  backbone_.backward(params, tape.tower, joined, grads);
}

// ---------------------------------------------------------------------------

void add_action_head(NetworkParams& params, int64_t feature_dim, int64_t classes, Rng& rng) {
  if (feature_dim < 1 || classes < 1) throw ConfigError("action head: extents must be positive");
  init_linear(params, "action.fc", feature_dim, classes, 0.01, rng);
}

bool is_action_head_param(const std::string& name) { return starts_with(name, "action."); }

ActionNetwork::ActionNetwork(BackboneConfig backbone, int64_t classes)
    : backbone_(std::move(backbone)), classes_(classes) {
  if (classes_ < 2) throw ConfigError("action network: need at least 2 classes");
}

NetworkParams ActionNetwork::build(Rng& rng) const {
  NetworkParams params;
  backbone_.init_params(params, rng);
  add_action_head(params, backbone_.config().feature_dim(), classes_, rng);
  return params;
}

Tensor ActionNetwork::forward(const NetworkParams& params, const Tensor& clips, NormMode mode,
                              ActionTape* tape, float norm_momentum) const {
  Tensor features = backbone_.forward(params, clips, mode, tape ? &tape->tower : nullptr, norm_momentum);
  Tensor logits = linear_forward(features, params.at("action.fc.weight"), params.at("action.fc.bias"));
  if (tape) tape->features = std::move(features);
  return logits;
}

void ActionNetwork::backward(const NetworkParams& params, const ActionTape& tape, const Tensor& grad_logits,
                             Gradients& grads, bool head_only) const {
  LinearGrads g = linear_backward(grad_logits, tape.features, params.at("action.fc.weight"));
  grads.accumulate("action.fc.weight", g.weights);
  grads.accumulate("action.fc.bias", g.bias);
  if (!head_only) backbone_.backward(params, tape.tower, g.input, grads);
}

}  // namespace cubic
