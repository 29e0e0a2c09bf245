#include "cubic/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cubic/errors.hpp"
#include "cubic/ops.hpp"
#include "cubic/rng.hpp"

namespace cubic {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, double offset = 0.0) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(offset + scale * rng.normal());
  return t;
}

// Sum of r * y accumulated in double; r plays the upstream gradient.
double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
  return s;
}

int64_t pick(Rng& rng, int64_t lo, int64_t hi) { return rng.uniform_int(lo, hi); }

std::string format_entry(const std::string& tensor, int64_t index, double a, double n) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "[%lld] analytic=%.6g numeric=%.6g", static_cast<long long>(index), a, n);
  return tensor + buf;
}

}  // namespace

double gradient_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const std::string& name, const std::vector<CheckedTensor>& tensors,
                                const std::function<double()>& objective, const GradCheckOptions& options) {
  GradCheckReport report;
  report.name = name;
  for (const CheckedTensor& ct : tensors) {
    if (!ct.value->same_shape(*ct.analytic)) {
      throw ShapeError("gradcheck " + name + ": analytic gradient shape differs for " + ct.name);
    }
    std::vector<int64_t> indices = ct.indices;
    if (indices.empty()) {
      indices.resize(ct.value->size());
      std::iota(indices.begin(), indices.end(), int64_t{0});
    }
    for (int64_t i : indices) {
      float& x = (*ct.value)[static_cast<size_t>(i)];
      const float saved = x;
      // Divide by the step actually representable in float.
      const float hi = static_cast<float>(saved + options.step);
      const float lo = static_cast<float>(saved - options.step);
      x = hi;
      const double up = objective();
      x = lo;
      const double down = objective();
      x = saved;
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double analytic = (*ct.analytic)[static_cast<size_t>(i)];
      const double err = gradient_error(analytic, numeric, options.denominator_floor);
      ++report.checked;
      if (err > options.tolerance) ++report.failed;
      if (err >= report.max_error) {
        report.max_error = err;
        report.worst = format_entry(ct.name, i, analytic, numeric);
      }
    }
  }
  return report;
}

GradCheckReport gradcheck_conv3d(uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {1}));
  ConvSpec spec;
  spec.in_channels = pick(rng, 1, 3);
  spec.out_channels = pick(rng, 1, 3);
  Dims3 extent{};
  for (int i = 0; i < 3; ++i) {
    spec.kernel[i] = pick(rng, 1, 3);
    spec.stride[i] = pick(rng, 1, 2);
    spec.padding[i] = pick(rng, 0, spec.kernel[i] / 2);
    extent[i] = pick(rng, std::max<int64_t>(spec.kernel[i], 2), 5);
  }
  const int64_t batch = pick(rng, 1, 2);
  Tensor input = random_tensor({batch, spec.in_channels, extent[0], extent[1], extent[2]}, rng);
  Tensor weights = random_tensor(spec.weight_shape(), rng);
  Tensor bias = random_tensor({spec.out_channels}, rng);
  const Tensor out = conv3d_forward(input, weights, bias, spec);
  const Tensor r = random_tensor(out.shape(), rng);
  const ConvGrads g = conv3d_backward(r, input, weights, spec, true);
  auto objective = [&] { return weighted_sum(conv3d_forward(input, weights, bias, spec), r); };
  return check_gradients("conv3d",
                         {{"input", &input, &g.input, {}},
                          {"weights", &weights, &g.weights, {}},
                          {"bias", &bias, &g.bias, {}}},
                         objective, options);
}

namespace {

GradCheckReport gradcheck_batchnorm(uint64_t seed, NormMode mode, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {2}));
  const int64_t C = pick(rng, 1, 3);
  Shape shape{pick(rng, 1, 3), C, pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 2, 4)};
  Tensor input = random_tensor(shape, rng, 1.5, 0.3);
  Tensor gamma = random_tensor({C}, rng, 0.5, 1.0);
  Tensor beta = random_tensor({C}, rng);
  RunningStats stats = RunningStats::initial(C);
  if (mode == NormMode::kEval) {
    stats.mean = random_tensor({C}, rng, 0.5);
    stats.var = Tensor({C});
    for (float& v : stats.var.data()) v = static_cast<float>(0.5 + rng.uniform01());
    stats.updates = 1;
  }
  const BatchNormResult fwd = batchnorm3d_forward(input, gamma, beta, stats, mode);
  const Tensor r = random_tensor(fwd.output.shape(), rng);
  const BatchNormGrads g = batchnorm3d_backward(r, fwd.cache, gamma);
  auto objective = [&] { return weighted_sum(batchnorm3d_forward(input, gamma, beta, stats, mode).output, r); };
  return check_gradients(mode == NormMode::kTrain ? "batchnorm3d(train)" : "batchnorm3d(eval)",
                         {{"input", &input, &g.input, {}},
                          {"gamma", &gamma, &g.gamma, {}},
                          {"beta", &beta, &g.beta, {}}},
                         objective, options);
}

}  // namespace

GradCheckReport gradcheck_batchnorm_train(uint64_t seed, const GradCheckOptions& options) {
  return gradcheck_batchnorm(seed, NormMode::kTrain, options);
}

GradCheckReport gradcheck_batchnorm_eval(uint64_t seed, const GradCheckOptions& options) {
  return gradcheck_batchnorm(seed, NormMode::kEval, options);
}

GradCheckReport gradcheck_relu(uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {3}));
  Tensor input = random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
  // Keep every entry away from the kink at zero.
  const float margin = static_cast<float>(10 * options.step);
  for (float& v : input.data()) {
    if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
  }
  const Tensor r = random_tensor(input.shape(), rng);
  const Tensor g = relu_backward(r, input);
  auto objective = [&] { return weighted_sum(relu_forward(input), r); };
  return check_gradients("relu", {{"input", &input, &g, {}}}, objective, options);
}

GradCheckReport gradcheck_maxpool3d(uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {4}));
  PoolSpec spec;
  Dims3 extent{};
  for (int i = 0; i < 3; ++i) {
    spec.window[i] = pick(rng, 1, 3);
    spec.stride[i] = pick(rng, 1, 2);
    spec.padding[i] = pick(rng, 0, spec.window[i] / 2);
    extent[i] = pick(rng, std::max<int64_t>(spec.window[i], 2), 5);
  }
  Tensor input({pick(rng, 1, 2), pick(rng, 1, 2), extent[0], extent[1], extent[2]});
  // Distinct values spaced well beyond the finite-difference step so that no
  // perturbation changes a window's winner.
  std::vector<int64_t> order(input.size());
  std::iota(order.begin(), order.end(), int64_t{0});
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
  const double gap = 20 * options.step;
  for (size_t i = 0; i < input.size(); ++i) input[i] = static_cast<float>((static_cast<double>(order[i]) - input.size() / 2.0) * gap);
  const MaxPoolResult fwd = maxpool3d_forward(input, spec);
  const Tensor r = random_tensor(fwd.output.shape(), rng);
  const Tensor g = maxpool3d_backward(r, fwd.argmax, input.shape());
  auto objective = [&] { return weighted_sum(maxpool3d_forward(input, spec).output, r); };
  return check_gradients("maxpool3d", {{"input", &input, &g, {}}}, objective, options);
}

GradCheckReport gradcheck_global_avgpool(uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {5}));
  Tensor input = random_tensor({pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5), pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
  const Tensor r = random_tensor({input.dim(0), input.dim(1)}, rng);
  const Tensor g = global_avgpool_backward(r, input.shape());
  auto objective = [&] { return weighted_sum(global_avgpool_forward(input), r); };
  return check_gradients("global_avgpool", {{"input", &input, &g, {}}}, objective, options);
}

GradCheckReport gradcheck_linear(uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {6}));
  const int64_t N = pick(rng, 1, 4), D = pick(rng, 1, 5), K = pick(rng, 1, 5);
  Tensor input = random_tensor({N, D}, rng);
  Tensor weights = random_tensor({D, K}, rng);
  Tensor bias = random_tensor({K}, rng);
  const Tensor r = random_tensor({N, K}, rng);
  const LinearGrads g = linear_backward(r, input, weights);
  auto objective = [&] { return weighted_sum(linear_forward(input, weights, bias), r); };
  return check_gradients("linear",
                         {{"input", &input, &g.input, {}},
                          {"weights", &weights, &g.weights, {}},
                          {"bias", &bias, &g.bias, {}}},
                         objective, options);
}

GradCheckReport gradcheck_softmax_cross_entropy(uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {7}));
  const int64_t N = pick(rng, 1, 4), K = pick(rng, 2, 5);
  Tensor logits = random_tensor({N, K}, rng, 2.0);
  std::vector<int> labels(static_cast<size_t>(N));
  for (int& l : labels) l = static_cast<int>(rng.uniform_int(0, K - 1));
  const LossResult fwd = softmax_cross_entropy(logits, labels);
  auto objective = [&] { return softmax_cross_entropy(logits, labels).loss; };
  return check_gradients("softmax_cross_entropy", {{"logits", &logits, &fwd.grad_logits, {}}}, objective,
                         options);
}

std::vector<GradCheckReport> gradcheck_all_layers(uint64_t seed, const GradCheckOptions& options) {
  return {gradcheck_conv3d(seed, options),          gradcheck_batchnorm_train(seed, options),
          gradcheck_batchnorm_eval(seed, options),  gradcheck_relu(seed, options),
          gradcheck_maxpool3d(seed, options),       gradcheck_global_avgpool(seed, options),
          gradcheck_linear(seed, options),          gradcheck_softmax_cross_entropy(seed, options)};
}

GradCheckReport gradcheck_puzzle_network(const BackboneConfig& backbone, int64_t head_hidden,
                                         int64_t classes, const Shape& crop_shape, int64_t batch,
                                         int samples, uint64_t seed, const GradCheckOptions& options) {
  Rng rng(derive_seed(seed, {8}));
  const PuzzleNetwork net(backbone, head_hidden, classes);
  NetworkParams params = net.build(rng);
  // Non-trivial affine batch-norm parameters and head biases.
  for (const std::string& name : params.names()) {
    if (name.ends_with(".gamma") || name.ends_with(".beta") || name.ends_with(".bias")) {
      const double base = name.ends_with(".gamma") ? 1.0 : 0.0;
      for (float& v : params.at(name).data()) v = static_cast<float>(base + 0.3 * rng.normal());
    }
  }
  // Larger output weights than the near-zero initialization so that the
  // logits carry gradient signal back into the towers.
  for (float& v : params.at("puzzle.fc2.weight").data()) v = static_cast<float>(0.3 * rng.normal());

  std::array<Tensor, kTupleSize> crops;
  Shape full{batch};
  full.insert(full.end(), crop_shape.begin(), crop_shape.end());
  for (Tensor& c : crops) c = random_tensor(full, rng);
  std::vector<int> labels(static_cast<size_t>(batch));
  for (int& l : labels) l = static_cast<int>(rng.uniform_int(0, classes - 1));

  PuzzleTape tape;
  const Tensor logits = net.forward(params, crops, NormMode::kTrain, &tape);
  const LossResult loss = softmax_cross_entropy(logits, labels);
  Gradients grads;
  net.backward(params, tape, loss.grad_logits, grads);

  // One entry from every tensor, the rest spread by size.
  const std::vector<std::string>& names = params.names();
  std::vector<std::vector<int64_t>> chosen(names.size());
  int64_t total = 0;
  for (const std::string& n : names) total += static_cast<int64_t>(params.at(n).size());
  for (size_t i = 0; i < names.size(); ++i) {
    chosen[i].push_back(rng.uniform_int(0, static_cast<int64_t>(params.at(names[i]).size()) - 1));
  }
  for (int s = static_cast<int>(names.size()); s < samples; ++s) {
    int64_t flat = rng.uniform_int(0, total - 1);
    size_t t = 0;
    while (flat >= static_cast<int64_t>(params.at(names[t]).size())) flat -= static_cast<int64_t>(params.at(names[t++]).size());
    if (std::find(chosen[t].begin(), chosen[t].end(), flat) == chosen[t].end()) {
      chosen[t].push_back(flat);
    } else {
      --s;
    }
  }
  std::vector<CheckedTensor> checked;
  for (size_t i = 0; i < names.size(); ++i) {
    checked.push_back({names[i], &params.at(names[i]), &grads.at(names[i]), chosen[i]});
  }
  auto objective = [&] {
    return softmax_cross_entropy(net.forward(params, crops, NormMode::kTrain, nullptr), labels).loss;
  };
  return check_gradients(std::string("network(") + to_string(backbone.variant) + ")", checked, objective,
                         options);
}

std::vector<GradCheckReport> gradcheck_suite(uint64_t first_seed, int seeds, int network_samples) {
  std::vector<GradCheckReport> out;
  const BackboneConfig tiny = BackboneConfig::make(BackboneVariant::kTiny);
  for (int i = 0; i < seeds; ++i) {
    const uint64_t seed = first_seed + static_cast<uint64_t>(i);
    for (GradCheckReport& r : gradcheck_all_layers(seed, kLayerCheck)) out.push_back(std::move(r));
    out.push_back(gradcheck_puzzle_network(tiny, 64, 48, {3, 4, 20, 20}, 4, network_samples, seed, kNetworkCheck));
  }
  return out;
}

}  // namespace cubic
