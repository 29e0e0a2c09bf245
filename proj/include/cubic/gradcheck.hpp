#pragma once

// Central finite-difference checks of the analytic backward passes.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cubic/network.hpp"
#include "cubic/tensor.hpp"

namespace cubic {

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  // Entries of the error denominator below this floor are raised to it, so
  // that gradients near zero are compared absolutely.
  double denominator_floor = 1.0;
};

struct GradCheckReport {
  std::string name;
  int64_t checked = 0;
  int64_t failed = 0;
  double max_error = 0.0;
  std::string worst;  // "<tensor>[<index>] analytic=... numeric=..."

  bool passed() const { return checked > 0 && failed == 0; }
};

// |a - n| / max(|a|, |n|, floor)
double gradient_error(double analytic, double numeric, double floor);

struct CheckedTensor {
  std::string name;
  Tensor* value;          // perturbed in place and restored
  const Tensor* analytic; // same shape as *value
  // Flat indices to check; empty means every element.
  std::vector<int64_t> indices;
};

// Compares analytic gradients against (f(x+h) - f(x-h)) / 2h of `objective`.
GradCheckReport check_gradients(const std::string& name, const std::vector<CheckedTensor>& tensors,
                                const std::function<double()>& objective, const GradCheckOptions& options);

// One randomized check per layer kind with small extents (<= 5). The seed
// drives shapes, hyper-parameters and values.
GradCheckReport gradcheck_conv3d(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_batchnorm_train(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_batchnorm_eval(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_relu(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_maxpool3d(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_global_avgpool(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_linear(uint64_t seed, const GradCheckOptions& options = {});
GradCheckReport gradcheck_softmax_cross_entropy(uint64_t seed, const GradCheckOptions& options = {});

std::vector<GradCheckReport> gradcheck_all_layers(uint64_t seed, const GradCheckOptions& options = {});

// Whole 4-tower puzzle network (train-mode batch norm) with cross-entropy
// loss; checks `samples` parameter entries drawn across all tensors.
GradCheckReport gradcheck_puzzle_network(const BackboneConfig& backbone, int64_t head_hidden,
                                         int64_t classes, const Shape& crop_shape, int64_t batch,
                                         int samples, uint64_t seed, const GradCheckOptions& options);

// Layer checks use a wider step than the network check: single-layer
// objectives are smooth, while the network contains many ReLU kinks.
inline constexpr GradCheckOptions kLayerCheck{1e-2, 1e-3, 1.0};
inline constexpr GradCheckOptions kNetworkCheck{1e-3, 1e-2, 1.0};

// Every layer check plus the tiny puzzle network ([3,4,20,20] crops, batch 4,
// 48 classes) for seeds first_seed .. first_seed + seeds - 1.
std::vector<GradCheckReport> gradcheck_suite(uint64_t first_seed, int seeds, int network_samples);

}  // namespace cubic
