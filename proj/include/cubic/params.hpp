#pragma once

#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cubic/ops.hpp"
#include "cubic/tensor.hpp"

namespace cubic {

// True for tensors that receive weight decay. Biases and batch-norm affine
// parameters (".bias", ".gamma", ".beta") are exempt.
bool receives_weight_decay(std::string_view name);

/// Ordered collection of named trainable tensors, each paired with a momentum
/// buffer, plus named batch-norm running statistics.
///
/// Insertion order is the canonical order used for serialization and for the
/// optimizer sweep.
class NetworkParams {
 public:
  void add(const std::string& name, Tensor value);
  void add_norm_stats(const std::string& name, RunningStats stats);

  bool contains(std::string_view name) const;
  bool contains_norm_stats(std::string_view name) const;

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  Tensor& momentum(std::string_view name);
  const Tensor& momentum(std::string_view name) const;

  RunningStats& norm_stats(std::string_view name);
  const RunningStats& norm_stats(std::string_view name) const;

  const std::vector<std::string>& names() const { return names_; }
  const std::vector<std::string>& norm_names() const { return norm_names_; }

  int64_t parameter_count() const;

  // Bitwise equality of all parameters, momenta and running statistics.
  bool bit_equal(const NetworkParams& other) const;

 private:
  struct Entry {
    Tensor value;
    Tensor momentum;
  };

  std::vector<std::string> names_;
  std::unordered_map<std::string, Entry> entries_;
  std::vector<std::string> norm_names_;
  std::unordered_map<std::string, RunningStats> norm_stats_;
};

// Gradients keyed by parameter name. std::map keeps iteration deterministic.
class Gradients {
 public:
  // Adds into an existing entry or inserts a copy.
  void accumulate(const std::string& name, const Tensor& grad);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  size_t size() const { return grads_.size(); }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Tensor, std::less<>> grads_;
};

struct SgdOptions {
  float lr = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
};

// v <- momentum*v + grad + wd*param;  param <- param - lr*v
//
// Every parameter must have a gradient unless it is listed in `frozen`;
// frozen parameters and their momenta are left untouched.
void sgd_step(NetworkParams& params, const Gradients& grads, const SgdOptions& options,
              const std::vector<std::string>& frozen = {});

}  // namespace cubic
