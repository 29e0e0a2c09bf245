#include "cubic/params.hpp"

#include <algorithm>
#include <stdexcept>

#include "cubic/errors.hpp"

namespace cubic {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

bool receives_weight_decay(std::string_view name) {
  return !(ends_with(name, ".bias") || ends_with(name, ".gamma") || ends_with(name, ".beta"));
}

void NetworkParams::add(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor momentum = Tensor::zeros_like(value);
  entries_.emplace(name, Entry{std::move(value), std::move(momentum)});
  names_.push_back(name);
}

void NetworkParams::add_norm_stats(const std::string& name, RunningStats stats) {
  if (norm_stats_.count(name)) throw std::invalid_argument("duplicate norm stats name: " + name);
  norm_stats_.emplace(name, std::move(stats));
  norm_names_.push_back(name);
}

bool NetworkParams::contains(std::string_view name) const {
  return entries_.count(std::string(name)) != 0;
}

bool NetworkParams::contains_norm_stats(std::string_view name) const {
  return norm_stats_.count(std::string(name)) != 0;
}

Tensor& NetworkParams::at(std::string_view name) {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second.value;
}

const Tensor& NetworkParams::at(std::string_view name) const {
  return const_cast<NetworkParams*>(this)->at(name);
}

Tensor& NetworkParams::momentum(std::string_view name) {
  auto it = entries_.find(std::string(name));
  if (it == entries_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second.momentum;
}

const Tensor& NetworkParams::momentum(std::string_view name) const {
  return const_cast<NetworkParams*>(this)->momentum(name);
}

RunningStats& NetworkParams::norm_stats(std::string_view name) {
  auto it = norm_stats_.find(std::string(name));
  if (it == norm_stats_.end()) throw std::out_of_range("unknown norm stats: " + std::string(name));
  return it->second;
}

const RunningStats& NetworkParams::norm_stats(std::string_view name) const {
  return const_cast<NetworkParams*>(this)->norm_stats(name);
}

int64_t NetworkParams::parameter_count() const {
  int64_t n = 0;
  for (const auto& [name, e] : entries_) n += static_cast<int64_t>(e.value.size());
  return n;
}

bool NetworkParams::bit_equal(const NetworkParams& other) const {
  if (names_ != other.names_ || norm_names_ != other.norm_names_) return false;
  for (const auto& name : names_) {
    if (!at(name).bit_equal(other.at(name)) || !momentum(name).bit_equal(other.momentum(name))) {
      return false;
    }
  }
  for (const auto& name : norm_names_) {
    const RunningStats& a = norm_stats(name);
    const RunningStats& b = other.norm_stats(name);
    if (a.updates != b.updates || !a.mean.bit_equal(b.mean) || !a.var.bit_equal(b.var)) return false;
  }
  return true;
}

void Gradients::accumulate(const std::string& name, const Tensor& grad) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    grads_.emplace(name, grad);
  } else {
    add_inplace(it->second, grad);
  }
}

bool Gradients::contains(std::string_view name) const { return grads_.find(name) != grads_.end(); }

const Tensor& Gradients::at(std::string_view name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::out_of_range("missing gradient for: " + std::string(name));
  return it->second;
}

Tensor& Gradients::at(std::string_view name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw std::out_of_range("missing gradient for: " + std::string(name));
  return it->second;
}

std::vector<std::string> Gradients::names() const {
  std::vector<std::string> out;
  out.reserve(grads_.size());
  for (const auto& [name, g] : grads_) out.push_back(name);
  return out;
}

void sgd_step(NetworkParams& params, const Gradients& grads, const SgdOptions& options,
              const std::vector<std::string>& frozen) {
  auto is_frozen = [&](const std::string& name) {
    return std::find(frozen.begin(), frozen.end(), name) != frozen.end();
  };
  // Validate everything before touching any tensor.
  for (const auto& name : params.names()) {
    if (is_frozen(name)) continue;
    if (!grads.contains(name)) throw std::out_of_range("sgd_step: missing gradient for " + name);
    if (!grads.at(name).same_shape(params.at(name))) {
      throw ShapeError("sgd_step: gradient shape " + shape_to_string(grads.at(name).shape()) +
                       " does not match parameter " + name + " " +
                       shape_to_string(params.at(name).shape()));
    }
  }
  for (const auto& name : params.names()) {
    if (is_frozen(name)) continue;
    Tensor& p = params.at(name);
    Tensor& v = params.momentum(name);
    const Tensor& g = grads.at(name);
    const float wd = receives_weight_decay(name) ? options.weight_decay : 0.0f;
    float* pv = p.raw();
    float* vv = v.raw();
    const float* gv = g.raw();
    for (size_t i = 0; i < p.size(); ++i) {
      vv[i] = options.momentum * vv[i] + gv[i] + wd * pv[i];
      pv[i] -= options.lr * vv[i];
    }
  }
}

}  // namespace cubic
