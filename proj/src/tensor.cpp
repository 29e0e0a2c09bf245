#include "cubic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "cubic/errors.hpp"

namespace cubic {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] < 1) {
      throw ShapeError("tensor extent " + std::to_string(i) + " must be >= 1, got shape " +
                       shape_to_string(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  validate_shape(shape_);
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
    throw ShapeError("tensor of shape " + shape_to_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

int64_t Tensor::dim(size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape_));
  }
  return shape_[axis];
}

size_t Tensor::offset(std::initializer_list<int64_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " does not match shape " +
                     shape_to_string(shape_));
  }
  size_t off = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape_[axis]) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of shape " + shape_to_string(shape_));
    }
    off = off * static_cast<size_t>(shape_[axis]) + static_cast<size_t>(i);
    ++axis;
  }
  return off;
}

float& Tensor::at(std::initializer_list<int64_t> index) { return data_[offset(index)]; }
float Tensor::at(std::initializer_list<int64_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_batch(int64_t begin, int64_t end) const {
  if (shape_.empty() || begin < 0 || end > shape_[0] || begin >= end) {
    throw ShapeError("invalid batch slice [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") of shape " + shape_to_string(shape_));
  }
  const size_t row = data_.size() / static_cast<size_t>(shape_[0]);
  Shape s = shape_;
  s[0] = end - begin;
  std::vector<float> values(data_.begin() + static_cast<ptrdiff_t>(begin * row),
                            data_.begin() + static_cast<ptrdiff_t>(end * row));
  return Tensor(std::move(s), std::move(values));
}

bool Tensor::bit_equal(const Tensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_batch needs at least one tensor");
  Shape shape = parts[0].shape();
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat_batch: shape " + shape_to_string(p.shape()) +
                       " incompatible with " + shape_to_string(shape));
    }
    total += p.dim(0);
  }
  shape[0] = total;
  std::vector<float> values;
  values.reserve(static_cast<size_t>(shape_numel(shape)));
  for (const Tensor& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  return Tensor(std::move(shape), std::move(values));
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) {
    throw ShapeError("add: shape " + shape_to_string(src.shape()) + " vs " +
                     shape_to_string(dst.shape()));
  }
  float* d = dst.raw();
  const float* s = src.raw();
  for (size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void scale_inplace(Tensor& dst, float factor) {
  for (float& v : dst.data()) v *= factor;
}

double sum(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += v;
  return acc;
}

float max_abs(const Tensor& t) {
  float m = 0.0f;
  for (float v : t.data()) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace cubic
