#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cubic {

using Shape = std::vector<int64_t>;

std::string shape_to_string(const Shape& shape);
int64_t shape_numel(const Shape& shape);

/// Dense row-major float32 array.
///
/// A default-constructed tensor is empty (rank 0, no storage) and is used as
/// an "absent" marker, e.g. for a convolution without bias. Every non-empty
/// tensor has extents >= 1 and exactly product(shape) elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, 0.0f); }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  int64_t dim(size_t axis) const;
  size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& operator[](size_t i) { return data_[i]; }
  float operator[](size_t i) const { return data_[i]; }

  // Multi-index access; the index count must equal rank().
  float& at(std::initializer_list<int64_t> index);
  float at(std::initializer_list<int64_t> index) const;

  // Same storage contents under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  // Slice [begin, end) along axis 0.
  Tensor slice_batch(int64_t begin, int64_t end) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  // Bitwise equality of shape and values.
  bool bit_equal(const Tensor& other) const;

 private:
  size_t offset(std::initializer_list<int64_t> index) const;

  Shape shape_;
  std::vector<float> data_;
};

// Concatenate along axis 0. All parts must agree on the trailing extents.
Tensor concat_batch(std::span<const Tensor> parts);

// Elementwise helpers used by the trainer and tests.
void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& dst, float factor);
double sum(const Tensor& t);
float max_abs(const Tensor& t);

}  // namespace cubic
