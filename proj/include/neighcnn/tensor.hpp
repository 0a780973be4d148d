#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace neighcnn {

// Extents of a dense tensor. Rank 0 is a scalar; the largest rank used by the
// library is 4 with the batch x channel x height x width convention.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_[axis]; }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

// Dense row-major array of doubles. A plain value type: copies are deep.
class Tensor {
 public:
  // Rank-0 tensor holding 0.
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // 4-D element access (b, c, y, x).
  double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  // Value of a single-element tensor.
  double item() const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws NumericError naming `what` if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

// Throws ShapeError unless the shapes are equal.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

// Stacks equally shaped [1,C,H,W] tensors along the batch axis.
Tensor stack_batch(std::span<const Tensor> items);

// Slice `index` of the batch axis as a [1,C,H,W] tensor.
Tensor batch_item(const Tensor& batch, std::size_t index);

// Elementwise clamp into [lo, hi].
Tensor clamp(const Tensor& t, double lo, double hi);

// Pairwise (cascade) summation over a contiguous range; fixed order for a
// given length, so results are bit-reproducible.
double pairwise_sum(std::span<const double> values);

}  // namespace neighcnn
