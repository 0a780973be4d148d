#include "neighcnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "neighcnn/error.hpp"

namespace neighcnn {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() > Shape::kMaxRank) {
    throw ShapeError("tensor rank " + std::to_string(dims.size()) + " exceeds 4");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor extents must be positive");
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate_dims(dims_); }

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor of shape " + shape_.str() + " needs " +
                     std::to_string(shape_.numel()) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_.str());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + what);
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  const Shape& first = items.front().shape();
  if (first.rank() != 4 || first[0] != 1) {
    throw ShapeError("stack_batch: items must be [1,C,H,W], got " + first.str());
  }
  Tensor out(Shape{items.size(), first[1], first[2], first[3]});
  const std::size_t stride = first.numel();
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(items[i].shape(), first, "stack_batch");
    std::copy(items[i].data().begin(), items[i].data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

Tensor batch_item(const Tensor& batch, std::size_t index) {
  const Shape& s = batch.shape();
  if (s.rank() != 4 || index >= s[0]) {
    throw ShapeError("batch_item: index out of range for " + s.str());
  }
  Tensor out(Shape{1, s[1], s[2], s[3]});
  const std::size_t stride = s[1] * s[2] * s[3];
  auto begin = batch.data().begin() + static_cast<std::ptrdiff_t>(index * stride);
  std::copy(begin, begin + static_cast<std::ptrdiff_t>(stride), out.data().begin());
  return out;
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  Tensor out = t;
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 128;
  if (values.size() <= kBlock) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace neighcnn
