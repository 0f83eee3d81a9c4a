#include "diffcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "diffcast/error.hpp"

namespace diffcast {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == shape_size(shape_), ErrorKind::Shape,
          "tensor value count " + std::to_string(values_.size()) + " does not match shape " +
              shape_string(shape_));
}

Tensor Tensor::normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  fill_normal(t.values_, rng);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape_.size(), ErrorKind::Shape,
          "axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }

double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
  return values_[(i * shape_[1] + j) * shape_[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  return values_[(i * shape_[1] + j) * shape_[2] + k];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_size(shape) == values_.size(), ErrorKind::Shape,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require(shape_ == other.shape_, ErrorKind::Shape,
          "add: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require(shape_ == other.shape_, ErrorKind::Shape,
          "subtract: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (auto& v : values_) v *= scale;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::Shape,
          "hadamard: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), ErrorKind::Shape,
          "max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double squared_norm(const Tensor& t) {
  double sum = 0.0;
  for (double v : t.values()) sum += v * v;
  return sum;
}

void require_shape(const Tensor& t, const Shape& expected, const std::string& what) {
  require(t.shape() == expected, ErrorKind::Shape,
          what + ": expected shape " + shape_string(expected) + ", got " + shape_string(t.shape()));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
          ErrorKind::Shape,
          "concat_channels: incompatible " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()));
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), len = a.dim(2);
  Tensor out({batch, ca + cb, len});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data() + n * ca * len, ca * len, out.data() + n * (ca + cb) * len);
    std::copy_n(b.data() + n * cb * len, cb * len, out.data() + (n * (ca + cb) + ca) * len);
  }
  return out;
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count) {
  require(t.rank() == 3 && begin + count <= t.dim(1), ErrorKind::Shape,
          "slice_channels: range out of bounds for " + shape_string(t.shape()));
  const std::size_t batch = t.dim(0), channels = t.dim(1), len = t.dim(2);
  Tensor out({batch, count, len});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(t.data() + (n * channels + begin) * len, count * len, out.data() + n * count * len);
  }
  return out;
}

void set_batch_item(Tensor& batch, std::size_t index, const Tensor& item) {
  require(batch.rank() == item.rank() + 1 && index < batch.dim(0) &&
              shape_size(item.shape()) * batch.dim(0) == batch.size(),
          ErrorKind::Shape,
          "set_batch_item: " + shape_string(item.shape()) + " into " + shape_string(batch.shape()));
  std::copy(item.values().begin(), item.values().end(), batch.data() + index * item.size());
}

Tensor batch_item(const Tensor& batch, std::size_t index) {
  require(batch.rank() >= 2 && index < batch.dim(0), ErrorKind::Shape,
          "batch_item: index out of range for " + shape_string(batch.shape()));
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_size(inner);
  return Tensor(inner, std::vector<double>(batch.data() + index * n, batch.data() + (index + 1) * n));
}

Tensor stack_batch(std::span<const Tensor> items) {
  require(!items.empty(), ErrorKind::Shape, "stack_batch: no items");
  Shape shape{items.size()};
  shape.insert(shape.end(), items.front().shape().begin(), items.front().shape().end());
  Tensor out(shape);
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_shape(items[i], items.front().shape(), "stack_batch item");
    set_batch_item(out, i, items[i]);
  }
  return out;
}

}  // namespace diffcast
