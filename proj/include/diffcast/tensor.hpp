#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "diffcast/rng.hpp"

namespace diffcast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank is whatever the shape says; the
/// network code uses (channels, length) for single windows and
/// (batch, channels, length) for batches.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor like(const Tensor& other, double fill = 0.0) { return Tensor(other.shape_, fill); }
  static Tensor normal(Shape shape, Rng& rng);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  /// Same values under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  bool all_finite() const noexcept;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& t);

void require_shape(const Tensor& t, const Shape& expected, const std::string& what);

// Channel-axis helpers for (batch, channels, length) tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count);

/// Adds a single-window (channels, length) tensor as row `index` of a batch.
void set_batch_item(Tensor& batch, std::size_t index, const Tensor& item);
Tensor batch_item(const Tensor& batch, std::size_t index);
Tensor stack_batch(std::span<const Tensor> items);

}  // namespace diffcast
