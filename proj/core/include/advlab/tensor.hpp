#pragma once

#include <cstddef>
#include <vector>

namespace advlab {

/// Dense row-major tensor of doubles with an explicit shape.
///
/// Values are plain doubles and the layout is flat row-major; there is no
/// broadcasting. Elementwise operators require identical shapes and throw
/// std::invalid_argument otherwise. Images and gradients are rank-3
/// (channel, row, col) tensors with pixel values in [0, 1].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor full(std::vector<int> shape, double value);
  static Tensor zeros_like(const Tensor& other);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 (channel, row, col) access; bounds are the caller's problem.
  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double min_value() const;
  double max_value() const;

  /// Flattens to rank-1 without copying the payload.
  Tensor reshaped(std::vector<int> new_shape) const;

  Tensor& operator+=(const Tensor& rhs);
  Tensor& operator-=(const Tensor& rhs);
  Tensor& operator*=(double s);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor lhs, const Tensor& rhs);
Tensor operator-(Tensor lhs, const Tensor& rhs);
Tensor operator*(Tensor t, double s);
Tensor operator*(double s, Tensor t);

/// Largest absolute elementwise difference; shapes must match.
double linf_distance(const Tensor& a, const Tensor& b);

/// True when every element compares exactly equal (bitwise up to +/-0).
bool exactly_equal(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace advlab
