#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nascost {

/// Dense (batch, channel, height, width) extent. Matrices and vectors are
/// stored with trailing unit dimensions, e.g. logits are (B, N, 1, 1).
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t spatial() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const;
};

/// Raised when operand extents disagree. The message names the offending
/// dimension so that callers do not have to re-derive it.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const std::string& dimension, std::size_t expected,
             std::size_t actual);
  ShapeError(const std::string& op, const std::string& what);

  const std::string& dimension() const { return dimension_; }

 private:
  std::string dimension_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return ((b * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  double& at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(b, c, y, x)];
  }
  double at(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(b, c, y, x)];
  }

  /// Scalar value of a one-element tensor.
  double item() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Full contraction sum_i a_i * b_i.
double dot(const Tensor& a, const Tensor& b);
/// sum_i |a_i * b_i|, the magnitude against which a cancelling contraction
/// is judged.
double abs_dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double max_abs(const Tensor& a);
double l2_norm(const Tensor& a);

}  // namespace nascost
