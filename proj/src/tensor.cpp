#include "nascost/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nascost {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

ShapeError::ShapeError(const std::string& op, const std::string& dimension, std::size_t expected,
                       std::size_t actual)
    : std::invalid_argument(op + ": dimension '" + dimension + "' expected " +
                            std::to_string(expected) + ", got " + std::to_string(actual)),
      dimension_(dimension) {}

ShapeError::ShapeError(const std::string& op, const std::string& what)
    : std::invalid_argument(op + ": " + what) {}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("Tensor", "numel", shape_.numel(), data_.size());
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("Tensor::item", "numel", 1, data_.size());
  return data_[0];
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(shape_ == other.shape_)) {
    throw ShapeError("Tensor::operator+=", "shape mismatch " + shape_.str() + " vs " +
                                               other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot", "numel", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double abs_dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("abs_dot", "numel", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return s;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return s;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace nascost
