#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wtpgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input or parameter shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Every element is finite.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> data);
  static Tensor filled(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Small helpers used across attacks and diagnostics.

/// acc += scale * t
void add_scaled(Tensor& acc, const Tensor& t, double scale);
Tensor scaled(const Tensor& t, double scale);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& t);
double linf_norm(const Tensor& t);
double linf_distance(const Tensor& a, const Tensor& b);
double l2_distance(const Tensor& a, const Tensor& b);
double cosine_similarity(const Tensor& a, const Tensor& b);
/// Elementwise sign with sign(0) = 0.
Tensor sign(const Tensor& t);
bool all_finite(std::span<const double> values);
bool in_unit_box(const Tensor& t);
std::size_t argmax(std::span<const double> values);

}  // namespace wtpgd
