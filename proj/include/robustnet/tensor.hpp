#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace robustnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds a
/// single scalar.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class ElementwiseOp { add, sub, mul, scalar_mul, relu, relu_backward };

/// Generic entry point. `b` must match `a`'s shape or be a scalar; it is
/// ignored by `relu`. For `relu_backward`, `a` is the incoming gradient and
/// `b` the pre-activation input.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor relu_backward(const Tensor& grad, const Tensor& pre_activation);

/// Matrix product with ascending-index accumulation.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);

enum class Norm { l1, l2, linf };

double norm(std::span<const double> x, Norm family);
inline double norm(const Tensor& x, Norm family) { return norm(x.data(), family); }

/// -1, 0 or +1 per element; sign(0) is 0.
Tensor sign(const Tensor& x);
/// Lowest flat index attaining the largest magnitude.
std::size_t argmax_abs(std::span<const double> x);
inline std::size_t argmax_abs(const Tensor& x) { return argmax_abs(x.data()); }

/// Throws NonFiniteError naming `what` if any element is NaN or infinite.
void require_finite(const Tensor& t, const std::string& what);

}  // namespace robustnet
