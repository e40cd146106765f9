#include "robustnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "robustnet/errors.hpp"

namespace robustnet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  }
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  }
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " does not hold " + std::to_string(data_.size()) +
                     " elements");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() needs a matrix, got " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() needs a matrix, got " + shape_to_string(shape_));
  return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NonFiniteError(what + " produced a non-finite value");
}

namespace {

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f) {
  Tensor out(a.shape(), std::vector<double>(a.size()));
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  if (b.rank() == 0) {
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(x[i], y[0]);
  } else if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(x[i], y[i]);
  } else {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  require_finite(out, name);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
  return binary(a, Tensor::scalar(s), "scalar-mul", [](double x, double y) { return x * y; });
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  require_finite(out, "relu");
  return out;
}

Tensor relu_backward(const Tensor& grad, const Tensor& pre_activation) {
  return binary(grad, pre_activation, "relu-backward", [](double g, double z) { return z > 0.0 ? g : 0.0; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::add:
      return add(a, b);
    case ElementwiseOp::sub:
      return sub(a, b);
    case ElementwiseOp::mul:
      return mul(a, b);
    case ElementwiseOp::scalar_mul:
      if (b.rank() != 0) throw ShapeError("scalar-mul expects a scalar right operand");
      return scale(a, b[0]);
    case ElementwiseOp::relu:
      return relu(a);
    case ElementwiseOp::relu_backward:
      return relu_backward(a, b);
  }
  throw InvalidArgument("unknown elementwise op");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: dimension mismatch " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out.at(i, j) = acc;
    }
  }
  require_finite(out, "matmul");
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> x, Norm family) {
  double acc = 0.0;
  switch (family) {
    case Norm::l1:
      for (double v : x) acc += std::abs(v);
      return acc;
    case Norm::l2:
      for (double v : x) acc += v * v;
      return std::sqrt(acc);
    case Norm::linf:
      for (double v : x) acc = std::max(acc, std::abs(v));
      return acc;
  }
  return acc;
}

Tensor sign(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return out;
}

std::size_t argmax_abs(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("argmax_abs of an empty tensor");
  std::size_t best = 0;
  double best_abs = std::abs(x[0]);
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (std::abs(x[i]) > best_abs) {
      best_abs = std::abs(x[i]);
      best = i;
    }
  }
  return best;
}

}  // namespace robustnet
