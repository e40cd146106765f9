#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "robustnet/nn.hpp"
#include "robustnet/tensor.hpp"

namespace robustnet {

/// Shape of the uncertainty set around each example. The numeric codes are
/// the ones written to adversarial-set files.
enum class PerturbFamily : std::uint8_t { linf = 0, l2 = 1, l1 = 2, tangent = 3 };

std::string to_string(PerturbFamily family);
/// Accepts "linf", "l2", "l1", "tangent"; anything else throws InvalidArgument
/// listing the valid names.
PerturbFamily parse_family(std::string_view name);
PerturbFamily family_from_code(std::uint8_t code);

/// A norm ball of `radius` around each input, optionally intersected with the
/// data box [lo, hi]^d. Radius 0 is accepted here and yields no perturbation.
struct UncertaintySpec {
  PerturbFamily family = PerturbFamily::linf;
  double radius = 0.1;
  bool clip_to_box = true;
  double lo = 0.0;
  double hi = 1.0;

  void validate() const;

  friend bool operator==(const UncertaintySpec&, const UncertaintySpec&) = default;
};

/// Orthonormal basis of a tangent subspace in R^dim. May be empty (rank 0).
class TangentBasis {
 public:
  /// `matrix` is [dim, k]; its columns must be orthonormal within `tolerance`.
  explicit TangentBasis(const Tensor& matrix, double tolerance = 1e-8);
  TangentBasis(std::size_t dim, std::vector<std::vector<double>> columns, double tolerance = 1e-8);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rank() const noexcept { return columns_.size(); }
  std::span<const double> column(std::size_t j) const { return columns_[j]; }

 private:
  void check_orthonormal(double tolerance) const;

  std::size_t dim_;
  std::vector<std::vector<double>> columns_;
};

/// Supplies the tangent basis for example `index` with input `x`.
using BasisProvider = std::function<TangentBasis(std::size_t index, const Tensor& x)>;

/// eps * sign(grad): the fast gradient sign step.
Tensor steepest_ascent_linf(const Tensor& grad, double eps);
/// r * grad / ||grad||_2, or zero when grad is zero.
Tensor steepest_ascent_l2(const Tensor& grad, double r);
/// r * sign(grad_j) * e_j at the largest-magnitude coordinate j; a single-pixel change.
Tensor steepest_ascent_l1(const Tensor& grad, double r);
/// l2 step restricted to span(basis): r * P grad / ||P grad||_2 with P = B B^T.
Tensor tangent_projected_step(const Tensor& grad, const TangentBasis& basis, double r);

/// Dispatches on spec.family. `basis` is required for the tangent family.
Tensor steepest_ascent(const Tensor& grad, const UncertaintySpec& spec, const TangentBasis* basis = nullptr);

Tensor box_clip(const Tensor& x, double lo, double hi);

/// One first-order ascent step per example at the current parameters:
/// x_i + step(grad_x J(params, x_i, y_i)), clipped to the box if requested.
/// Labels are kept and the input batch is not modified.
std::vector<Example> perturb_batch(const NetworkParams& params, std::span<const Example> batch,
                                   const UncertaintySpec& spec, const BasisProvider* basis_provider = nullptr,
                                   std::size_t workers = 1);

/// Same as perturb_batch but with input gradients already computed. The basis
/// provider sees `indices[i]` for example i, or i itself when `indices` is empty.
std::vector<Example> perturb_with_gradients(std::span<const Example> batch, std::span<const Tensor> input_grads,
                                            const UncertaintySpec& spec, const BasisProvider* basis_provider = nullptr,
                                            std::span<const std::size_t> indices = {});

/// Orthonormalized horizontal and vertical translation tangents of an image
/// {channels, height, width} (central differences, zero outside the image).
/// Directions with no signal are dropped, so the rank may be 0, 1 or 2.
TangentBasis translation_tangent_basis(const Tensor& image);

}  // namespace robustnet
