#include "robustnet/perturb.hpp"

#include <algorithm>
#include <cmath>

#include "robustnet/errors.hpp"

namespace robustnet {

std::string to_string(PerturbFamily family) {
  switch (family) {
    case PerturbFamily::linf:
      return "linf";
    case PerturbFamily::l2:
      return "l2";
    case PerturbFamily::l1:
      return "l1";
    case PerturbFamily::tangent:
      return "tangent";
  }
  return "unknown";
}

PerturbFamily parse_family(std::string_view name) {
  if (name == "linf") return PerturbFamily::linf;
  if (name == "l2") return PerturbFamily::l2;
  if (name == "l1") return PerturbFamily::l1;
  if (name == "tangent") return PerturbFamily::tangent;
  throw InvalidArgument("unknown norm '" + std::string(name) + "' (valid: l1, l2, linf, tangent)");
}

PerturbFamily family_from_code(std::uint8_t code) {
  if (code > 3) throw InvalidArgument("unknown perturbation family code " + std::to_string(code));
  return static_cast<PerturbFamily>(code);
}

void UncertaintySpec::validate() const {
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw InvalidArgument("uncertainty radius must be >= 0");
  if (!(lo < hi)) throw InvalidArgument("box bounds need lo < hi");
}

TangentBasis::TangentBasis(const Tensor& matrix, double tolerance) : dim_(matrix.rows()) {
  const std::size_t k = matrix.cols();
  columns_.assign(k, std::vector<double>(dim_));
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t j = 0; j < k; ++j) columns_[j][i] = matrix.at(i, j);
  check_orthonormal(tolerance);
}

TangentBasis::TangentBasis(std::size_t dim, std::vector<std::vector<double>> columns, double tolerance)
    : dim_(dim), columns_(std::move(columns)) {
  for (const auto& c : columns_) {
    if (c.size() != dim_) throw ShapeError("tangent basis column has the wrong dimension");
  }
  check_orthonormal(tolerance);
}

void TangentBasis::check_orthonormal(double tolerance) const {
  for (std::size_t a = 0; a < columns_.size(); ++a) {
    for (std::size_t b = a; b < columns_.size(); ++b) {
      double g = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) g += columns_[a][i] * columns_[b][i];
      const double want = a == b ? 1.0 : 0.0;
      if (!(std::abs(g - want) <= tolerance)) {
        throw InvalidArgument("tangent basis is not orthonormal (column " + std::to_string(a) + " vs " +
                              std::to_string(b) + ")");
      }
    }
  }
}

namespace {

void check_radius(double r, const char* what) {
  if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidArgument(std::string(what) + ": radius must be >= 0");
}

}  // namespace

Tensor steepest_ascent_linf(const Tensor& grad, double eps) {
  check_radius(eps, "steepest_ascent_linf");
  Tensor out = sign(grad);
  for (auto& v : out.data()) v *= eps;
  return out;
}

Tensor steepest_ascent_l2(const Tensor& grad, double r) {
  check_radius(r, "steepest_ascent_l2");
  Tensor out = Tensor::zeros_like(grad);
  const double n = norm(grad, Norm::l2);
  if (n == 0.0) return out;
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = r * (grad[i] / n);
  return out;
}

Tensor steepest_ascent_l1(const Tensor& grad, double r) {
  check_radius(r, "steepest_ascent_l1");
  Tensor out = Tensor::zeros_like(grad);
  const std::size_t j = argmax_abs(grad);
  if (grad[j] > 0.0) {
    out[j] = r;
  } else if (grad[j] < 0.0) {
    out[j] = -r;
  }
  return out;
}

Tensor tangent_projected_step(const Tensor& grad, const TangentBasis& basis, double r) {
  check_radius(r, "tangent_projected_step");
  if (basis.dim() != grad.size()) {
    throw ShapeError("tangent basis dimension " + std::to_string(basis.dim()) + " does not match gradient size " +
                     std::to_string(grad.size()));
  }
  Tensor p = Tensor::zeros_like(grad);
  for (std::size_t j = 0; j < basis.rank(); ++j) {
    const auto b = basis.column(j);
    double c = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) c += b[i] * grad[i];
    for (std::size_t i = 0; i < b.size(); ++i) p[i] += c * b[i];
  }
  return steepest_ascent_l2(p, r);
}

Tensor steepest_ascent(const Tensor& grad, const UncertaintySpec& spec, const TangentBasis* basis) {
  switch (spec.family) {
    case PerturbFamily::linf:
      return steepest_ascent_linf(grad, spec.radius);
    case PerturbFamily::l2:
      return steepest_ascent_l2(grad, spec.radius);
    case PerturbFamily::l1:
      return steepest_ascent_l1(grad, spec.radius);
    case PerturbFamily::tangent:
      if (!basis) throw InvalidArgument("tangent family needs a tangent basis");
      return tangent_projected_step(grad, *basis, spec.radius);
  }
  throw InvalidArgument("unknown perturbation family");
}

Tensor box_clip(const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw InvalidArgument("box_clip needs lo < hi");
  Tensor out = x;
  for (auto& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

std::vector<Example> perturb_with_gradients(std::span<const Example> batch, std::span<const Tensor> input_grads,
                                            const UncertaintySpec& spec, const BasisProvider* basis_provider,
                                            std::span<const std::size_t> indices) {
  spec.validate();
  if (batch.size() != input_grads.size()) throw ShapeError("one input gradient per example is required");
  const bool tangent = spec.family == PerturbFamily::tangent;
  if (tangent && !basis_provider) throw InvalidArgument("tangent family needs a basis provider");
  if (!tangent && basis_provider) throw InvalidArgument("a basis provider is only meaningful for the tangent family");
  if (!indices.empty() && indices.size() != batch.size()) throw ShapeError("one index per example is required");

  std::vector<Example> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor delta;
    if (tangent) {
      const TangentBasis basis = (*basis_provider)(indices.empty() ? i : indices[i], batch[i].x);
      delta = steepest_ascent(input_grads[i], spec, &basis);
    } else {
      delta = steepest_ascent(input_grads[i], spec);
    }
    Tensor x = batch[i].x;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += delta[k];
    if (spec.clip_to_box) x = box_clip(x, spec.lo, spec.hi);
    out.push_back(Example{std::move(x), batch[i].y});
  }
  return out;
}

std::vector<Example> perturb_batch(const NetworkParams& params, std::span<const Example> batch,
                                   const UncertaintySpec& spec, const BasisProvider* basis_provider,
                                   std::size_t workers) {
  spec.validate();
  if (batch.empty()) return {};
  const auto grads = batch_loss_and_grads(params, batch, workers, GradientRequest::input_only);
  return perturb_with_gradients(batch, grads.input_grads, spec, basis_provider);
}

TangentBasis translation_tangent_basis(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("translation tangents need a {channels, height, width} image");
  const std::size_t C = image.shape()[0], H = image.shape()[1], W = image.shape()[2];
  auto px = [&](std::size_t c, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(H) || x >= static_cast<std::ptrdiff_t>(W)) return 0.0;
    return image[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
  };
  std::vector<double> dx(image.size()), dy(image.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const auto yi = static_cast<std::ptrdiff_t>(y), xi = static_cast<std::ptrdiff_t>(x);
        const std::size_t k = (c * H + y) * W + x;
        dx[k] = 0.5 * (px(c, yi, xi + 1) - px(c, yi, xi - 1));
        dy[k] = 0.5 * (px(c, yi + 1, xi) - px(c, yi - 1, xi));
      }
    }
  }
  // Gram-Schmidt, run twice for orthogonality to working precision.
  std::vector<std::vector<double>> basis;
  for (auto* v : {&dx, &dy}) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double c = 0.0;
        for (std::size_t i = 0; i < v->size(); ++i) c += b[i] * (*v)[i];
        for (std::size_t i = 0; i < v->size(); ++i) (*v)[i] -= c * b[i];
      }
    }
    const double n = norm(*v, Norm::l2);
    if (n < 1e-12) continue;
    for (auto& e : *v) e /= n;
    basis.push_back(*v);
  }
  return TangentBasis(image.size(), std::move(basis));
}

}  // namespace robustnet
