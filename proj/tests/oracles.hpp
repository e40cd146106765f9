#pragma once

// Slow, loop-by-loop reference implementations used to check the library.
// Nothing here calls into the code it is meant to check, except where noted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "robustnet/nn.hpp"
#include "robustnet/tensor.hpp"

namespace oracle {

using robustnet::Tensor;

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

struct Image {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t ci, std::size_t y, std::size_t x) const { return v[(ci * h + y) * w + x]; }
};

inline Image conv2d(const Image& in, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  const std::size_t oc = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
  Image out{oc, (in.h - kh) / stride + 1, (in.w - kw) / stride + 1, {}};
  out.v.assign(out.c * out.h * out.w, 0.0);
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t x = 0; x < out.w; ++x) {
        double acc = bias[o];
        for (std::size_t i = 0; i < in.c; ++i)
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx)
              acc += weight[((o * in.c + i) * kh + dy) * kw + dx] * in.at(i, y * stride + dy, x * stride + dx);
        out.v[(o * out.h + y) * out.w + x] = acc;
      }
  return out;
}

inline Image maxpool(const Image& in, std::size_t wh, std::size_t ww, std::size_t stride) {
  Image out{in.c, (in.h - wh) / stride + 1, (in.w - ww) / stride + 1, {}};
  out.v.assign(out.c * out.h * out.w, 0.0);
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < out.h; ++y)
      for (std::size_t x = 0; x < out.w; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < wh; ++dy)
          for (std::size_t dx = 0; dx < ww; ++dx) best = std::max(best, in.at(c, y * stride + dy, x * stride + dx));
        out.v[(c * out.h + y) * out.w + x] = best;
      }
  return out;
}

/// Logits of the network, computed layer by layer with the loops above.
inline std::vector<double> logits(const robustnet::NetworkParams& params, const Tensor& x) {
  const auto& arch = params.architecture;
  Image cur;
  if (arch.input_shape.size() == 3) {
    cur = {arch.input_shape[0], arch.input_shape[1], arch.input_shape[2], x.values()};
  } else {
    cur = {1, 1, x.size(), x.values()};
  }
  std::size_t t = 0;
  for (const auto& layer : arch.layers) {
    using robustnet::LayerKind;
    switch (layer.kind) {
      case LayerKind::dense: {
        const Tensor& w = params.tensors[t];
        const Tensor& b = params.tensors[t + 1];
        t += 2;
        auto y = matmul(w.values(), cur.v, layer.out_dim, layer.in_dim, 1);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
        cur = {1, 1, y.size(), y};
        break;
      }
      case LayerKind::conv2d:
        cur = conv2d(cur, params.tensors[t], params.tensors[t + 1], layer.stride);
        t += 2;
        break;
      case LayerKind::maxpool:
        cur = maxpool(cur, layer.kernel_h, layer.kernel_w, layer.stride == 0 ? layer.kernel_h : layer.stride);
        break;
      case LayerKind::relu:
        for (auto& v : cur.v) v = v > 0.0 ? v : 0.0;
        break;
    }
  }
  return cur.v;
}

/// Softmax cross-entropy via log-sum-exp.
inline double loss(const robustnet::NetworkParams& params, const Tensor& x, std::size_t y) {
  const auto z = logits(params, x);
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - zmax);
  return zmax + std::log(s) - z[y];
}

/// Central difference of `f` along coordinate `k` of `v` (restored afterwards).
template <class F>
double central_difference(std::vector<double>& v, std::size_t k, double h, F&& f) {
  const double keep = v[k];
  v[k] = keep + h;
  const double up = f();
  v[k] = keep - h;
  const double down = f();
  v[k] = keep;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)});
}

/// max <g, v> over the 2^d vertices v in {-eps, eps}^d.
inline double max_gain_linf(const std::vector<double>& g, double eps) {
  const std::size_t d = g.size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += g[i] * ((mask >> i) & 1U ? eps : -eps);
    best = std::max(best, s);
  }
  return best;
}

/// max <g, v> over the 2d signed-coordinate vertices +-r e_i.
inline double max_gain_l1(const std::vector<double>& g, double r) {
  double best = -std::numeric_limits<double>::infinity();
  for (double gi : g) best = std::max({best, r * gi, -r * gi});
  return best;
}

inline double max_gain_l2(const std::vector<double>& g, double r) {
  double s = 0.0;
  for (double gi : g) s += gi * gi;
  return r * std::sqrt(s);
}

inline double inner(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Tensor random_tensor(const robustnet::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace oracle
