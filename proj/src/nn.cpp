#include "robustnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "robustnet/errors.hpp"
#include "robustnet/parallel.hpp"

namespace robustnet {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense:
      return "dense";
    case LayerKind::conv2d:
      return "conv2d";
    case LayerKind::maxpool:
      return "maxpool";
    case LayerKind::relu:
      return "relu";
  }
  return "unknown";
}

LayerSpec LayerSpec::dense(std::size_t in_dim, std::size_t out_dim) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                            std::size_t kernel_w, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::maxpool(std::size_t window_h, std::size_t window_w, std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.kernel_h = window_h;
  s.kernel_w = window_w;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

namespace {

// Pool strides of 0 mean "equal to the window" in each direction.
std::size_t pool_stride_h(const LayerSpec& s) { return s.stride ? s.stride : s.kernel_h; }
std::size_t pool_stride_w(const LayerSpec& s) { return s.stride ? s.stride : s.kernel_w; }

[[noreturn]] void incompatible(std::size_t layer, const std::string& why) {
  throw InvalidArgument("layer " + std::to_string(layer) + ": " + why);
}

}  // namespace

std::vector<Shape> Architecture::layer_output_shapes() const {
  if (layers.empty()) throw InvalidArgument("architecture has no layers");
  if (input_shape.empty()) throw InvalidArgument("architecture has no input shape");
  for (auto d : input_shape) {
    if (d == 0) throw InvalidArgument("input dimensions must be positive");
  }
  std::vector<Shape> shapes;
  Shape current = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::dense:
        if (l.in_dim == 0 || l.out_dim == 0) incompatible(i, "dense sizes must be positive");
        if (shape_size(current) != l.in_dim) {
          incompatible(i, "dense expects " + std::to_string(l.in_dim) + " inputs, got " + shape_to_string(current));
        }
        current = {l.out_dim};
        break;
      case LayerKind::conv2d: {
        if (l.in_channels == 0 || l.out_channels == 0 || l.kernel_h == 0 || l.kernel_w == 0 || l.stride == 0) {
          incompatible(i, "conv2d sizes must be positive");
        }
        if (current.size() != 3 || current[0] != l.in_channels) {
          incompatible(i, "conv2d expects " + std::to_string(l.in_channels) + " input channels, got " +
                              shape_to_string(current));
        }
        if (current[1] < l.kernel_h || current[2] < l.kernel_w) incompatible(i, "conv2d kernel larger than input");
        current = {l.out_channels, (current[1] - l.kernel_h) / l.stride + 1, (current[2] - l.kernel_w) / l.stride + 1};
        break;
      }
      case LayerKind::maxpool: {
        if (l.kernel_h == 0 || l.kernel_w == 0) incompatible(i, "maxpool window must be positive");
        if (current.size() != 3) incompatible(i, "maxpool expects a {channels, height, width} input");
        if (current[1] < l.kernel_h || current[2] < l.kernel_w) incompatible(i, "maxpool window larger than input");
        current = {current[0], (current[1] - l.kernel_h) / pool_stride_h(l) + 1,
                   (current[2] - l.kernel_w) / pool_stride_w(l) + 1};
        break;
      }
      case LayerKind::relu:
        break;
    }
    shapes.push_back(current);
  }
  if (shapes.back().size() != 1) throw InvalidArgument("the last layer must produce a flat vector of class scores");
  return shapes;
}

std::size_t Architecture::num_classes() const { return layer_output_shapes().back()[0]; }

Architecture desk_mnist_architecture() {
  return Architecture{{1, 28, 28},
                      {LayerSpec::conv2d(1, 8, 5, 5), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                       LayerSpec::conv2d(8, 16, 5, 5), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                       LayerSpec::dense(256, 64), LayerSpec::relu(), LayerSpec::dense(64, 10)}};
}

Architecture paper_mnist_architecture() {
  return Architecture{{1, 28, 28},
                      {LayerSpec::conv2d(1, 32, 5, 5), LayerSpec::relu(), LayerSpec::maxpool(3, 3),
                       LayerSpec::conv2d(32, 64, 5, 5), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                       LayerSpec::dense(256, 200), LayerSpec::relu(), LayerSpec::dense(200, 10)}};
}

Architecture linear_architecture(std::size_t dim, std::size_t classes) {
  return Architecture{{dim}, {LayerSpec::dense(dim, classes)}};
}

Architecture mlp_architecture(std::size_t dim, std::size_t hidden, std::size_t classes) {
  return Architecture{{dim}, {LayerSpec::dense(dim, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, classes)}};
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::vector<double> NetworkParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& t : tensors) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

std::vector<Tensor> zero_param_tensors(const Architecture& arch) {
  arch.layer_output_shapes();
  std::vector<Tensor> out;
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::dense) {
      out.emplace_back(Shape{l.out_dim, l.in_dim});
      out.emplace_back(Shape{l.out_dim});
    } else if (l.kind == LayerKind::conv2d) {
      out.emplace_back(Shape{l.out_channels, l.in_channels, l.kernel_h, l.kernel_w});
      out.emplace_back(Shape{l.out_channels});
    }
  }
  return out;
}

NetworkParams init_params(const Architecture& arch, std::uint64_t seed) {
  NetworkParams params{arch, zero_param_tensors(arch)};
  std::mt19937_64 rng(seed);
  std::size_t t = 0;
  for (const auto& l : arch.layers) {
    if (!l.has_params()) continue;
    auto& w = params.tensors[t];
    const double fan_in = static_cast<double>(w.size() / w.shape()[0]);
    const double a = std::sqrt(2.0 / fan_in);
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& v : w.data()) v = dist(rng);
    t += 2;
  }
  return params;
}

namespace {

// Activations of one forward pass. acts[0] is the input, acts[i + 1] the
// output of layer i.
struct ForwardCache {
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<Shape> in_shapes;
  std::vector<double> distribution;
  double loss = 0.0;
  std::size_t predicted = 0;
};

void dense_forward(const Tensor& w, const Tensor& b, std::span<const double> in, std::span<double> out) {
  const std::size_t n_out = w.shape()[0], n_in = w.shape()[1];
  const double* wp = w.data().data();
  for (std::size_t o = 0; o < n_out; ++o) {
    double acc = b[o];
    const double* row = wp + o * n_in;
    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void conv_forward(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape, const Tensor& w,
                  const Tensor& b, std::span<const double> in, std::span<double> out) {
  const std::size_t H = in_shape[1], W = in_shape[2];
  const std::size_t OH = out_shape[1], OW = out_shape[2];
  const std::size_t s = l.stride;
  const double* wp = w.data().data();
  for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
    double* plane = out.data() + oc * OH * OW;
    std::fill(plane, plane + OH * OW, b[oc]);
    for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
      const double* src = in.data() + ic * H * W;
      for (std::size_t ki = 0; ki < l.kernel_h; ++ki) {
        for (std::size_t kj = 0; kj < l.kernel_w; ++kj) {
          const double wv = wp[((oc * l.in_channels + ic) * l.kernel_h + ki) * l.kernel_w + kj];
          for (std::size_t oy = 0; oy < OH; ++oy) {
            const double* in_row = src + (oy * s + ki) * W + kj;
            double* out_row = plane + oy * OW;
            for (std::size_t ox = 0; ox < OW; ++ox) out_row[ox] += wv * in_row[ox * s];
          }
        }
      }
    }
  }
}

void maxpool_forward(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape, std::span<const double> in,
                     std::span<double> out, std::vector<std::size_t>& argmax) {
  const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
  const std::size_t OH = out_shape[1], OW = out_shape[2];
  const std::size_t sh = pool_stride_h(l), sw = pool_stride_w(l);
  argmax.resize(out.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = c * H * W + (oy * sh) * W + ox * sw;
        for (std::size_t ki = 0; ki < l.kernel_h; ++ki) {
          for (std::size_t kj = 0; kj < l.kernel_w; ++kj) {
            const std::size_t idx = c * H * W + (oy * sh + ki) * W + (ox * sw + kj);
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (c * OH + oy) * OW + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
}

ForwardCache run_forward(const NetworkParams& params, const Tensor& x, std::size_t y, bool check_label) {
  const auto& arch = params.architecture;
  if (x.shape() != arch.input_shape) {
    throw ShapeError("input shape " + shape_to_string(x.shape()) + " does not match network input " +
                     shape_to_string(arch.input_shape));
  }
  const auto out_shapes = arch.layer_output_shapes();
  const std::size_t classes = out_shapes.back()[0];
  if (check_label && y >= classes) {
    throw InvalidArgument("label " + std::to_string(y) + " out of range for " + std::to_string(classes) + " classes");
  }

  ForwardCache cache;
  cache.acts.reserve(arch.layers.size() + 1);
  cache.acts.emplace_back(x.data().begin(), x.data().end());
  cache.pool_argmax.resize(arch.layers.size());
  Shape in_shape = arch.input_shape;
  std::size_t t = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    cache.in_shapes.push_back(in_shape);
    const auto& in = cache.acts.back();
    std::vector<double> out(shape_size(out_shapes[i]));
    switch (l.kind) {
      case LayerKind::dense:
        dense_forward(params.tensors[t], params.tensors[t + 1], in, out);
        t += 2;
        break;
      case LayerKind::conv2d:
        conv_forward(l, in_shape, out_shapes[i], params.tensors[t], params.tensors[t + 1], in, out);
        t += 2;
        break;
      case LayerKind::maxpool:
        maxpool_forward(l, in_shape, out_shapes[i], in, out, cache.pool_argmax[i]);
        break;
      case LayerKind::relu:
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
        break;
    }
    cache.acts.push_back(std::move(out));
    in_shape = out_shapes[i];
  }

  const auto& logits = cache.acts.back();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NonFiniteError("forward pass produced a non-finite logit");
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  cache.distribution.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    cache.distribution[k] = std::exp(logits[k] - zmax);
    denom += cache.distribution[k];
  }
  for (auto& p : cache.distribution) p /= denom;
  cache.predicted = static_cast<std::size_t>(
      std::max_element(cache.distribution.begin(), cache.distribution.end()) - cache.distribution.begin());
  if (check_label) cache.loss = std::log(denom) - (logits[y] - zmax);
  return cache;
}

}  // namespace

LossReport forward(const NetworkParams& params, const Tensor& x, std::size_t y) {
  auto cache = run_forward(params, x, y, true);
  return LossReport{cache.loss, cache.predicted, std::move(cache.distribution)};
}

std::size_t predict(const NetworkParams& params, const Tensor& x) {
  return run_forward(params, x, 0, false).predicted;
}

Gradients backward(const NetworkParams& params, const Tensor& x, std::size_t y, GradientRequest request) {
  const auto cache = run_forward(params, x, y, true);
  const auto& arch = params.architecture;
  const bool want_params = request != GradientRequest::input_only;
  const bool want_input = request != GradientRequest::params_only;

  Gradients g;
  g.loss = cache.loss;
  if (want_params) g.param_grads = zero_param_tensors(arch);

  // d loss / d logits = softmax - onehot(y)
  std::vector<double> delta = cache.distribution;
  delta[y] -= 1.0;

  // Parameter tensors are walked back to front.
  std::size_t t = params.tensors.size();
  for (std::size_t i = arch.layers.size(); i-- > 0;) {
    const auto& l = arch.layers[i];
    const auto& in = cache.acts[i];
    const Shape& in_shape = cache.in_shapes[i];
    const bool need_delta_in = i > 0 || want_input;
    std::vector<double> delta_in;
    if (need_delta_in) delta_in.assign(in.size(), 0.0);

    switch (l.kind) {
      case LayerKind::dense: {
        t -= 2;
        const auto& w = params.tensors[t];
        const std::size_t n_out = l.out_dim, n_in = l.in_dim;
        const double* wp = w.data().data();
        if (want_params) {
          double* gw = g.param_grads[t].data().data();
          double* gb = g.param_grads[t + 1].data().data();
          for (std::size_t o = 0; o < n_out; ++o) {
            const double d = delta[o];
            double* row = gw + o * n_in;
            for (std::size_t k = 0; k < n_in; ++k) row[k] = d * in[k];
            gb[o] = d;
          }
        }
        if (need_delta_in) {
          for (std::size_t o = 0; o < n_out; ++o) {
            const double d = delta[o];
            const double* row = wp + o * n_in;
            for (std::size_t k = 0; k < n_in; ++k) delta_in[k] += row[k] * d;
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        t -= 2;
        const auto& w = params.tensors[t];
        const std::size_t H = in_shape[1], W = in_shape[2];
        const std::size_t OH = (H - l.kernel_h) / l.stride + 1, OW = (W - l.kernel_w) / l.stride + 1;
        const std::size_t s = l.stride;
        const double* wp = w.data().data();
        double* gw = want_params ? g.param_grads[t].data().data() : nullptr;
        double* gb = want_params ? g.param_grads[t + 1].data().data() : nullptr;
        for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
          const double* dplane = delta.data() + oc * OH * OW;
          if (want_params) {
            double acc = 0.0;
            for (std::size_t k = 0; k < OH * OW; ++k) acc += dplane[k];
            gb[oc] = acc;
          }
          for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
            const double* src = in.data() + ic * H * W;
            double* dsrc = need_delta_in ? delta_in.data() + ic * H * W : nullptr;
            for (std::size_t ki = 0; ki < l.kernel_h; ++ki) {
              for (std::size_t kj = 0; kj < l.kernel_w; ++kj) {
                const std::size_t widx = ((oc * l.in_channels + ic) * l.kernel_h + ki) * l.kernel_w + kj;
                const double wv = wp[widx];
                double acc = 0.0;
                for (std::size_t oy = 0; oy < OH; ++oy) {
                  const std::size_t base = (oy * s + ki) * W + kj;
                  const double* drow = dplane + oy * OW;
                  if (want_params) {
                    const double* in_row = src + base;
                    for (std::size_t ox = 0; ox < OW; ++ox) acc += drow[ox] * in_row[ox * s];
                  }
                  if (dsrc) {
                    double* out_row = dsrc + base;
                    for (std::size_t ox = 0; ox < OW; ++ox) out_row[ox * s] += wv * drow[ox];
                  }
                }
                if (want_params) gw[widx] = acc;
              }
            }
          }
        }
        break;
      }
      case LayerKind::maxpool: {
        if (need_delta_in) {
          const auto& argmax = cache.pool_argmax[i];
          for (std::size_t o = 0; o < delta.size(); ++o) delta_in[argmax[o]] += delta[o];
        }
        break;
      }
      case LayerKind::relu: {
        if (need_delta_in) {
          for (std::size_t k = 0; k < in.size(); ++k) delta_in[k] = in[k] > 0.0 ? delta[k] : 0.0;
        }
        break;
      }
    }
    if (!need_delta_in) break;
    delta = std::move(delta_in);
  }

  if (want_input) {
    g.input_grad = Tensor(x.shape(), std::move(delta));
    require_finite(g.input_grad, "backward (input gradient)");
  }
  if (want_params) {
    for (const auto& pg : g.param_grads) require_finite(pg, "backward (parameter gradient)");
  }
  return g;
}

BatchGradients batch_loss_and_grads(const NetworkParams& params, std::span<const Example> batch, std::size_t workers,
                                    GradientRequest request) {
  if (batch.empty()) throw InvalidArgument("batch_loss_and_grads: empty batch");
  const bool want_params = request != GradientRequest::input_only;
  const bool want_input = request != GradientRequest::params_only;
  std::vector<Gradients> per_example(batch.size());
  parallel_for(batch.size(), workers,
               [&](std::size_t i) { per_example[i] = backward(params, batch[i].x, batch[i].y, request); });

  BatchGradients out;
  const double n = static_cast<double>(batch.size());
  double loss_sum = 0.0;
  if (want_params) out.mean_param_grads = zero_param_tensors(params.architecture);
  for (auto& g : per_example) {
    loss_sum += g.loss;
    if (want_params) {
      for (std::size_t t = 0; t < g.param_grads.size(); ++t) {
        auto dst = out.mean_param_grads[t].data();
        auto src = g.param_grads[t].data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
    if (want_input) out.input_grads.push_back(std::move(g.input_grad));
  }
  out.mean_loss = loss_sum / n;
  for (auto& t : out.mean_param_grads) {
    for (auto& v : t.data()) v /= n;
  }
  return out;
}

}  // namespace robustnet
