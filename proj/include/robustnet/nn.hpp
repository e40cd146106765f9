#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "robustnet/tensor.hpp"

namespace robustnet {

enum class LayerKind : std::uint8_t { dense = 0, conv2d = 1, maxpool = 2, relu = 3 };

std::string to_string(LayerKind kind);

/// One layer of a feed-forward stack. Only the fields relevant to `kind` are
/// used: dense reads in_dim/out_dim, conv2d reads channels, kernel and stride,
/// maxpool reads the window (kernel_h x kernel_w) and stride.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;

  static LayerSpec dense(std::size_t in_dim, std::size_t out_dim);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                          std::size_t kernel_w, std::size_t stride = 1);
  /// Pooling stride defaults to the window size.
  static LayerSpec maxpool(std::size_t window_h, std::size_t window_w, std::size_t stride = 0);
  static LayerSpec relu();

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Input shape plus the layer stack. Inputs are either flat vectors {d} or
/// images {channels, height, width}; dense layers flatten whatever they get.
struct Architecture {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  /// Output shape of every layer, in order. Throws InvalidArgument if the
  /// stack is empty or consecutive shapes do not compose.
  std::vector<Shape> layer_output_shapes() const;
  std::size_t num_classes() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// conv(1->8, 5x5) relu pool2 conv(8->16, 5x5) relu pool2 dense(256->64) relu dense(64->10).
Architecture desk_mnist_architecture();
/// 32 and 64 5x5 filters, 3x3 then 2x2 pooling, dense 200 and 10.
Architecture paper_mnist_architecture();
/// A single dense layer, used for linearly separable fixtures.
Architecture linear_architecture(std::size_t dim, std::size_t classes);
/// dense(dim->hidden) relu dense(hidden->classes).
Architecture mlp_architecture(std::size_t dim, std::size_t hidden, std::size_t classes);

/// Parameters for every dense/conv layer, stored as (weight, bias) pairs in
/// layer order. Dense weights are [out, in]; conv weights are
/// [out_channels, in_channels, kernel_h, kernel_w].
struct NetworkParams {
  Architecture architecture;
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Zero tensors shaped like the parameters of `arch`.
std::vector<Tensor> zero_param_tensors(const Architecture& arch);

/// Weights uniform in [-a, a] with a = sqrt(2 / fan_in); biases zero.
NetworkParams init_params(const Architecture& arch, std::uint64_t seed);

struct Example {
  Tensor x;
  std::size_t y = 0;
};

struct LossReport {
  double loss = 0.0;
  std::size_t predicted = 0;
  std::vector<double> distribution;
};

struct Gradients {
  std::vector<Tensor> param_grads;  // empty if not requested
  Tensor input_grad;                // scalar zero if not requested
  double loss = 0.0;
};

enum class GradientRequest { params_and_input, input_only, params_only };

/// Softmax cross-entropy loss at (params, x, y).
LossReport forward(const NetworkParams& params, const Tensor& x, std::size_t y);
Gradients backward(const NetworkParams& params, const Tensor& x, std::size_t y,
                   GradientRequest request = GradientRequest::params_and_input);
/// Argmax of the output distribution, ties to the lowest class.
std::size_t predict(const NetworkParams& params, const Tensor& x);

struct BatchGradients {
  double mean_loss = 0.0;
  std::vector<Tensor> mean_param_grads;
  std::vector<Tensor> input_grads;
};

/// Mean loss and parameter gradients over the batch, reduced in ascending
/// example order whatever the worker count, plus each example's input gradient.
BatchGradients batch_loss_and_grads(const NetworkParams& params, std::span<const Example> batch,
                                    std::size_t workers = 1,
                                    GradientRequest request = GradientRequest::params_and_input);

}  // namespace robustnet
