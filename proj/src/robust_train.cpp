#include "robustnet/robust_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "robustnet/attack_eval.hpp"
#include "robustnet/errors.hpp"

namespace robustnet {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::standard:
      return "standard";
    case TrainMode::robust:
      return "robust";
    case TrainMode::blended:
      return "blended";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in [0, 1]");
  if (mode != TrainMode::standard) uncertainty.validate();
  if (mode == TrainMode::blended && uncertainty.family != PerturbFamily::linf) {
    throw InvalidArgument("blended loss is defined for the linf family only");
  }
}

std::string TrainTrace::to_csv() const {
  std::ostringstream os;
  os << "epoch,loss,test_accuracy,seconds\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,", e.epoch, e.mean_loss);
    os << buf;
    if (e.test_accuracy) {
      std::snprintf(buf, sizeof buf, "%.6f", *e.test_accuracy);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.3f\n", e.seconds);
    os << buf;
  }
  return os.str();
}

void sgd_step(NetworkParams& params, std::span<const Tensor> grads, double learning_rate, double momentum,
              MomentumState& state) {
  if (grads.size() != params.tensors.size()) throw ShapeError("sgd_step: gradient count does not match parameters");
  if (state.velocity.empty()) state.velocity = zero_param_tensors(params.architecture);
  if (state.velocity.size() != params.tensors.size()) throw ShapeError("sgd_step: momentum state does not match");

  // Compute into copies so a non-finite update leaves params and state untouched.
  auto velocity = state.velocity;
  auto tensors = params.tensors;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    if (grads[t].shape() != tensors[t].shape() || velocity[t].shape() != tensors[t].shape()) {
      throw ShapeError("sgd_step: shape mismatch in tensor " + std::to_string(t));
    }
    auto v = velocity[t].data();
    auto g = grads[t].data();
    auto p = tensors[t].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] + g[k];
      p[k] -= learning_rate * v[k];
      if (!std::isfinite(p[k])) throw NonFiniteError("sgd_step produced a non-finite parameter");
    }
  }
  state.velocity = std::move(velocity);
  params.tensors = std::move(tensors);
}

namespace {

void combine_gradients(std::vector<Tensor>& clean, const std::vector<Tensor>& adv, double alpha) {
  for (std::size_t t = 0; t < clean.size(); ++t) {
    auto c = clean[t].data();
    auto a = adv[t].data();
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = alpha * c[k] + (1.0 - alpha) * a[k];
  }
}

struct StepContext {
  const TrainConfig& config;
  const TrainInputs& inputs;
  TrainTrace& trace;
};

double standard_step(NetworkParams& params, std::span<const Example> batch, MomentumState& state,
                     StepContext& ctx) {
  if (ctx.inputs.hooks && ctx.inputs.hooks->on_descent_batch) ctx.inputs.hooks->on_descent_batch(batch, batch);
  auto g = batch_loss_and_grads(params, batch, ctx.config.workers, GradientRequest::params_only);
  ctx.trace.gradient_passes += 1;
  sgd_step(params, g.mean_param_grads, ctx.config.learning_rate, ctx.config.momentum, state);
  return g.mean_loss;
}

double robust_step(NetworkParams& params, std::span<const Example> batch, std::span<const std::size_t> indices,
                   MomentumState& state, StepContext& ctx) {
  // Ascent: input gradients at the current parameters.
  const auto ascent = batch_loss_and_grads(params, batch, ctx.config.workers, GradientRequest::input_only);
  const auto perturbed =
      perturb_with_gradients(batch, ascent.input_grads, ctx.config.uncertainty, ctx.inputs.basis_provider, indices);
  if (ctx.inputs.hooks && ctx.inputs.hooks->on_descent_batch) ctx.inputs.hooks->on_descent_batch(batch, perturbed);
  // Descent: perturbed examples only.
  auto g = batch_loss_and_grads(params, perturbed, ctx.config.workers, GradientRequest::params_only);
  ctx.trace.gradient_passes += 2;
  sgd_step(params, g.mean_param_grads, ctx.config.learning_rate, ctx.config.momentum, state);
  return g.mean_loss;
}

struct BlendedGradients {
  std::vector<Tensor> grads;
  double loss = 0.0;
  std::vector<Example> perturbed;
};

BlendedGradients blended_gradients(const NetworkParams& params, std::span<const Example> batch,
                                   const UncertaintySpec& spec, double alpha, std::size_t workers) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must be in [0, 1]");
  if (spec.family != PerturbFamily::linf) throw InvalidArgument("blended loss is defined for the linf family only");
  auto clean = batch_loss_and_grads(params, batch, workers, GradientRequest::params_and_input);
  auto perturbed = perturb_with_gradients(batch, clean.input_grads, spec);
  const auto adv = batch_loss_and_grads(params, perturbed, workers, GradientRequest::params_only);
  combine_gradients(clean.mean_param_grads, adv.mean_param_grads, alpha);
  return {std::move(clean.mean_param_grads), alpha * clean.mean_loss + (1.0 - alpha) * adv.mean_loss,
          std::move(perturbed)};
}

double blended_step(NetworkParams& params, std::span<const Example> batch, MomentumState& state, StepContext& ctx) {
  auto b = blended_gradients(params, batch, ctx.config.uncertainty, ctx.config.alpha, ctx.config.workers);
  if (ctx.inputs.hooks && ctx.inputs.hooks->on_descent_batch) ctx.inputs.hooks->on_descent_batch(batch, b.perturbed);
  ctx.trace.gradient_passes += 2;
  sgd_step(params, b.grads, ctx.config.learning_rate, ctx.config.momentum, state);
  return b.loss;
}

TrainResult run_loop(const Architecture& arch, const Dataset& data, const TrainConfig& config,
                     const TrainInputs& inputs) {
  config.validate();
  if (data.empty()) throw InvalidArgument("training data is empty");
  if (config.mode == TrainMode::robust && config.uncertainty.family == PerturbFamily::tangent &&
      !inputs.basis_provider) {
    throw InvalidArgument("tangent uncertainty needs a basis provider");
  }
  TrainResult result;
  if (inputs.initial) {
    if (!(inputs.initial->architecture == arch)) throw InvalidArgument("initial parameters use a different architecture");
    result.params = *inputs.initial;
  } else {
    result.params = init_params(arch, config.seed);
  }

  MomentumState state;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(data.size());
  std::vector<Example> batch;
  std::vector<std::size_t> batch_indices;
  StepContext ctx{config, inputs, result.trace};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      batch.clear();
      batch_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(first),
                           order.begin() + static_cast<std::ptrdiff_t>(last));
      for (auto i : batch_indices) batch.push_back(data.examples[i]);

      double loss = 0.0;
      switch (config.mode) {
        case TrainMode::standard:
          loss = standard_step(result.params, batch, state, ctx);
          break;
        case TrainMode::robust:
          loss = robust_step(result.params, batch, batch_indices, state, ctx);
          break;
        case TrainMode::blended:
          loss = blended_step(result.params, batch, state, ctx);
          break;
      }
      if (!std::isfinite(loss)) {
        throw NonFiniteError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(n_batches) + " (try a smaller learning rate)");
      }
      loss_sum += loss;
      ++n_batches;
      ++result.trace.batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(n_batches);
    if (inputs.test && !inputs.test->empty()) rec.test_accuracy = evaluate(result.params, *inputs.test, config.workers);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.trace.epochs.push_back(rec);
    if (inputs.hooks && inputs.hooks->on_epoch) inputs.hooks->on_epoch(rec);
    if (inputs.hooks && inputs.hooks->on_checkpoint && config.checkpoint_every > 0 &&
        epoch % config.checkpoint_every == 0) {
      inputs.hooks->on_checkpoint(epoch, result.params);
    }
  }
  return result;
}

}  // namespace

TrainResult standard_train_loop(const Architecture& arch, const Dataset& train_data, const TrainConfig& config,
                                const TrainInputs& inputs) {
  if (config.mode != TrainMode::standard) throw InvalidArgument("standard_train_loop needs mode = standard");
  return run_loop(arch, train_data, config, inputs);
}

TrainResult robust_train_loop(const Architecture& arch, const Dataset& train_data, const TrainConfig& config,
                              const TrainInputs& inputs) {
  if (config.mode != TrainMode::robust) throw InvalidArgument("robust_train_loop needs mode = robust");
  return run_loop(arch, train_data, config, inputs);
}

TrainResult train(const Architecture& arch, const Dataset& train_data, const TrainConfig& config,
                  const TrainInputs& inputs) {
  return run_loop(arch, train_data, config, inputs);
}

double blended_loss_step(NetworkParams& params, std::span<const Example> batch, const UncertaintySpec& spec,
                         double alpha, double learning_rate, double momentum, MomentumState& state,
                         std::size_t workers) {
  spec.validate();
  auto b = blended_gradients(params, batch, spec, alpha, workers);
  sgd_step(params, b.grads, learning_rate, momentum, state);
  return b.loss;
}

}  // namespace robustnet
