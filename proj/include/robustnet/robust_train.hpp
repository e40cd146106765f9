#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustnet/data_io.hpp"
#include "robustnet/nn.hpp"
#include "robustnet/perturb.hpp"

namespace robustnet {

enum class TrainMode { standard, robust, blended };

std::string to_string(TrainMode mode);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  /// Seeds parameter initialization and the per-epoch shuffles.
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::standard;
  UncertaintySpec uncertainty;
  /// Weight of the clean loss in blended mode.
  double alpha = 0.5;
  /// Invoke the checkpoint hook every this many epochs; 0 disables it.
  std::size_t checkpoint_every = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> test_accuracy;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  /// Forward+backward passes over a batch: 1 per batch in standard mode, 2 otherwise.
  std::size_t gradient_passes = 0;
  std::size_t batches = 0;

  /// Header `epoch,loss,test_accuracy,seconds`; missing accuracy is left empty.
  std::string to_csv() const;
};

struct MomentumState {
  std::vector<Tensor> velocity;
};

/// v <- momentum * v + g; theta <- theta - lr * v. An empty state is treated as zeros.
void sgd_step(NetworkParams& params, std::span<const Tensor> grads, double learning_rate, double momentum,
              MomentumState& state);

/// Observation points inside the training loop.
struct TrainHooks {
  /// Called before each descent step with the raw mini-batch and the batch the
  /// descent gradient is computed on.
  std::function<void(std::span<const Example> raw, std::span<const Example> descent)> on_descent_batch;
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t epoch, const NetworkParams&)> on_checkpoint;
};

struct TrainResult {
  NetworkParams params;
  TrainTrace trace;
};

struct TrainInputs {
  const Dataset* test = nullptr;                    // per-epoch accuracy, optional
  const TrainHooks* hooks = nullptr;                // optional
  const NetworkParams* initial = nullptr;           // fine-tune from these instead of init_params
  const BasisProvider* basis_provider = nullptr;    // tangent family only
};

/// Plain mini-batch SGD on the original data.
TrainResult standard_train_loop(const Architecture& arch, const Dataset& train, const TrainConfig& config,
                                const TrainInputs& inputs = {});

/// Alternating ascent/descent: per mini-batch, one ascent step per example
/// at the current parameters, then one descent step on the perturbed batch
/// only. Requires config.mode == robust.
TrainResult robust_train_loop(const Architecture& arch, const Dataset& train, const TrainConfig& config,
                              const TrainInputs& inputs = {});

/// Dispatches on config.mode (standard, robust or blended).
TrainResult train(const Architecture& arch, const Dataset& train, const TrainConfig& config,
                  const TrainInputs& inputs = {});

/// One descent step on alpha * J(x) + (1 - alpha) * J(x + eps * sign(grad_x J)),
/// with the perturbation held fixed. Returns the blended loss before the step.
double blended_loss_step(NetworkParams& params, std::span<const Example> batch, const UncertaintySpec& spec,
                         double alpha, double learning_rate, double momentum, MomentumState& state,
                         std::size_t workers = 1);

}  // namespace robustnet
