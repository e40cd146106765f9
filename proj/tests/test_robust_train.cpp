#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "robustnet/attack_eval.hpp"
#include "robustnet/data_io.hpp"
#include "robustnet/errors.hpp"
#include "robustnet/robust_train.hpp"

using namespace robustnet;

namespace {

Dataset blobs() { return synth_blobs(30, 3, 8, 0.1, 5); }

TrainConfig base_config(std::size_t epochs = 2) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.momentum = 0.9;
  c.seed = 42;
  return c;
}

}  // namespace

TEST(Config, Validation) {
  auto c = base_config();
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = base_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = base_config();
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = base_config();
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = base_config();
  c.mode = TrainMode::blended;
  c.uncertainty.family = PerturbFamily::l2;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Sgd, VanillaWhenMomentumZero) {
  auto params = init_params(linear_architecture(2, 2), 1);
  const auto before = params;
  auto grads = zero_param_tensors(params.architecture);
  grads[0][1] = 2.0;
  MomentumState state;
  sgd_step(params, grads, 0.1, 0.0, state);
  EXPECT_DOUBLE_EQ(params.tensors[0][1], before.tensors[0][1] - 0.2);
  EXPECT_EQ(params.tensors[0][0], before.tensors[0][0]);
}

TEST(Sgd, ZeroGradientLeavesParams) {
  auto params = init_params(linear_architecture(2, 2), 1);
  const auto before = params;
  MomentumState state;
  sgd_step(params, zero_param_tensors(params.architecture), 0.1, 0.9, state);
  EXPECT_EQ(params, before);
}

TEST(Sgd, TwoMomentumStepsOnConstantGradient) {
  auto params = init_params(linear_architecture(2, 2), 1);
  const auto before = params;
  auto grads = zero_param_tensors(params.architecture);
  for (auto& t : grads)
    for (auto& v : t.data()) v = 0.5;
  MomentumState state;
  sgd_step(params, grads, 0.1, 0.9, state);
  sgd_step(params, grads, 0.1, 0.9, state);
  // v1 = g, v2 = 1.9 g: displacement lr g (1 + 1.9).
  for (std::size_t t = 0; t < params.tensors.size(); ++t)
    for (std::size_t k = 0; k < params.tensors[t].size(); ++k)
      EXPECT_NEAR(before.tensors[t][k] - params.tensors[t][k], 0.1 * 0.5 * 2.9, 1e-15);
}

TEST(Sgd, RejectsMismatchAndNonFinite) {
  auto params = init_params(linear_architecture(2, 2), 1);
  MomentumState state;
  EXPECT_THROW(sgd_step(params, std::vector<Tensor>{Tensor({2})}, 0.1, 0.9, state), ShapeError);
  auto grads = zero_param_tensors(params.architecture);
  grads[0][0] = std::numeric_limits<double>::infinity();
  const auto before = params;
  EXPECT_THROW(sgd_step(params, grads, 0.1, 0.9, state), NonFiniteError);
  EXPECT_EQ(params, before);
}

TEST(Standard, OneExampleOneEpochIsOneSgdStep) {
  Dataset ds;
  ds.num_classes = 2;
  ds.examples.push_back({Tensor::vector({0.2, 0.7}), 1});
  auto config = base_config(1);
  config.momentum = 0.0;
  const auto result = standard_train_loop(linear_architecture(2, 2), ds, config);
  auto expect = init_params(linear_architecture(2, 2), config.seed);
  const auto g = backward(expect, ds.examples[0].x, 1);
  MomentumState state;
  sgd_step(expect, g.param_grads, config.learning_rate, 0.0, state);
  EXPECT_EQ(result.params, expect);
}

TEST(Standard, ReproducibleAndLearns) {
  const auto ds = blobs();
  auto config = base_config(5);
  const auto a = standard_train_loop(mlp_architecture(8, 16, 3), ds, config);
  const auto b = standard_train_loop(mlp_architecture(8, 16, 3), ds, config);
  EXPECT_EQ(a.params, b.params);
  EXPECT_GT(evaluate(a.params, ds), 0.95);
  ASSERT_EQ(a.trace.epochs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.trace.epochs[i].epoch, i + 1);
  EXPECT_EQ(a.trace.batches, 5u * 6u);  // 90 examples, batches of 16
  EXPECT_EQ(a.trace.gradient_passes, a.trace.batches);
  config.workers = 3;
  EXPECT_EQ(standard_train_loop(mlp_architecture(8, 16, 3), ds, config).params, a.params);
}

TEST(Robust, RequiresRobustMode) {
  EXPECT_THROW(robust_train_loop(mlp_architecture(8, 4, 3), blobs(), base_config()), InvalidArgument);
  auto config = base_config();
  config.mode = TrainMode::robust;
  EXPECT_THROW(standard_train_loop(mlp_architecture(8, 4, 3), blobs(), config), InvalidArgument);
  EXPECT_THROW(robust_train_loop(mlp_architecture(8, 4, 3), Dataset{}, config), InvalidArgument);
}

TEST(Robust, DescentSeesOnlyPerturbedExamples) {
  const auto ds = blobs();
  auto config = base_config(2);
  config.mode = TrainMode::robust;
  config.uncertainty = {PerturbFamily::l2, 0.05, false};
  std::size_t batches = 0, checked = 0;
  TrainHooks hooks;
  hooks.on_descent_batch = [&](std::span<const Example> raw, std::span<const Example> descent) {
    ++batches;
    ASSERT_EQ(raw.size(), descent.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      EXPECT_EQ(raw[i].y, descent[i].y);
      EXPECT_NE(raw[i].x, descent[i].x);
      EXPECT_NEAR(norm(sub(descent[i].x, raw[i].x), Norm::l2), 0.05, 1e-12);
      ++checked;
    }
  };
  const auto result = robust_train_loop(mlp_architecture(8, 16, 3), ds, config, {nullptr, &hooks});
  EXPECT_EQ(batches, result.trace.batches);
  EXPECT_EQ(checked, 2 * ds.size());
  EXPECT_EQ(result.trace.gradient_passes, 2 * result.trace.batches);
}

TEST(Robust, FirstStepMatchesManualAscentDescent) {
  const auto ds = blobs();
  auto config = base_config(1);
  config.batch_size = ds.size();  // one batch, so the shuffle order does not matter for the mean
  config.mode = TrainMode::robust;
  config.uncertainty = {PerturbFamily::linf, 0.1};
  const auto got = robust_train_loop(mlp_architecture(8, 6, 3), ds, config);

  auto params = init_params(mlp_architecture(8, 6, 3), config.seed);
  std::vector<Example> perturbed;
  for (const auto& e : ds.examples) {
    const auto g = backward(params, e.x, e.y).input_grad;
    perturbed.push_back({box_clip(add(e.x, steepest_ascent_linf(g, 0.1)), 0.0, 1.0), e.y});
  }
  auto mean = zero_param_tensors(params.architecture);
  for (const auto& e : perturbed) {
    const auto g = backward(params, e.x, e.y).param_grads;
    for (std::size_t t = 0; t < mean.size(); ++t)
      for (std::size_t k = 0; k < mean[t].size(); ++k) mean[t][k] += g[t][k] / static_cast<double>(ds.size());
  }
  MomentumState state;
  sgd_step(params, mean, config.learning_rate, config.momentum, state);
  for (std::size_t t = 0; t < mean.size(); ++t)
    for (std::size_t k = 0; k < mean[t].size(); ++k) EXPECT_NEAR(got.params.tensors[t][k], params.tensors[t][k], 1e-12);
}

TEST(Equivalence, ZeroRadiusAndAlphaOneMatchStandard) {
  const auto ds = blobs();
  const auto arch = mlp_architecture(8, 16, 3);
  const auto standard = standard_train_loop(arch, ds, base_config());
  auto robust = base_config();
  robust.mode = TrainMode::robust;
  robust.uncertainty = {PerturbFamily::linf, 0.0};
  EXPECT_EQ(robust_train_loop(arch, ds, robust).params, standard.params);
  auto blended = base_config();
  blended.mode = TrainMode::blended;
  blended.alpha = 1.0;
  blended.uncertainty = {PerturbFamily::linf, 0.1};
  EXPECT_EQ(train(arch, ds, blended).params, standard.params);
}

TEST(Blended, AlphaZeroMatchesRobustStep) {
  const auto ds = blobs();
  const std::vector<Example> batch(ds.examples.begin(), ds.examples.begin() + 10);
  const UncertaintySpec spec{PerturbFamily::linf, 0.1};
  auto blended = init_params(mlp_architecture(8, 6, 3), 3);
  auto robust = blended;
  MomentumState s1, s2;
  blended_loss_step(blended, batch, spec, 0.0, 0.05, 0.9, s1);
  const auto perturbed = perturb_batch(robust, batch, spec);
  const auto g = batch_loss_and_grads(robust, perturbed);
  sgd_step(robust, g.mean_param_grads, 0.05, 0.9, s2);
  EXPECT_EQ(blended, robust);
}

TEST(Blended, HalfAveragesBranchGradients) {
  const auto ds = blobs();
  const std::vector<Example> batch(ds.examples.begin(), ds.examples.begin() + 10);
  const UncertaintySpec spec{PerturbFamily::linf, 0.1};
  auto params = init_params(mlp_architecture(8, 6, 3), 3);
  const auto start = params;
  MomentumState state;
  const double loss = blended_loss_step(params, batch, spec, 0.5, 0.05, 0.0, state);

  const auto clean = batch_loss_and_grads(start, batch);
  const auto adv = batch_loss_and_grads(start, perturb_batch(start, batch, spec));
  EXPECT_NEAR(loss, 0.5 * clean.mean_loss + 0.5 * adv.mean_loss, 1e-14);
  for (std::size_t t = 0; t < start.tensors.size(); ++t)
    for (std::size_t k = 0; k < start.tensors[t].size(); ++k) {
      const double avg = 0.5 * (clean.mean_param_grads[t][k] + adv.mean_param_grads[t][k]);
      EXPECT_NEAR(params.tensors[t][k], start.tensors[t][k] - 0.05 * avg, 1e-14);
    }
  EXPECT_THROW(blended_loss_step(params, batch, {PerturbFamily::l2, 0.1}, 0.5, 0.05, 0.0, state), InvalidArgument);
}

TEST(Trace, CsvAndHooks) {
  const auto ds = blobs();
  auto config = base_config(3);
  config.checkpoint_every = 2;
  std::vector<std::size_t> saved;
  std::size_t epochs_seen = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord&) { ++epochs_seen; };
  hooks.on_checkpoint = [&](std::size_t e, const NetworkParams&) { saved.push_back(e); };
  const auto r = standard_train_loop(mlp_architecture(8, 4, 3), ds, config, {&ds, &hooks});
  EXPECT_EQ(epochs_seen, 3u);
  EXPECT_EQ(saved, std::vector<std::size_t>{2});
  const auto csv = r.trace.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,test_accuracy,seconds");
  for (const auto& e : r.trace.epochs) {
    ASSERT_TRUE(e.test_accuracy.has_value());
    EXPECT_GE(*e.test_accuracy, 0.0);
    EXPECT_LE(*e.test_accuracy, 1.0);
  }
}

TEST(Train, DivergenceIsReported) {
  Dataset ds;
  ds.num_classes = 2;
  ds.examples.push_back({Tensor::vector({1e10, 0.5}), 1});
  ds.examples.push_back({Tensor::vector({0.5, 1e10}), 0});
  auto config = base_config(3);
  config.learning_rate = 1e300;
  EXPECT_THROW(standard_train_loop(linear_architecture(2, 2), ds, config), NonFiniteError);
}

TEST(Train, FineTuneStartsFromInitial) {
  const auto ds = blobs();
  const auto arch = mlp_architecture(8, 16, 3);
  auto config = base_config(1);
  const auto first = standard_train_loop(arch, ds, config);
  TrainInputs inputs;
  inputs.initial = &first.params;
  const auto tuned = standard_train_loop(arch, ds, config, inputs);
  EXPECT_NE(tuned.params, first.params);
  const auto other = init_params(mlp_architecture(8, 4, 3), 1);
  inputs.initial = &other;
  EXPECT_THROW(standard_train_loop(arch, ds, config, inputs), InvalidArgument);
}
