#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "robustnet/errors.hpp"
#include "robustnet/perturb.hpp"

using namespace robustnet;

TEST(Family, ParseAndCodes) {
  EXPECT_EQ(parse_family("linf"), PerturbFamily::linf);
  EXPECT_EQ(parse_family("l2"), PerturbFamily::l2);
  EXPECT_EQ(parse_family("l1"), PerturbFamily::l1);
  EXPECT_EQ(parse_family("tangent"), PerturbFamily::tangent);
  try {
    parse_family("l3");
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("l1, l2, linf, tangent"), std::string::npos);
  }
  EXPECT_EQ(family_from_code(2), PerturbFamily::l1);
  EXPECT_THROW(family_from_code(4), InvalidArgument);
}

TEST(Spec, Validate) {
  EXPECT_NO_THROW((UncertaintySpec{PerturbFamily::l2, 0.0}.validate()));
  EXPECT_THROW((UncertaintySpec{PerturbFamily::l2, -1.0}.validate()), InvalidArgument);
  EXPECT_THROW((UncertaintySpec{PerturbFamily::l2, 1.0, true, 1.0, 0.0}.validate()), InvalidArgument);
}

TEST(Linf, SignStep) {
  EXPECT_EQ(steepest_ascent_linf(Tensor::vector({0.5, -2.0, 0.0}), 0.1).values(),
            (std::vector<double>{0.1, -0.1, 0.0}));
  const auto g = std::vector<double>{0.2, -0.3, 0.4};
  const auto d = steepest_ascent_linf(Tensor::vector(g), 0.05);
  EXPECT_NEAR(oracle::inner(g, d.data()), 0.045, 1e-15);
  EXPECT_NEAR(oracle::inner(g, d.data()), oracle::max_gain_linf(g, 0.05), 1e-15);
}

TEST(L2, NormalizedStep) {
  const auto d = steepest_ascent_l2(Tensor::vector({3.0, 4.0}), 2.0);
  EXPECT_NEAR(d[0], 1.2, 1e-15);
  EXPECT_NEAR(d[1], 1.6, 1e-15);
  EXPECT_EQ(steepest_ascent_l2(Tensor::vector({0.0, 0.0}), 2.0).values(), (std::vector<double>{0.0, 0.0}));
}

TEST(L1, SingleCoordinate) {
  EXPECT_EQ(steepest_ascent_l1(Tensor::vector({0.5, -2.0, 0.0}), 0.1).values(),
            (std::vector<double>{0.0, -0.1, 0.0}));
  EXPECT_EQ(steepest_ascent_l1(Tensor::vector({0.0, 0.0}), 0.1).values(), (std::vector<double>{0.0, 0.0}));
}

TEST(Steps, AttainBruteForceMaximum) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> dim(1, 10);
  std::uniform_real_distribution<double> radius(0.01, 3.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t d = dim(rng);
    const auto g = oracle::random_tensor({d}, rng, -5.0, 5.0);
    const double r = radius(rng);
    const auto gv = g.values();
    EXPECT_NEAR(oracle::inner(gv, steepest_ascent_linf(g, r).data()), oracle::max_gain_linf(gv, r), 1e-9);
    EXPECT_NEAR(oracle::inner(gv, steepest_ascent_l2(g, r).data()), oracle::max_gain_l2(gv, r), 1e-9);
    const auto l1 = steepest_ascent_l1(g, r);
    EXPECT_NEAR(oracle::inner(gv, l1.data()), oracle::max_gain_l1(gv, r), 1e-9);
    std::size_t nonzero = 0;
    for (double v : l1.data()) nonzero += v != 0.0;
    EXPECT_LE(nonzero, 1u);
    EXPECT_LE(norm(steepest_ascent_l2(g, r), Norm::l2), r * (1 + 1e-12));
  }
}

TEST(Tangent, ProjectedStep) {
  // Basis spans the first two axes of R^3.
  const TangentBasis basis(3, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}});
  const auto d = tangent_projected_step(Tensor::vector({3.0, 4.0, 100.0}), basis, 1.0);
  EXPECT_NEAR(d[0], 0.6, 1e-15);
  EXPECT_NEAR(d[1], 0.8, 1e-15);
  EXPECT_EQ(d[2], 0.0);
  // Gradient orthogonal to the span: no step.
  EXPECT_EQ(tangent_projected_step(Tensor::vector({0.0, 0.0, 1.0}), basis, 1.0).values(),
            (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_THROW(tangent_projected_step(Tensor::vector({1.0, 1.0}), basis, 1.0), ShapeError);
}

TEST(Tangent, StepMaximizesGainWithinSpan) {
  std::mt19937_64 rng(5);
  const double s = 1.0 / std::sqrt(2.0);
  const TangentBasis basis(4, {{s, s, 0.0, 0.0}, {0.0, 0.0, s, -s}});
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = oracle::random_tensor({4}, rng);
    const auto d = tangent_projected_step(g, basis, 0.7);
    // Best unit direction in the span is P g / ||P g||, giving gain r ||P g||.
    const double c0 = s * (g[0] + g[1]);
    const double c1 = s * (g[2] - g[3]);
    EXPECT_NEAR(oracle::inner(g.values(), d.data()), 0.7 * std::hypot(c0, c1), 1e-12);
  }
}

TEST(Tangent, RejectsNonOrthonormal) {
  EXPECT_THROW(TangentBasis(2, {{1.0, 0.0}, {1.0, 0.0}}), InvalidArgument);
  EXPECT_THROW(TangentBasis(2, {{2.0, 0.0}}), InvalidArgument);
  EXPECT_THROW(TangentBasis(2, {{1.0, 0.0, 0.0}}), ShapeError);
  EXPECT_NO_THROW(TangentBasis(2, {}));
}

TEST(Tangent, TranslationBasisIsOrthonormal) {
  Tensor img({1, 6, 6});
  for (std::size_t i = 0; i < 36; ++i) img[i] = (i % 5 == 0) ? 1.0 : 0.0;
  const auto basis = translation_tangent_basis(img);
  EXPECT_EQ(basis.dim(), 36u);
  EXPECT_EQ(basis.rank(), 2u);
  EXPECT_EQ(translation_tangent_basis(Tensor({1, 4, 4})).rank(), 0u);
}

TEST(Clip, Box) {
  EXPECT_EQ(box_clip(Tensor::vector({-0.1, 0.5, 1.2}), 0.0, 1.0).values(), (std::vector<double>{0.0, 0.5, 1.0}));
}

TEST(Dispatch, MatchesFamilyFunctions) {
  const auto g = Tensor::vector({0.3, -0.9, 0.1});
  EXPECT_EQ(steepest_ascent(g, {PerturbFamily::linf, 0.2}), steepest_ascent_linf(g, 0.2));
  EXPECT_EQ(steepest_ascent(g, {PerturbFamily::l2, 0.2}), steepest_ascent_l2(g, 0.2));
  EXPECT_EQ(steepest_ascent(g, {PerturbFamily::l1, 0.2}), steepest_ascent_l1(g, 0.2));
  EXPECT_THROW(steepest_ascent(g, {PerturbFamily::tangent, 0.2}), InvalidArgument);
}

TEST(Batch, PerturbsEachExampleAndKeepsLabels) {
  std::mt19937_64 rng(8);
  const auto arch = mlp_architecture(5, 4, 3);
  const auto params = init_params(arch, 2);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < 6; ++i) batch.push_back({oracle::random_tensor({5}, rng, 0.0, 1.0), i % 3});
  const auto copy = batch;
  const UncertaintySpec spec{PerturbFamily::linf, 0.1};
  const auto out = perturb_batch(params, batch, spec);
  ASSERT_EQ(out.size(), batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    EXPECT_EQ(batch[i].x, copy[i].x);
    EXPECT_EQ(out[i].y, batch[i].y);
    const auto g = backward(params, batch[i].x, batch[i].y, GradientRequest::input_only).input_grad;
    const auto expect = box_clip(add(batch[i].x, steepest_ascent_linf(g, 0.1)), 0.0, 1.0);
    EXPECT_EQ(out[i].x, expect);
  }
  EXPECT_EQ(perturb_batch(params, batch, spec, nullptr, 3)[4].x, out[4].x);
}

TEST(Batch, ZeroRadiusIsIdentity) {
  std::mt19937_64 rng(9);
  const auto params = init_params(mlp_architecture(5, 4, 3), 2);
  std::vector<Example> batch{{oracle::random_tensor({5}, rng, 0.0, 1.0), 1}};
  for (auto f : {PerturbFamily::linf, PerturbFamily::l2, PerturbFamily::l1}) {
    EXPECT_EQ(perturb_batch(params, batch, {f, 0.0})[0].x, batch[0].x);
  }
}

TEST(Batch, TangentNeedsProvider) {
  const auto params = init_params(Architecture{{1, 4, 4}, {LayerSpec::dense(16, 2)}}, 1);
  std::vector<Example> batch{{Tensor({1, 4, 4}), 0}};
  EXPECT_THROW(perturb_batch(params, batch, {PerturbFamily::tangent, 0.5}), InvalidArgument);
  const BasisProvider provider = [](std::size_t, const Tensor& x) { return translation_tangent_basis(x); };
  EXPECT_THROW(perturb_batch(params, batch, {PerturbFamily::l2, 0.5}, &provider), InvalidArgument);
  EXPECT_NO_THROW(perturb_batch(params, batch, {PerturbFamily::tangent, 0.5}, &provider));
}
