#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "splitdp/attacks.hpp"
#include "splitdp/rng.hpp"

using namespace splitdp;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

ModelGraph invertible_fc(std::size_t n, std::uint64_t seed) {
  FullyConnected fc = FullyConnected::make(n, n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) fc.weight[i * n + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.3, 0.3);
  for (double& b : fc.bias.values()) b = rng.uniform(-0.1, 0.1);
  return ModelGraph(Shape{n}, {fc});
}

ModelGraph tiny_two_layer(std::uint64_t seed) {
  ModelGraph model(Shape{2, 4, 4}, {Conv::make(2, 4, 3, 1, 1), Conv::make(4, 3, 3, 1, 1)});
  randomize_parameters(model, seed);
  return model;
}

}  // namespace

TEST(TotalVariation, ConstantImageIsZero) { EXPECT_EQ(total_variation(Tensor::filled(Shape{3, 4, 4}, 0.7), 2.0), 0.0); }

TEST(TotalVariation, SingleHorizontalStep) { EXPECT_EQ(total_variation(Tensor(Shape{1, 2}, {0.0, 1.0}), 2.0), 1.0); }

TEST(TotalVariation, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = random_tensor(Shape{2, 4, 4}, seed);
    for (double beta : {1.0, 1.5, 2.0}) EXPECT_NEAR(total_variation(x, beta), oracle::total_variation(x, beta), 1e-12);
  }
}

TEST(TotalVariation, GradientMatchesFiniteDifferences) {
  const Tensor x = random_tensor(Shape{2, 4, 4}, 3);
  for (double beta : {1.5, 2.0}) {
    Tensor grad;
    total_variation(x, beta, &grad);
    const Tensor fd = oracle::finite_difference([&](const Tensor& p) { return total_variation(p, beta); }, x);
    EXPECT_LT(oracle::max_relative_error(grad, fd), 1e-6);
  }
}

TEST(TotalVariation, RejectsBadArguments) {
  EXPECT_THROW(total_variation(Tensor(Shape{4}), 2.0), ShapeError);
  EXPECT_THROW(total_variation(Tensor(Shape{2, 2}), 0.0), RangeError);
}

TEST(WraObjective, GradientMatchesFiniteDifferences) {
  const ModelGraph model = tiny_two_layer(4);
  const Tensor observed = random_tensor(model.output_shape(), 5, -1.0, 1.0);
  const Tensor x = random_tensor(model.input_shape(), 6);
  for (double lambda : {0.0, 0.05}) {
    Tensor grad;
    wra_objective(model, 2, observed, x, lambda, 2.0, &grad);
    const Tensor fd = oracle::finite_difference(
        [&](const Tensor& p) { return wra_objective(model, 2, observed, p, lambda, 2.0).total; }, x);
    EXPECT_LT(oracle::max_relative_error(grad, fd), 1e-6);
  }
}

TEST(Wra, InvertibleFcMatchesNormalEquations) {
  const std::size_t n = 6;
  const ModelGraph model = invertible_fc(n, 1);
  const Tensor truth = random_tensor(Shape{n}, 2);
  const Tensor observed = forward_prefix(model, truth, 1);
  const auto& fc = std::get<FullyConnected>(model.layer(1));
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = observed[i] - fc.bias[i];
  const std::vector<double> ls = oracle::least_squares(fc.weight.data(), n, n, rhs);

  const AttackResult r = wra_reconstruct(model, 1, observed, WraConfig{});
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += std::pow(r.reconstruction[i] - ls[i], 2);
    den += ls[i] * ls[i];
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(Wra, TwoLayerNetDrivesObjectiveDown) {
  const ModelGraph model = tiny_two_layer(7);
  const Tensor truth = random_tensor(model.input_shape(), 8);
  const Tensor observed = forward_prefix(model, truth, 2);
  const AttackResult r = wra_reconstruct(model, 2, observed, WraConfig{});
  EXPECT_LE(r.objective_trace.size(), 2001u);
  EXPECT_LT(r.objective_trace.back(), 1e-6 * squared_norm(observed.values()));
}

TEST(Wra, ObjectiveIsMonotone) {
  const ModelGraph model = tiny_two_layer(9);
  const Tensor observed = forward_prefix(model, random_tensor(model.input_shape(), 10), 2);
  WraConfig cfg;
  cfg.lambda = 0.01;
  cfg.iterations = 200;
  const AttackResult r = wra_reconstruct(model, 2, observed, cfg);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i) EXPECT_LT(r.objective_trace[i], r.objective_trace[i - 1]);
}

TEST(Wra, ScoresAgainstTruth) {
  const ModelGraph model = invertible_fc(4, 3);
  const Tensor truth = random_tensor(Shape{4}, 4);
  WraConfig cfg;
  cfg.iterations = 5;
  const AttackResult r = wra_reconstruct(model, 1, forward_prefix(model, truth, 1), cfg, &truth);
  ASSERT_TRUE(r.fidelity.has_value());
  EXPECT_GT(r.fidelity->mse, 0.0);
}

TEST(Wra, Errors) {
  const ModelGraph model = invertible_fc(4, 3);
  EXPECT_THROW(wra_reconstruct(model, 1, Tensor(Shape{5}), WraConfig{}), ShapeError);
  Tensor bad(Shape{4});
  bad[0] = std::nan("");
  EXPECT_THROW(wra_reconstruct(model, 1, bad, WraConfig{}), NumericError);
  WraConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(wra_reconstruct(model, 1, Tensor(Shape{4}), cfg), ConfigError);
}

namespace {

// Identity edge prefix: the transmitted tensor is the flattened input.
FunctionOracle identity_oracle(const Shape& shape) {
  return FunctionOracle([shape](std::size_t i) {
    const Tensor x = random_tensor(shape, 1000 + i);
    return QueryPair{x.reshaped(Shape{x.size()}), x};
  });
}

InverseModelSpec linear_decoder(std::size_t n, const Shape& input) {
  InverseModelSpec spec{ModelGraph(Shape{n}, {FullyConnected::make(n, n)}), input, {}};
  spec.train.queries = 64;
  spec.train.epochs = 300;
  spec.train.batch_size = 16;
  spec.train.step_size = 0.5;
  return spec;
}

}  // namespace

TEST(Bina, IdentityPrefixLinearDecoderConverges) {
  const Shape input{1, 2, 3};
  const auto oracle = identity_oracle(input);
  const TrainedDecoder dec = bina_train(oracle, linear_decoder(6, input));
  EXPECT_LT(dec.final_loss, 1e-4 * dec.initial_loss);
  const Tensor x = random_tensor(input, 5);
  const AttackResult r = bina_reconstruct(dec, x.reshaped(Shape{6}), &x);
  EXPECT_EQ(r.reconstruction.shape(), input);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.reconstruction[i], x[i], 0.02);
}

TEST(Bina, TrainingIsDeterministic) {
  const Shape input{1, 2, 2};
  const auto oracle = identity_oracle(input);
  InverseModelSpec spec = linear_decoder(4, input);
  spec.train.epochs = 5;
  const TrainedDecoder a = bina_train(oracle, spec);
  const TrainedDecoder b = bina_train(oracle, spec);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  const Tensor v = random_tensor(Shape{4}, 9);
  EXPECT_EQ(bina_reconstruct(a, v).reconstruction, bina_reconstruct(a, v).reconstruction);
  EXPECT_EQ(bina_reconstruct(a, v).reconstruction, bina_reconstruct(b, v).reconstruction);
}

TEST(Bina, LossTraceDecreases) {
  const Shape input{1, 2, 2};
  const auto oracle = identity_oracle(input);
  InverseModelSpec spec = linear_decoder(4, input);
  spec.train.epochs = 20;
  const TrainedDecoder d = bina_train(oracle, spec);
  ASSERT_FALSE(d.loss_trace.empty());
  EXPECT_LT(d.loss_trace.front(), d.initial_loss);
  for (std::size_t i = 1; i < d.loss_trace.size(); ++i) EXPECT_LT(d.loss_trace[i], d.loss_trace[i - 1]);
}

TEST(Bina, ShapeErrors) {
  const Shape input{1, 2, 2};
  const auto oracle = identity_oracle(input);
  InverseModelSpec spec{ModelGraph(Shape{4}, {FullyConnected::make(4, 5)}), input, {}};
  EXPECT_THROW(bina_train(oracle, spec), ShapeError);
  InverseModelSpec wrong_in{ModelGraph(Shape{3}, {FullyConnected::make(3, 4)}), input, {}};
  wrong_in.train.queries = 4;
  EXPECT_THROW(bina_train(oracle, wrong_in), ShapeError);
  InverseModelSpec ok = linear_decoder(4, input);
  ok.train.epochs = 1;
  const TrainedDecoder d = bina_train(oracle, ok);
  EXPECT_THROW(bina_reconstruct(d, Tensor(Shape{5})), ShapeError);
}

TEST(MirrorDecoder, ReversesSameConvPrefix) {
  const std::vector<Layer> prefix = {Conv::make(3, 8, 3, 1, 1), Relu{}, Conv::make(8, 4, 3, 1, 1)};
  const ModelGraph dec = mirror_decoder(prefix, Shape{4, 8, 8}, Shape{3, 8, 8});
  EXPECT_EQ(dec.output_shape(), (Shape{3, 8, 8}));
  EXPECT_EQ(dec.depth(), 3u);
}

TEST(MirrorDecoder, FallsBackToFullyConnected) {
  const std::vector<Layer> prefix = {Conv::make(3, 4, 3, 1, 1), MaxPool{2}};
  const ModelGraph dec = mirror_decoder(prefix, Shape{4, 4, 4}, Shape{3, 8, 8});
  EXPECT_EQ(dec.output_shape(), (Shape{192}));
}
