#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gwlz/error.hpp"
#include "gwlz/micro_nn.hpp"

using namespace gwlz;

namespace {

ModelWeights random_model(std::mt19937_64& rng, std::uint32_t channels = kDefaultChannels) {
  ModelWeights w = init_model(rng(), channels);
  std::normal_distribution<double> n(0.0, 0.5);
  auto flat = flatten_params(w);
  for (auto& v : flat) v = n(rng);
  // Keep BN scales away from zero so the check is well conditioned.
  for (std::uint32_t c = 0; c < channels; ++c) flat[10 * channels + c] = 0.5 + std::abs(flat[10 * channels + c]);
  assign_params(w, flat);
  std::uniform_real_distribution<float> u(0.1f, 2.0f);
  for (auto& v : w.bn_running_var) v = u(rng);
  for (auto& v : w.bn_running_mean) v = u(rng) - 1.0f;
  return w;
}

MaskedPair random_pair(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double keep = 0.7) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  MaskedPair p{{rows, cols, {}}, {rows, cols, {}}, {}};
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const bool in = u(rng) < keep;
    p.mask.push_back(in ? 1 : 0);
    p.input.values.push_back(in ? u(rng) : 0.0f);
    p.target.values.push_back(in ? 2.0f * u(rng) - 1.0f : 0.0f);
  }
  return p;
}

}  // namespace

TEST(Model, ParameterCounts) {
  EXPECT_EQ(param_count(init_model(1)), 190u);
  EXPECT_EQ(state_count(9), 208u);
  EXPECT_EQ(weight_blob_size(9), 832u);
}

TEST(Model, InitIsDeterministicAndSilent) {
  EXPECT_EQ(init_model(5), init_model(5));
  EXPECT_NE(init_model(5), init_model(6));
  std::mt19937_64 rng(2);
  const auto p = random_pair(rng, 7, 9, 1.0);
  ModelWeights w = init_model(5);
  for (float v : forward(w, p.input).values) EXPECT_EQ(v, 0.0f);
  for (float v : forward(w, p.input, ForwardMode::train).values) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, ConstantOutputFromBias) {
  ModelWeights w = init_model(3);
  w.conv2_b[0] = 0.75f;
  const Plane zero{5, 6, std::vector<float>(30, 0.0f)};
  for (float v : forward(w, zero).values) EXPECT_EQ(v, 0.75f);
}

TEST(Forward, ShapePreserved) {
  std::mt19937_64 rng(4);
  const ModelWeights w = random_model(rng);
  const auto p = random_pair(rng, 17, 23);
  const Plane out = forward(w, p.input);
  EXPECT_EQ(out.rows, 17u);
  EXPECT_EQ(out.cols, 23u);
  EXPECT_EQ(out.values.size(), 17u * 23u);
}

TEST(Forward, TooSmallInput) {
  const ModelWeights w = init_model(1);
  EXPECT_THROW(forward(w, Plane{2, 5, std::vector<float>(10)}), DimensionError);
}

TEST(Forward, HandComputedSingleChannel) {
  // One channel, conv1 = centre tap 1, BN identity on running stats (0, 1),
  // conv2 = centre tap 2, bias 0.5: output = 2 * relu(x / sqrt(1 + eps)) + 0.5.
  ModelWeights w = init_model(0, 1);
  std::fill(w.conv1_w.begin(), w.conv1_w.end(), 0.0f);
  w.conv1_w[4] = 1.0f;
  w.conv2_w[4] = 2.0f;
  w.conv2_b[0] = 0.5f;
  const Plane in{3, 3, {-1, 0, 1, 2, 3, -4, 5, 6, -7}};
  const Plane out = forward(w, in);
  for (std::size_t i = 0; i < 9; ++i) {
    const double expect = 2.0 * std::max(0.0, in.values[i] / std::sqrt(1.0 + kBnEpsilon)) + 0.5;
    EXPECT_NEAR(out.values[i], expect, 1e-5);
  }
}

TEST(MaskedMse, Examples) {
  const Plane a{1, 2, {1, 1}}, b{1, 2, {0, 0}};
  EXPECT_EQ(masked_mse(a, a, std::vector<std::uint8_t>{1, 1}), 0.0);
  EXPECT_EQ(masked_mse(a, b, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_EQ(masked_mse(a, b, std::vector<std::uint8_t>{0, 0}), 0.0);
}

TEST(GradCheck, RandomModels) {
  std::mt19937_64 rng(123);
  for (int t = 0; t < 10; ++t) {
    const ModelWeights w = random_model(rng);
    const auto p = random_pair(rng, 8, 8);
    EXPECT_LT(grad_check(w, p), 1e-3) << t;
  }
}

TEST(GradCheck, ZeroMaskPasses) {
  std::mt19937_64 rng(8);
  const ModelWeights w = random_model(rng);
  auto p = random_pair(rng, 6, 6, 0.0);
  const auto lg = masked_loss_and_gradient(w, std::span(&p, 1));
  for (double g : lg.gradient) EXPECT_EQ(g, 0.0);
  EXPECT_LT(grad_check(w, p), 1e-3);
}

TEST(GradCheck, NegatedBackwardIsCaught) {
  std::mt19937_64 rng(77);
  const ModelWeights w = random_model(rng);
  const auto p = random_pair(rng, 8, 8);
  EXPECT_NEAR(detail::grad_check(w, p, 1e-4, detail::GradFault::negate_conv1), 2.0, 1e-2);
}

TEST(MaskIsolation, OutOfMaskTargetsIgnored) {
  std::mt19937_64 rng(31);
  const ModelWeights w = random_model(rng);
  std::vector<MaskedPair> batch{random_pair(rng, 7, 7), random_pair(rng, 7, 7)};
  const auto before = masked_loss_and_gradient(w, batch);
  for (auto& p : batch)
    for (std::size_t i = 0; i < p.mask.size(); ++i)
      if (!p.mask[i]) p.target.values[i] = 1e6f * float(i + 1);
  const auto after = masked_loss_and_gradient(w, batch);
  EXPECT_EQ(before.loss, after.loss);
  EXPECT_EQ(before.gradient, after.gradient);
}

TEST(Schedule, StepDecay) {
  TrainConfig c;
  EXPECT_EQ(learning_rate(c, 0), 1e-3);
  EXPECT_EQ(learning_rate(c, 29), 1e-3);
  EXPECT_EQ(learning_rate(c, 30), 5e-4);
  EXPECT_DOUBLE_EQ(learning_rate(c, 300), 1e-3 * std::pow(0.5, 10));
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = TrainConfig{};
  c.lr0 = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Train, ZeroTargetLeavesParametersAlone) {
  std::mt19937_64 rng(12);
  std::vector<MaskedPair> pairs;
  for (int i = 0; i < 3; ++i) {
    auto p = random_pair(rng, 6, 6);
    std::fill(p.target.values.begin(), p.target.values.end(), 0.0f);
    pairs.push_back(p);
  }
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 4;
  const auto r = train_group(pairs, cfg);
  ASSERT_TRUE(r);
  for (double l : r->history.epoch_loss) EXPECT_EQ(l, 0.0);
  EXPECT_EQ(flatten_params(r->weights), flatten_params(init_model(cfg.seed, cfg.channels)));
}

TEST(Train, FitsConstantTarget) {
  MaskedPair p{{6, 6, std::vector<float>(36, 0.4f)}, {6, 6, std::vector<float>(36, 0.5f)}, std::vector<std::uint8_t>(36, 1)};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr0 = 5e-2;
  cfg.lr_gamma = 1.0;
  const auto r = train_group(std::span(&p, 1), cfg);
  ASSERT_TRUE(r);
  EXPECT_LT(r->history.epoch_loss.back(), 1e-3);
  const Plane out = forward(r->weights, p.input);
  EXPECT_LT(masked_mse(out, p.target, p.mask), 1e-3);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
  std::mt19937_64 rng(21);
  std::vector<MaskedPair> pairs;
  for (int i = 0; i < 12; ++i) {
    auto p = random_pair(rng, 10, 10, 0.8);
    // Learnable structure: target follows the input.
    for (std::size_t k = 0; k < p.mask.size(); ++k)
      if (p.mask[k]) p.target.values[k] = 0.8f * p.input.values[k] - 0.3f;
    pairs.push_back(p);
  }
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr0 = 1e-2;
  cfg.seed = 9;
  const auto a = train_group(pairs, cfg);
  const auto b = train_group(pairs, cfg);
  ASSERT_TRUE(a && b);
  EXPECT_LT(a->history.epoch_loss.back(), a->history.epoch_loss.front());
  EXPECT_EQ(a->weights, b->weights);
  EXPECT_EQ(a->history.epoch_loss, b->history.epoch_loss);
}

TEST(Train, AllMasksEmpty) {
  std::mt19937_64 rng(1);
  std::vector<MaskedPair> pairs{random_pair(rng, 5, 5, 0.0)};
  EXPECT_FALSE(train_group(pairs, TrainConfig{}).has_value());
}

TEST(Weights, RoundTrip) {
  std::mt19937_64 rng(19);
  const ModelWeights w = random_model(rng);
  const auto bytes = serialize_weights(w);
  EXPECT_EQ(bytes.size(), 832u);
  EXPECT_EQ(deserialize_weights(bytes), w);
}

TEST(Weights, BadInput) {
  std::mt19937_64 rng(19);
  auto bytes = serialize_weights(random_model(rng));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(deserialize_weights(truncated), FormatError);
  // NaN in conv1_w[0].
  bytes[0] = 0x00;
  bytes[1] = 0x00;
  bytes[2] = 0xC0;
  bytes[3] = 0x7F;
  EXPECT_THROW(deserialize_weights(bytes), FormatError);
}
