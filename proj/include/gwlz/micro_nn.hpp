#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gwlz/grouping.hpp"
#include "gwlz/volume.hpp"

namespace gwlz {

inline constexpr std::uint32_t kDefaultChannels = 9;
inline constexpr std::uint32_t kKernelSize = 3;
inline constexpr std::uint32_t kLayerCount = 2;
inline constexpr double kBnEpsilon = 1e-5;

/// Residual enhancer: conv(1->C, 3x3) -> BN(C) -> ReLU -> conv(C->1, 3x3),
/// zero padding 1, stride 1. C = 9 gives 190 learnable parameters.
struct ModelWeights {
  std::uint32_t channels = kDefaultChannels;
  std::vector<float> conv1_w;  // C x 1 x 3 x 3
  std::vector<float> conv1_b;  // C
  std::vector<float> bn_gamma;
  std::vector<float> bn_beta;
  std::vector<float> bn_running_mean;
  std::vector<float> bn_running_var;
  std::vector<float> conv2_w;  // 1 x C x 3 x 3
  std::vector<float> conv2_b;  // 1

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

std::size_t param_count(const ModelWeights& w);
std::size_t param_count(std::uint32_t channels);
/// Number of binary32 values in the serialized state (learnable + BN running stats).
std::size_t state_count(std::uint32_t channels);
std::size_t weight_blob_size(std::uint32_t channels);

/// Learnable parameters flattened as conv1_w, conv1_b, bn_gamma, bn_beta, conv2_w, conv2_b.
std::vector<double> flatten_params(const ModelWeights& w);
void assign_params(ModelWeights& w, std::span<const double> flat);

/// He-normal conv1, identity BN, zero conv2: the fresh model outputs exactly 0.
ModelWeights init_model(std::uint64_t seed, std::uint32_t channels = kDefaultChannels);

enum class ForwardMode { train, eval };

/// Single-plane forward. Train mode normalizes with the plane's own batch
/// statistics and folds them into the running statistics with `momentum`.
Plane forward(ModelWeights& w, const Plane& input, ForwardMode mode, double momentum = 0.1);
/// Eval-mode forward (running statistics).
Plane forward(const ModelWeights& w, const Plane& input);

/// sum(mask * (pred - target)^2) / max(sum(mask), 1)
double masked_mse(const Plane& pred, const Plane& target, std::span<const std::uint8_t> mask);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  ///< ordered as flatten_params
};

/// Masked MSE of a train-mode forward over the whole batch and its exact
/// gradient. Running statistics are left untouched.
LossAndGradient masked_loss_and_gradient(const ModelWeights& w, std::span<const MaskedPair> batch);

struct TrainConfig {
  std::uint32_t epochs = 300;
  std::uint32_t batch_size = 10;
  double lr0 = 1e-3;
  double lr_gamma = 0.5;
  std::uint32_t lr_step_epochs = 30;
  std::uint64_t seed = 0;
  double bn_momentum = 0.1;
  std::uint32_t channels = kDefaultChannels;
};

void validate(const TrainConfig& cfg);

/// lr0 * gamma^floor(epoch / step)
double learning_rate(const TrainConfig& cfg, std::uint32_t epoch);

struct LossHistory {
  std::vector<double> epoch_loss;  ///< mean masked MSE per epoch
};

struct TrainResult {
  ModelWeights weights;
  LossHistory history;
};

/// Plain mini-batch SGD on masked MSE. Returns nullopt when no pair has a
/// non-empty mask (caller substitutes a zero model).
std::optional<TrainResult> train_group(std::span<const MaskedPair> pairs, const TrainConfig& cfg);

/// Max over learnable parameters of |g_a - g_n| / max(|g_a|, |g_n|, 1e-8),
/// g_n from central differences in double precision.
double grad_check(const ModelWeights& w, const MaskedPair& pair, double epsilon = 1e-4);

std::vector<std::uint8_t> serialize_weights(const ModelWeights& w);
ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes, std::uint32_t channels = kDefaultChannels);

namespace detail {

enum class GradFault { none, negate_conv1 };

/// grad_check with a deliberately broken backward pass, for mutation tests.
double grad_check(const ModelWeights& w, const MaskedPair& pair, double epsilon, GradFault fault);

}  // namespace detail

}  // namespace gwlz
