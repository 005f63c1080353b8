#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gwlz/grouping.hpp"
#include "gwlz/micro_nn.hpp"
#include "gwlz/volume.hpp"

namespace gwlz {

struct ArchDescriptor {
  std::uint8_t channels = kDefaultChannels;
  std::uint8_t kernel = kKernelSize;
  std::uint8_t layers = kLayerCount;

  friend bool operator==(const ArchDescriptor&, const ArchDescriptor&) = default;
};

/// Group partition, per-group statistics and one enhancer per group. A
/// missing model is a zero-model: that group's predicted residual is 0.
struct EnhancerBundle {
  GroupSpec spec;
  GroupStats stats;
  std::vector<std::optional<ModelWeights>> models;
  ArchDescriptor hyper;

  // Training metadata, in memory only.
  TrainConfig train;
  std::vector<LossHistory> histories;  ///< empty for untrained groups; kept for diverged ones

  std::size_t trained_count() const;
  /// Final-epoch loss of group g, or nullopt for a zero-model.
  std::optional<double> final_loss(std::size_t g) const;
  /// Unweighted mean of final losses over trained groups (0 if none).
  double mean_final_loss() const;
};

struct ClampMode {
  enum class Kind { none, bound2e };
  Kind kind = Kind::none;
  double e_abs = 0.0;

  static ClampMode none() { return {}; }
  static ClampMode bound2e(double e_abs);
};

ClampMode parse_clamp(const std::string& name, double e_abs);

struct FitOptions {
  std::uint32_t n_groups = 20;
  GroupStrategy strategy = GroupStrategy::quantile;
  TrainConfig train;
  int axis = 0;
  unsigned threads = 1;
  /// Groups with fewer elements get a zero-model.
  std::uint64_t min_group_count = 64;
};

/// Trains one enhancer per group on the residual original - decompressed.
/// Group g is seeded with train.seed ^ g, so results do not depend on threads.
EnhancerBundle fit(const Volume& original, const Volume& decompressed, const FitOptions& opts);

/// Bundle with the given grouping and every group a zero-model.
EnhancerBundle zero_bundle(const GroupSpec& spec, const GroupStats& stats);

/// Residual map predicted slice by slice: each element receives the output of
/// its own group's model scaled by that group's residual scale.
Volume predict_residual(const EnhancerBundle& bundle, const Volume& decompressed, int axis, unsigned threads = 1);

/// decompressed + residual. bound2e clamps the residual to [-e, e] so that the
/// enhanced error stays within 2e wherever the codec bound e held.
Volume apply_residual(const Volume& decompressed, const Volume& residual, const ClampMode& clamp);

Volume enhance(const Volume& decompressed, const EnhancerBundle& bundle, const ClampMode& clamp, int axis, unsigned threads = 1);

}  // namespace gwlz
