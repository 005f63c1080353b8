#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gwlz/volume.hpp"

namespace gwlz {

enum class GroupStrategy : std::uint8_t { quantile = 0, equal_width = 1 };

GroupStrategy parse_group_strategy(const std::string& name);
std::string to_string(GroupStrategy s);

/// Value-magnitude partition of decompressed data into n_groups intervals
/// [b_{g-1}, b_g); the first is open below, the last closed above.
struct GroupSpec {
  std::uint32_t n_groups = 1;
  std::vector<double> boundaries;  ///< n_groups - 1 ascending thresholds
  GroupStrategy strategy = GroupStrategy::quantile;

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

struct GroupStat {
  float in_min = 0.0f;     ///< over decompressed values in the group
  float in_max = 0.0f;
  float res_scale = 0.0f;  ///< max |residual| in the group
  std::uint64_t count = 0;

  friend bool operator==(const GroupStat&, const GroupStat&) = default;
};

using GroupStats = std::vector<GroupStat>;

/// Normalized training sample for one group on one slice. Out-of-group
/// entries are zero placeholders and carry mask 0.
struct MaskedPair {
  Plane input;
  Plane target;
  std::vector<std::uint8_t> mask;

  std::size_t mask_count() const;
};

GroupSpec build_spec(const Volume& decompressed, std::uint32_t n_groups, GroupStrategy strategy);

/// Ties at a boundary go to the higher group.
std::uint32_t assign(float value, const GroupSpec& spec);

/// Element-wise residual original - decompressed.
Volume residual(const Volume& original, const Volume& decompressed);

GroupStats compute_stats(const Volume& original, const Volume& decompressed, const GroupSpec& spec);
/// Same, from a precomputed residual volume.
GroupStats compute_stats_from_residual(const Volume& decompressed, const Volume& residual, const GroupSpec& spec);

/// Min-max normalized input on the mask (0 if the group range is degenerate).
float normalize_input(float value, const GroupStat& stat);

MaskedPair masked_pair(const Plane& dec_slice, const Plane& res_slice, std::uint32_t group, const GroupSpec& spec,
                       const GroupStat& stat);

/// Input and mask only, for inference.
MaskedPair masked_input(const Plane& dec_slice, std::uint32_t group, const GroupSpec& spec, const GroupStat& stat);

}  // namespace gwlz
