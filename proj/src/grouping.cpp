#include "gwlz/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "gwlz/error.hpp"

namespace gwlz {

GroupStrategy parse_group_strategy(const std::string& name) {
  if (name == "quantile") return GroupStrategy::quantile;
  if (name == "equal-width" || name == "equal_width") return GroupStrategy::equal_width;
  throw ConfigError(fmt::format("unknown grouping strategy '{}'", name));
}

std::string to_string(GroupStrategy s) { return s == GroupStrategy::quantile ? "quantile" : "equal-width"; }

std::size_t MaskedPair::mask_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

GroupSpec build_spec(const Volume& decompressed, std::uint32_t n_groups, GroupStrategy strategy) {
  if (n_groups == 0) throw ConfigError("number of groups must be >= 1");
  GroupSpec spec;
  spec.n_groups = n_groups;
  spec.strategy = strategy;
  if (n_groups == 1) return spec;
  spec.boundaries.reserve(n_groups - 1);

  const auto values = decompressed.values();
  if (strategy == GroupStrategy::equal_width) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double min = *lo, max = *hi;
    for (std::uint32_t k = 1; k < n_groups; ++k) spec.boundaries.push_back(min + (max - min) * double(k) / double(n_groups));
    return spec;
  }

  std::vector<float> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  for (std::uint32_t k = 1; k < n_groups; ++k) {
    // Quantile position p = k*n/n_groups. Integral p sits between order
    // statistics p and p+1 (1-based), so take their midpoint; otherwise the
    // order statistic ceil(p) straddles it.
    const std::size_t num = static_cast<std::size_t>(k) * n;
    const std::size_t p = num / n_groups;
    double b;
    if (num % n_groups == 0)
      b = p == 0 ? sorted.front() : 0.5 * (double(sorted[p - 1]) + double(sorted[std::min(p, n - 1)]));
    else
      b = sorted[p];
    spec.boundaries.push_back(b);
  }
  return spec;
}

std::uint32_t assign(float value, const GroupSpec& spec) {
  const auto it = std::upper_bound(spec.boundaries.begin(), spec.boundaries.end(), static_cast<double>(value));
  return static_cast<std::uint32_t>(it - spec.boundaries.begin());
}

Volume residual(const Volume& original, const Volume& decompressed) {
  if (original.dims() != decompressed.dims())
    throw DimensionError(fmt::format("original {} and decompressed {} differ in shape", to_string(original.dims()),
                                     to_string(decompressed.dims())));
  std::vector<float> r(original.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = static_cast<float>(static_cast<double>(original[i]) - static_cast<double>(decompressed[i]));
  return Volume(original.dims(), std::move(r));
}

GroupStats compute_stats_from_residual(const Volume& decompressed, const Volume& res, const GroupSpec& spec) {
  if (decompressed.dims() != res.dims()) throw DimensionError("decompressed and residual volumes differ in shape");
  GroupStats stats(spec.n_groups);
  for (std::size_t i = 0; i < decompressed.size(); ++i) {
    const float v = decompressed[i];
    auto& s = stats[assign(v, spec)];
    if (s.count == 0) {
      s.in_min = s.in_max = v;
    } else {
      s.in_min = std::min(s.in_min, v);
      s.in_max = std::max(s.in_max, v);
    }
    s.res_scale = std::max(s.res_scale, std::abs(res[i]));
    ++s.count;
  }
  return stats;
}

GroupStats compute_stats(const Volume& original, const Volume& decompressed, const GroupSpec& spec) {
  return compute_stats_from_residual(decompressed, residual(original, decompressed), spec);
}

float normalize_input(float value, const GroupStat& stat) {
  if (!(stat.in_max > stat.in_min)) return 0.0f;
  const double t = (double(value) - double(stat.in_min)) / (double(stat.in_max) - double(stat.in_min));
  return static_cast<float>(std::clamp(t, 0.0, 1.0));
}

MaskedPair masked_input(const Plane& dec_slice, std::uint32_t group, const GroupSpec& spec, const GroupStat& stat) {
  MaskedPair out;
  out.input = {dec_slice.rows, dec_slice.cols, std::vector<float>(dec_slice.values.size(), 0.0f)};
  out.mask.assign(dec_slice.values.size(), 0);
  for (std::size_t i = 0; i < dec_slice.values.size(); ++i) {
    if (assign(dec_slice.values[i], spec) != group) continue;
    out.mask[i] = 1;
    out.input.values[i] = normalize_input(dec_slice.values[i], stat);
  }
  return out;
}

MaskedPair masked_pair(const Plane& dec_slice, const Plane& res_slice, std::uint32_t group, const GroupSpec& spec,
                       const GroupStat& stat) {
  if (dec_slice.rows != res_slice.rows || dec_slice.cols != res_slice.cols)
    throw DimensionError("decompressed and residual slices differ in shape");
  MaskedPair out = masked_input(dec_slice, group, spec, stat);
  out.target = {res_slice.rows, res_slice.cols, std::vector<float>(res_slice.values.size(), 0.0f)};
  if (stat.res_scale > 0.0f) {
    const double inv = 1.0 / double(stat.res_scale);
    for (std::size_t i = 0; i < out.mask.size(); ++i)
      if (out.mask[i]) out.target.values[i] = static_cast<float>(std::clamp(double(res_slice.values[i]) * inv, -1.0, 1.0));
  }
  return out;
}

}  // namespace gwlz
