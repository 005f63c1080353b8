#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gwlz/codec.hpp"
#include "gwlz/enhancer.hpp"

namespace gwlz {

inline constexpr std::uint16_t kArchiveVersion = 1;
inline constexpr std::uint16_t kFlagHasEnhancer = 1u << 0;
inline constexpr std::uint16_t kFlagClampRecommended = 1u << 1;

/// PSNR with and without enhancement, measured where the original was available.
struct QualityRecord {
  double psnr_base = 0.0;
  double psnr_enhanced = 0.0;
};

/// Parsed .gwlz file. Section byte ranges are kept for overhead accounting.
struct GwlzArchive {
  std::uint16_t version = kArchiveVersion;
  std::uint16_t flags = 0;
  Dims dims{0, 0, 0};
  double reb = 0.0;
  double e_abs = 0.0;
  std::uint8_t axis = 0;
  CompressedPayload payload;
  std::optional<EnhancerBundle> bundle;
  QualityRecord quality;

  std::size_t payload_bytes = 0;   ///< serialized payload section, excluding its length prefix
  std::size_t enhancer_bytes = 0;  ///< serialized enhancer blob, excluding its length prefix
  std::size_t file_bytes = 0;

  bool has_enhancer() const { return (flags & kFlagHasEnhancer) != 0; }
  bool clamp_recommended() const { return (flags & kFlagClampRecommended) != 0; }
};

/// Enhancer blob: grouping, per-group stats and flags, architecture and the
/// weights of every non-zero group.
std::vector<std::uint8_t> encode_enhancer_blob(const EnhancerBundle& bundle);
EnhancerBundle decode_enhancer_blob(std::span<const std::uint8_t> bytes);
/// Total weight bytes in a bundle's blob.
std::size_t weight_bytes(const EnhancerBundle& bundle);

std::vector<std::uint8_t> encode_archive(const CompressedPayload& payload, const EnhancerBundle* bundle,
                                         const QualityRecord& quality, int axis, bool clamp_recommended = false);
GwlzArchive parse_archive(std::span<const std::uint8_t> bytes);

std::size_t write_archive(const std::filesystem::path& path, const CompressedPayload& payload, const EnhancerBundle* bundle,
                          const QualityRecord& quality, int axis, bool clamp_recommended = false);
GwlzArchive read_archive(const std::filesystem::path& path);

/// Enhancer-section bytes over payload-section bytes; 0 without an enhancer.
double overhead_ratio(const GwlzArchive& archive);

/// Facts about the decompressed data a sidecar was fit on.
struct Provenance {
  Dims dims{0, 0, 0};
  std::uint8_t axis = 0;
  double e_abs = 0.0;
};

struct Sidecar {
  Provenance provenance;
  EnhancerBundle bundle;
  std::size_t enhancer_bytes = 0;
};

std::vector<std::uint8_t> encode_sidecar(const EnhancerBundle& bundle, const Provenance& provenance);
Sidecar parse_sidecar(std::span<const std::uint8_t> bytes);
std::size_t write_sidecar(const std::filesystem::path& path, const EnhancerBundle& bundle, const Provenance& provenance);
Sidecar read_sidecar(const std::filesystem::path& path);

/// Applies a sidecar to decompressed data, checking it matches the provenance dims.
Volume apply_sidecar(const Sidecar& sidecar, const Volume& decompressed, const ClampMode& clamp, unsigned threads = 1);

}  // namespace gwlz
