#include "gwlz/container.hpp"

#include <cmath>

#include <fmt/core.h>

#include "gwlz/byte_io.hpp"
#include "gwlz/error.hpp"

namespace gwlz {

namespace {

constexpr std::string_view kArchiveMagic = "GWLZ";
constexpr std::string_view kSidecarMagic = "GWLE";
constexpr std::uint16_t kKnownFlags = kFlagHasEnhancer | kFlagClampRecommended;

void put_dims(ByteWriter& w, const Dims& dims) {
  for (auto d : dims) {
    if (d > 0xffffffffull) throw ConfigError("volume extent does not fit in 32 bits");
    w.put_u32(static_cast<std::uint32_t>(d));
  }
}

Dims get_dims(ByteReader& r) {
  Dims dims{};
  for (auto& d : dims) {
    d = r.get_u32();
    if (d == 0) throw FormatError("zero extent in header");
  }
  return dims;
}

void check_version(std::uint16_t version, std::string_view what) {
  if (version != kArchiveVersion) throw VersionError(fmt::format("unsupported {} version {}", what, version));
}

std::uint8_t get_axis(ByteReader& r) {
  const std::uint8_t axis = r.get_u8();
  if (axis > 2) throw FormatError(fmt::format("invalid slice axis {}", axis));
  return axis;
}

std::uint64_t bundle_elements(const EnhancerBundle& b) {
  std::uint64_t n = 0;
  for (const auto& s : b.stats) n += s.count;
  return n;
}

}  // namespace

std::size_t weight_bytes(const EnhancerBundle& bundle) {
  return bundle.trained_count() * weight_blob_size(bundle.hyper.channels);
}

std::vector<std::uint8_t> encode_enhancer_blob(const EnhancerBundle& b) {
  const std::uint32_t n = b.spec.n_groups;
  if (n == 0 || b.spec.boundaries.size() != n - 1 || b.stats.size() != n || b.models.size() != n)
    throw ConfigError("enhancer bundle is inconsistent with its group count");
  ByteWriter w;
  w.put_u32(n);
  w.put_u8(static_cast<std::uint8_t>(b.spec.strategy));
  for (double v : b.spec.boundaries) w.put_f64(v);
  for (std::uint32_t g = 0; g < n; ++g) {
    const auto& s = b.stats[g];
    w.put_f32(s.in_min);
    w.put_f32(s.in_max);
    w.put_f32(s.res_scale);
    w.put_u64(s.count);
    w.put_u8(b.models[g] ? 1 : 0);
  }
  w.put_u8(b.hyper.channels);
  w.put_u8(b.hyper.kernel);
  w.put_u8(b.hyper.layers);
  for (const auto& m : b.models) {
    if (!m) continue;
    if (m->channels != b.hyper.channels) throw ConfigError("model channel count differs from the bundle architecture");
    w.put_bytes(serialize_weights(*m));
  }
  return w.take();
}

EnhancerBundle decode_enhancer_blob(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  EnhancerBundle b;
  const std::uint32_t n = r.get_u32();
  if (n == 0) throw FormatError("enhancer declares zero groups");
  // Each group needs at least its 21-byte stats record.
  if (n > r.remaining() / 21) throw FormatError("group count exceeds enhancer size");
  b.spec.n_groups = n;
  const std::uint8_t strategy = r.get_u8();
  if (strategy > 1) throw FormatError(fmt::format("unknown grouping strategy id {}", strategy));
  b.spec.strategy = static_cast<GroupStrategy>(strategy);
  b.spec.boundaries.resize(n - 1);
  for (auto& v : b.spec.boundaries) {
    v = r.get_f64();
    if (!std::isfinite(v)) throw FormatError("non-finite group boundary");
  }
  for (std::size_t i = 1; i < b.spec.boundaries.size(); ++i)
    if (b.spec.boundaries[i] < b.spec.boundaries[i - 1]) throw FormatError("group boundaries are not ascending");
  b.stats.resize(n);
  std::vector<bool> present(n);
  for (std::uint32_t g = 0; g < n; ++g) {
    auto& s = b.stats[g];
    s.in_min = r.get_f32();
    s.in_max = r.get_f32();
    s.res_scale = r.get_f32();
    s.count = r.get_u64();
    const std::uint8_t flag = r.get_u8();
    if (flag > 1) throw FormatError(fmt::format("invalid model flag {} for group {}", flag, g));
    if (!std::isfinite(s.in_min) || !std::isfinite(s.in_max) || !std::isfinite(s.res_scale) || s.res_scale < 0.0f)
      throw FormatError(fmt::format("invalid statistics for group {}", g));
    present[g] = flag == 1;
  }
  b.hyper.channels = r.get_u8();
  b.hyper.kernel = r.get_u8();
  b.hyper.layers = r.get_u8();
  if (b.hyper.channels == 0 || b.hyper.kernel != kKernelSize || b.hyper.layers != kLayerCount)
    throw FormatError(fmt::format("unsupported enhancer architecture (channels {}, kernel {}, layers {})", b.hyper.channels,
                                  b.hyper.kernel, b.hyper.layers));
  b.models.resize(n);
  b.histories.resize(n);
  const std::size_t blob = weight_blob_size(b.hyper.channels);
  for (std::uint32_t g = 0; g < n; ++g)
    if (present[g]) b.models[g] = deserialize_weights(r.get_bytes(blob), b.hyper.channels);
  if (!r.at_end()) throw FormatError("trailing bytes after enhancer weights");
  b.train.channels = b.hyper.channels;
  return b;
}

std::vector<std::uint8_t> encode_archive(const CompressedPayload& payload, const EnhancerBundle* bundle,
                                         const QualityRecord& quality, int axis, bool clamp_recommended) {
  if (axis < 0 || axis > 2) throw ConfigError("slice axis must be 0, 1 or 2");
  if (bundle && bundle_elements(*bundle) != element_count(payload.dims))
    throw DimensionError("enhancer bundle and payload describe different volumes");
  ByteWriter w;
  w.put_tag(kArchiveMagic);
  w.put_u16(kArchiveVersion);
  std::uint16_t flags = 0;
  if (bundle) flags |= kFlagHasEnhancer;
  if (clamp_recommended) flags |= kFlagClampRecommended;
  w.put_u16(flags);
  put_dims(w, payload.dims);
  w.put_f64(payload.config.reb);
  w.put_f64(payload.config.abs_bound);
  w.put_u8(static_cast<std::uint8_t>(axis));
  const auto payload_bytes = serialize_payload(payload);
  w.put_u64(payload_bytes.size());
  w.put_bytes(payload_bytes);
  if (bundle) {
    const auto blob = encode_enhancer_blob(*bundle);
    w.put_u64(blob.size());
    w.put_bytes(blob);
  }
  w.put_f64(quality.psnr_base);
  w.put_f64(quality.psnr_enhanced);
  seal_with_crc(w);
  return w.take();
}

GwlzArchive parse_archive(std::span<const std::uint8_t> bytes) {
  ByteReader r(verify_crc(bytes, "archive"));
  GwlzArchive a;
  r.expect_tag(kArchiveMagic, "GWLZ archive");
  a.version = r.get_u16();
  check_version(a.version, "archive");
  a.flags = r.get_u16();
  if (a.flags & ~kKnownFlags) throw FormatError(fmt::format("unknown archive flags {:#06x}", a.flags));
  a.dims = get_dims(r);
  a.reb = r.get_f64();
  a.e_abs = r.get_f64();
  a.axis = get_axis(r);
  const auto payload = r.get_section();
  a.payload_bytes = payload.size();
  a.payload = parse_payload(payload);
  if (a.payload.dims != a.dims) throw FormatError("payload dims disagree with archive header");
  if (a.payload.config.abs_bound != a.e_abs || a.payload.config.reb != a.reb)
    throw FormatError("payload error bound disagrees with archive header");
  if (a.has_enhancer()) {
    const auto blob = r.get_section();
    a.enhancer_bytes = blob.size();
    a.bundle = decode_enhancer_blob(blob);
    if (bundle_elements(*a.bundle) != element_count(a.dims)) throw FormatError("enhancer group counts do not cover the volume");
  }
  a.quality.psnr_base = r.get_f64();
  a.quality.psnr_enhanced = r.get_f64();
  if (!r.at_end()) throw FormatError("trailing bytes in archive");
  a.file_bytes = bytes.size();
  return a;
}

std::size_t write_archive(const std::filesystem::path& path, const CompressedPayload& payload, const EnhancerBundle* bundle,
                          const QualityRecord& quality, int axis, bool clamp_recommended) {
  const auto bytes = encode_archive(payload, bundle, quality, axis, clamp_recommended);
  write_file(path, bytes);
  return bytes.size();
}

GwlzArchive read_archive(const std::filesystem::path& path) { return parse_archive(read_file(path)); }

double overhead_ratio(const GwlzArchive& archive) {
  if (!archive.has_enhancer() || archive.payload_bytes == 0) return 0.0;
  return static_cast<double>(archive.enhancer_bytes) / static_cast<double>(archive.payload_bytes);
}

std::vector<std::uint8_t> encode_sidecar(const EnhancerBundle& bundle, const Provenance& prov) {
  if (prov.axis > 2) throw ConfigError("slice axis must be 0, 1 or 2");
  if (bundle_elements(bundle) != element_count(prov.dims)) throw DimensionError("bundle does not match sidecar dims");
  ByteWriter w;
  w.put_tag(kSidecarMagic);
  w.put_u16(kArchiveVersion);
  put_dims(w, prov.dims);
  w.put_u8(prov.axis);
  w.put_f64(prov.e_abs);
  const auto blob = encode_enhancer_blob(bundle);
  w.put_u64(blob.size());
  w.put_bytes(blob);
  seal_with_crc(w);
  return w.take();
}

Sidecar parse_sidecar(std::span<const std::uint8_t> bytes) {
  ByteReader r(verify_crc(bytes, "sidecar"));
  r.expect_tag(kSidecarMagic, "GWLZ sidecar");
  check_version(r.get_u16(), "sidecar");
  Sidecar s;
  s.provenance.dims = get_dims(r);
  s.provenance.axis = get_axis(r);
  s.provenance.e_abs = r.get_f64();
  const auto blob = r.get_section();
  s.enhancer_bytes = blob.size();
  s.bundle = decode_enhancer_blob(blob);
  if (!r.at_end()) throw FormatError("trailing bytes in sidecar");
  if (bundle_elements(s.bundle) != element_count(s.provenance.dims)) throw FormatError("enhancer group counts do not cover the volume");
  return s;
}

std::size_t write_sidecar(const std::filesystem::path& path, const EnhancerBundle& bundle, const Provenance& provenance) {
  const auto bytes = encode_sidecar(bundle, provenance);
  write_file(path, bytes);
  return bytes.size();
}

Sidecar read_sidecar(const std::filesystem::path& path) { return parse_sidecar(read_file(path)); }

Volume apply_sidecar(const Sidecar& sidecar, const Volume& decompressed, const ClampMode& clamp, unsigned threads) {
  if (decompressed.dims() != sidecar.provenance.dims)
    throw DimensionError(fmt::format("sidecar was fit on {} data, got {}", to_string(sidecar.provenance.dims),
                                     to_string(decompressed.dims())));
  return enhance(decompressed, sidecar.bundle, clamp, sidecar.provenance.axis, threads);
}

}  // namespace gwlz
