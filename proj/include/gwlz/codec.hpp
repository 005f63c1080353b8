#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gwlz/volume.hpp"

namespace gwlz {

enum class Predictor : std::uint8_t { lorenzo3d = 0 };

struct CodecConfig {
  double reb = 1e-3;        ///< relative error bound
  double abs_bound = 0.0;   ///< absolute bound e in data units
  Predictor predictor = Predictor::lorenzo3d;
  std::uint32_t max_quant_code = 32767;
};

struct Outlier {
  std::uint64_t index;
  float value;
  friend bool operator==(const Outlier&, const Outlier&) = default;
};

/// Output of the reference compressor. The CRC32 is computed when the
/// payload is serialized and verified when it is parsed.
struct CompressedPayload {
  CodecConfig config;
  Dims dims{0, 0, 0};
  std::vector<Outlier> outliers;
  std::vector<std::uint8_t> code_stream;
};

struct CompressResult {
  CompressedPayload payload;
  Volume decompressed;
};

/// e = reb * range.
double abs_bound_from_reb(double reb, double range);

/// Config for a volume: e from its value range. A constant volume (range 0)
/// falls back to treating the range as 1 so the bound stays positive.
CodecConfig make_config(double reb, const Volume& vol, std::uint32_t max_quant_code = 32767);

/// Order-1 Lorenzo prediction + linear quantization with bin width 2e.
/// Returns the payload together with the decompressed volume it encodes.
CompressResult compress(const Volume& vol, const CodecConfig& cfg);

Volume decompress(const CompressedPayload& payload);
/// Parses (verifying the CRC) and decompresses.
Volume decompress(std::span<const std::uint8_t> payload_bytes);

std::vector<std::uint8_t> serialize_payload(const CompressedPayload& payload);
CompressedPayload parse_payload(std::span<const std::uint8_t> bytes);

std::size_t compressed_size(const CompressedPayload& payload);
/// Input bytes over compressed bytes.
double ratio(const Volume& vol, const CompressedPayload& payload);
double ratio(std::size_t input_bytes, std::size_t compressed_bytes);

namespace detail {

/// Lorenzo prediction from reconstructed values; neighbors outside the volume count as 0.
double lorenzo_predict(std::span<const float> rec, const Dims& dims, std::size_t i, std::size_t j, std::size_t k);
/// Round half away from zero.
double round_half_away(double v);
/// Decoded symbols of the code stream (0 = outlier, otherwise q + max_quant_code + 1).
std::vector<std::uint32_t> quant_symbols(const CompressedPayload& payload);

}  // namespace detail

}  // namespace gwlz
