#include "gwlz/codec.hpp"

#include <cmath>

#include <fmt/core.h>

#include "gwlz/byte_io.hpp"
#include "gwlz/entropy.hpp"
#include "gwlz/error.hpp"

namespace gwlz {

namespace {

constexpr char kPayloadMagic[] = "GWLP";
constexpr std::uint16_t kPayloadVersion = 1;

void check_config(const CodecConfig& cfg) {
  if (!(cfg.abs_bound > 0.0) || !std::isfinite(cfg.abs_bound))
    throw ConfigError(fmt::format("absolute error bound must be > 0 (got {})", cfg.abs_bound));
  if (cfg.max_quant_code < 1) throw ConfigError("max_quant_code must be >= 1");
  if (cfg.max_quant_code > (1u << 30)) throw ConfigError("max_quant_code must be <= 2^30");
  if (cfg.predictor != Predictor::lorenzo3d) throw ConfigError("unknown predictor");
}

// Shared by both directions so reconstruction is bit-identical.
inline float reconstruct(double pred, double e, std::int64_t q) {
  return static_cast<float>(pred + (2.0 * e) * static_cast<double>(q));
}

}  // namespace

namespace detail {

double lorenzo_predict(std::span<const float> rec, const Dims& dims, std::size_t i, std::size_t j, std::size_t k) {
  const std::size_t s0 = dims[1] * dims[2], s1 = dims[2];
  const std::size_t idx = i * s0 + j * s1 + k;
  auto at = [&](bool ok, std::size_t off) -> double { return ok ? static_cast<double>(rec[idx - off]) : 0.0; };
  const bool bi = i > 0, bj = j > 0, bk = k > 0;
  return at(bi, s0) + at(bj, s1) + at(bk, 1) - at(bi && bj, s0 + s1) - at(bi && bk, s0 + 1) - at(bj && bk, s1 + 1) +
         at(bi && bj && bk, s0 + s1 + 1);
}

double round_half_away(double v) { return std::round(v); }

std::vector<std::uint32_t> quant_symbols(const CompressedPayload& payload) {
  auto symbols = decode_symbols(payload.code_stream);
  if (symbols.size() != element_count(payload.dims))
    throw FormatError(fmt::format("code stream holds {} codes, volume needs {}", symbols.size(), element_count(payload.dims)));
  return symbols;
}

}  // namespace detail

double abs_bound_from_reb(double reb, double range) { return reb * range; }

CodecConfig make_config(double reb, const Volume& vol, std::uint32_t max_quant_code) {
  if (!(reb > 0.0) || !std::isfinite(reb)) throw ConfigError(fmt::format("relative error bound must be > 0 (got {})", reb));
  const double range = vrange(vol);
  CodecConfig cfg;
  cfg.reb = reb;
  cfg.abs_bound = abs_bound_from_reb(reb, range > 0.0 ? range : 1.0);
  cfg.max_quant_code = max_quant_code;
  check_config(cfg);
  return cfg;
}

CompressResult compress(const Volume& vol, const CodecConfig& cfg) {
  check_config(cfg);
  const Dims& dims = vol.dims();
  const std::size_t n = vol.size();
  if (n == 0) throw ConfigError("cannot compress an empty volume");
  const double e = cfg.abs_bound;
  const double max_q = static_cast<double>(cfg.max_quant_code);
  const std::int64_t offset = static_cast<std::int64_t>(cfg.max_quant_code) + 1;

  std::vector<float> rec(n);
  std::vector<std::uint32_t> symbols(n);
  std::vector<Outlier> outliers;

  std::size_t idx = 0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k, ++idx) {
        const float x = vol[idx];
        const double pred = detail::lorenzo_predict(rec, dims, i, j, k);
        const double qd = detail::round_half_away((static_cast<double>(x) - pred) / (2.0 * e));
        bool ok = std::abs(qd) <= max_q;
        if (ok) {
          const auto q = static_cast<std::int64_t>(qd);
          const float xr = reconstruct(pred, e, q);
          // Float rounding of the reconstruction can push it past the bound.
          if (std::isfinite(xr) && std::abs(static_cast<double>(x) - static_cast<double>(xr)) <= e) {
            rec[idx] = xr;
            symbols[idx] = static_cast<std::uint32_t>(q + offset);
          } else {
            ok = false;
          }
        }
        if (!ok) {
          rec[idx] = x;
          symbols[idx] = 0;
          outliers.push_back({idx, x});
        }
      }

  CompressResult out;
  out.payload.config = cfg;
  out.payload.dims = dims;
  out.payload.outliers = std::move(outliers);
  out.payload.code_stream = encode_symbols(symbols);
  out.decompressed = Volume(dims, std::move(rec));
  return out;
}

Volume decompress(const CompressedPayload& payload) {
  check_config(payload.config);
  const Dims& dims = payload.dims;
  const auto symbols = detail::quant_symbols(payload);
  const double e = payload.config.abs_bound;
  const std::int64_t offset = static_cast<std::int64_t>(payload.config.max_quant_code) + 1;
  const std::uint64_t max_symbol = 2 * static_cast<std::uint64_t>(payload.config.max_quant_code) + 1;

  std::vector<float> rec(symbols.size());
  std::size_t next_outlier = 0;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k, ++idx) {
        const std::uint32_t s = symbols[idx];
        if (s == 0) {
          if (next_outlier >= payload.outliers.size() || payload.outliers[next_outlier].index != idx)
            throw FormatError(fmt::format("outlier table does not match code stream at index {}", idx));
          rec[idx] = payload.outliers[next_outlier++].value;
          continue;
        }
        if (s > max_symbol) throw FormatError(fmt::format("quantization code out of range at index {}", idx));
        const double pred = detail::lorenzo_predict(rec, dims, i, j, k);
        rec[idx] = reconstruct(pred, e, static_cast<std::int64_t>(s) - offset);
      }
  if (next_outlier != payload.outliers.size()) throw FormatError("unused outlier records in payload");
  return Volume(dims, std::move(rec));
}

Volume decompress(std::span<const std::uint8_t> payload_bytes) { return decompress(parse_payload(payload_bytes)); }

std::vector<std::uint8_t> serialize_payload(const CompressedPayload& p) {
  ByteWriter w;
  w.put_tag(std::string_view(kPayloadMagic, 4));
  w.put_u16(kPayloadVersion);
  w.put_u8(static_cast<std::uint8_t>(p.config.predictor));
  w.put_u32(p.config.max_quant_code);
  w.put_f64(p.config.reb);
  w.put_f64(p.config.abs_bound);
  for (auto d : p.dims) w.put_u32(static_cast<std::uint32_t>(d));
  w.put_u64(p.outliers.size());
  for (const auto& o : p.outliers) {
    w.put_u64(o.index);
    w.put_f32(o.value);
  }
  w.put_u64(p.code_stream.size());
  w.put_bytes(p.code_stream);
  seal_with_crc(w);
  return w.take();
}

CompressedPayload parse_payload(std::span<const std::uint8_t> bytes) {
  ByteReader r(verify_crc(bytes, "payload"));
  r.expect_tag(std::string_view(kPayloadMagic, 4), "GWLZ payload");
  const std::uint16_t version = r.get_u16();
  if (version != kPayloadVersion) throw VersionError(fmt::format("unsupported payload version {}", version));
  CompressedPayload p;
  const std::uint8_t predictor = r.get_u8();
  if (predictor != static_cast<std::uint8_t>(Predictor::lorenzo3d)) throw FormatError(fmt::format("unknown predictor id {}", predictor));
  p.config.predictor = Predictor::lorenzo3d;
  p.config.max_quant_code = r.get_u32();
  p.config.reb = r.get_f64();
  p.config.abs_bound = r.get_f64();
  for (auto& d : p.dims) d = r.get_u32();
  if (element_count(p.dims) == 0) throw FormatError("payload has a zero extent");
  const std::uint64_t n_out = r.get_u64();
  if (n_out > r.remaining() / 12) throw FormatError("outlier count exceeds payload size");
  p.outliers.resize(static_cast<std::size_t>(n_out));
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < p.outliers.size(); ++i) {
    p.outliers[i].index = r.get_u64();
    p.outliers[i].value = r.get_f32();
    if ((i > 0 && p.outliers[i].index <= prev) || p.outliers[i].index >= element_count(p.dims))
      throw FormatError("outlier indices must be strictly increasing and in range");
    prev = p.outliers[i].index;
  }
  const auto stream = r.get_section();
  p.code_stream.assign(stream.begin(), stream.end());
  if (!r.at_end()) throw FormatError("trailing bytes after payload code stream");
  try {
    check_config(p.config);
  } catch (const ConfigError& err) {
    throw FormatError(fmt::format("payload config invalid: {}", err.what()));
  }
  return p;
}

std::size_t compressed_size(const CompressedPayload& payload) { return serialize_payload(payload).size(); }

double ratio(std::size_t input_bytes, std::size_t compressed_bytes) {
  return static_cast<double>(input_bytes) / static_cast<double>(compressed_bytes);
}

double ratio(const Volume& vol, const CompressedPayload& payload) { return ratio(4 * vol.size(), compressed_size(payload)); }

}  // namespace gwlz
