#include "gwlz/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/core.h>

#include "gwlz/byte_io.hpp"
#include "gwlz/error.hpp"

namespace gwlz {

std::size_t element_count(const Dims& dims) { return dims[0] * dims[1] * dims[2]; }

std::string to_string(const Dims& dims) { return fmt::format("{}x{}x{}", dims[0], dims[1], dims[2]); }

Dims parse_dims(const std::string& text) {
  Dims dims{};
  std::size_t pos = 0;
  for (int a = 0; a < 3; ++a) {
    const std::size_t end = a < 2 ? text.find('x', pos) : text.size();
    if (end == std::string::npos) throw ConfigError(fmt::format("dims '{}' must look like NxMxK", text));
    const std::string part = text.substr(pos, end - pos);
    if (part.empty() || !std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; }))
      throw ConfigError(fmt::format("dims '{}' must look like NxMxK", text));
    dims[a] = std::stoull(part);
    if (dims[a] == 0 || dims[a] > 0xffffffffull) throw ConfigError(fmt::format("dims '{}': extents must be in [1, 2^32)", text));
    pos = end + 1;
  }
  return dims;
}

Volume::Volume(Dims dims, std::vector<float> values) : dims_(dims), values_(std::move(values)) {
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw ConfigError("volume extents must be positive");
  if (values_.size() != element_count(dims))
    throw DimensionError(fmt::format("volume {} needs {} values, got {}", to_string(dims), element_count(dims), values_.size()));
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (!std::isfinite(values_[i])) throw DataError(fmt::format("non-finite value at index {}", i));
}

Volume Volume::filled(Dims dims, float value) { return Volume(dims, std::vector<float>(element_count(dims), value)); }

Volume decode_raw(std::span<const std::uint8_t> bytes, const Dims& dims, ByteOrder order) {
  const std::size_t n = element_count(dims);
  if (bytes.size() != 4 * n)
    throw FormatError(fmt::format("raw volume {} expects {} bytes, file has {}", to_string(dims), 4 * n, bytes.size()));
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = bytes.data() + 4 * i;
    std::uint32_t u = order == ByteOrder::little
                          ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24)
                          : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[0]} << 24);
    values[i] = std::bit_cast<float>(u);
  }
  return Volume(dims, std::move(values));
}

Volume load_raw(const std::filesystem::path& path, const Dims& dims, ByteOrder order) {
  return decode_raw(read_file(path), dims, order);
}

std::vector<std::uint8_t> encode_raw(const Volume& vol, ByteOrder order) {
  std::vector<std::uint8_t> bytes(4 * vol.size());
  for (std::size_t i = 0; i < vol.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(vol[i]);
    for (int b = 0; b < 4; ++b) {
      const int shift = order == ByteOrder::little ? 8 * b : 8 * (3 - b);
      bytes[4 * i + b] = static_cast<std::uint8_t>(u >> shift);
    }
  }
  return bytes;
}

std::size_t save_raw(const Volume& vol, const std::filesystem::path& path, ByteOrder order) {
  const auto bytes = encode_raw(vol, order);
  write_file(path, bytes);
  return bytes.size();
}

float vrange(const Volume& vol) {
  if (vol.size() == 0) throw RangeError("vrange of an empty volume");
  const auto [lo, hi] = std::minmax_element(vol.values().begin(), vol.values().end());
  return *hi - *lo;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "constant") return SyntheticKind::constant;
  if (name == "cosine-field") return SyntheticKind::cosine_field;
  if (name == "gaussian-mixture") return SyntheticKind::gaussian_mixture;
  if (name == "skewed-exponential") return SyntheticKind::skewed_exponential;
  throw ConfigError(fmt::format("unknown synthetic kind '{}'", name));
}

namespace {

// Bit-level uniform [0,1) so fields do not depend on the standard library's
// distribution implementations.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

struct PlaneWave {
  std::array<double, 3> k;  // radians per voxel
  double phase;
  double weight;
};

std::vector<PlaneWave> random_waves(std::mt19937_64& rng, const Dims& dims, int count, double max_cycles) {
  std::vector<PlaneWave> waves;
  waves.reserve(static_cast<std::size_t>(count));
  for (int m = 0; m < count; ++m) {
    PlaneWave w{};
    double norm2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double cycles = uniform(rng, -max_cycles, max_cycles);
      w.k[a] = 2.0 * std::numbers::pi * cycles / static_cast<double>(dims[a]);
      norm2 += cycles * cycles;
    }
    w.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    // Red spectrum: large scales dominate.
    w.weight = 1.0 / (1.0 + norm2);
    waves.push_back(w);
  }
  return waves;
}

template <class F>
std::vector<float> tabulate(const Dims& dims, F&& f) {
  std::vector<float> out(element_count(dims));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) out[idx++] = static_cast<float>(f(double(i), double(j), double(k)));
  return out;
}

std::vector<double> wave_field(const Dims& dims, const std::vector<PlaneWave>& waves) {
  std::vector<double> g(element_count(dims));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) {
        double s = 0.0;
        for (const auto& w : waves) s += w.weight * std::cos(w.k[0] * double(i) + w.k[1] * double(j) + w.k[2] * double(k) + w.phase);
        g[idx++] = s;
      }
  return g;
}

}  // namespace

Volume gen_synthetic(const SyntheticSpec& spec) {
  if (spec.dims[0] == 0 || spec.dims[1] == 0 || spec.dims[2] == 0) throw ConfigError("synthetic dims must be positive");
  if (!(spec.amplitude > 0.0f)) throw ConfigError("synthetic amplitude must be > 0");
  std::mt19937_64 rng(spec.seed);
  const double amp = spec.amplitude;
  const Dims& d = spec.dims;

  switch (spec.kind) {
    case SyntheticKind::constant:
      return Volume::filled(d, spec.amplitude);

    case SyntheticKind::cosine_field: {
      const auto waves = random_waves(rng, d, 3, 3.0);
      return Volume(d, tabulate(d, [&](double i, double j, double k) {
                      double s = 0.0;
                      for (const auto& w : waves) s += std::cos(w.k[0] * i + w.k[1] * j + w.k[2] * k + w.phase);
                      return amp * s / 3.0;
                    }));
    }

    case SyntheticKind::gaussian_mixture: {
      struct Blob {
        std::array<double, 3> center;
        double inv_two_sigma2;
        double weight;
      };
      std::vector<Blob> blobs(8);
      for (auto& b : blobs) {
        for (int a = 0; a < 3; ++a) b.center[a] = uniform(rng, 0.0, double(d[a]));
        const double sigma = uniform(rng, 0.05, 0.2) * double(d[0] + d[1] + d[2]) / 3.0;
        b.inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
        b.weight = uniform(rng, 0.2, 1.0);
      }
      return Volume(d, tabulate(d, [&](double i, double j, double k) {
                      double s = 0.0;
                      for (const auto& b : blobs) {
                        const double r2 = (i - b.center[0]) * (i - b.center[0]) + (j - b.center[1]) * (j - b.center[1]) +
                                          (k - b.center[2]) * (k - b.center[2]);
                        s += b.weight * std::exp(-r2 * b.inv_two_sigma2);
                      }
                      return amp * s;
                    }));
    }

    case SyntheticKind::skewed_exponential: {
      const auto waves = random_waves(rng, d, 24, 6.0);
      auto g = wave_field(d, waves);
      double mean = 0.0;
      for (double v : g) mean += v;
      mean /= double(g.size());
      double var = 0.0;
      for (double v : g) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / double(g.size()));
      const double inv_sd = sd > 0.0 ? 1.0 / sd : 0.0;
      constexpr double kLogSigma = 1.75;
      std::vector<float> out(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(amp * std::exp(kLogSigma * (g[i] - mean) * inv_sd));
      return Volume(d, std::move(out));
    }
  }
  throw ConfigError("unhandled synthetic kind");
}

std::array<std::size_t, 2> slice_shape(const Dims& dims, int axis) {
  switch (axis) {
    case 0: return {dims[1], dims[2]};
    case 1: return {dims[0], dims[2]};
    case 2: return {dims[0], dims[1]};
    default: throw RangeError(fmt::format("axis {} out of range [0, 2]", axis));
  }
}

std::vector<std::size_t> slice_indices(const Dims& dims, int axis, std::size_t index) {
  const auto [rows, cols] = slice_shape(dims, axis);
  if (index >= dims[static_cast<std::size_t>(axis)])
    throw RangeError(fmt::format("slice index {} out of range for axis {} of extent {}", index, axis, dims[axis]));
  const std::size_t s0 = dims[1] * dims[2], s1 = dims[2];
  std::vector<std::size_t> idx(rows * cols);
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      switch (axis) {
        case 0: idx[n++] = index * s0 + r * s1 + c; break;
        case 1: idx[n++] = r * s0 + index * s1 + c; break;
        default: idx[n++] = r * s0 + c * s1 + index; break;
      }
    }
  return idx;
}

Plane get_slice(const Volume& vol, int axis, std::size_t index) {
  const auto [rows, cols] = slice_shape(vol.dims(), axis);
  Plane p{rows, cols, {}};
  const auto idx = slice_indices(vol.dims(), axis, index);
  p.values.reserve(idx.size());
  for (auto i : idx) p.values.push_back(vol[i]);
  return p;
}

}  // namespace gwlz
