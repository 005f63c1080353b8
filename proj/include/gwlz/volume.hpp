#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gwlz {

/// Extents (d0, d1, d2), d0 outermost.
using Dims = std::array<std::size_t, 3>;

std::size_t element_count(const Dims& dims);
std::string to_string(const Dims& dims);
/// Parses "NxMxK".
Dims parse_dims(const std::string& text);

/// A dense 3D field of binary32 values in row-major order.
///
/// Immutable after construction. Every value is finite; the constructor
/// rejects NaN/Inf with a DataError naming the first bad index.
class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, std::vector<float> values);

  static Volume filled(Dims dims, float value);

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }
  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return values_[(i * dims_[1] + j) * dims_[2] + k]; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_{0, 0, 0};
  std::vector<float> values_;
};

/// A copied 2D section of a volume, row-major.
struct Plane {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  float operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  friend bool operator==(const Plane&, const Plane&) = default;
};

enum class ByteOrder { little, big };

Volume load_raw(const std::filesystem::path& path, const Dims& dims, ByteOrder order = ByteOrder::little);
Volume decode_raw(std::span<const std::uint8_t> bytes, const Dims& dims, ByteOrder order = ByteOrder::little);
std::size_t save_raw(const Volume& vol, const std::filesystem::path& path, ByteOrder order = ByteOrder::little);
std::vector<std::uint8_t> encode_raw(const Volume& vol, ByteOrder order = ByteOrder::little);

/// max - min over all values.
float vrange(const Volume& vol);

enum class SyntheticKind { constant, cosine_field, gaussian_mixture, skewed_exponential };

SyntheticKind parse_synthetic_kind(const std::string& name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::skewed_exponential;
  Dims dims{32, 32, 32};
  std::uint64_t seed = 0;
  float amplitude = 1.0f;
};

/// Deterministic synthetic test fields. The skewed-exponential kind is a
/// log-normal transform of a smooth random field: positive, long-tailed,
/// with most mass at small values.
Volume gen_synthetic(const SyntheticSpec& spec);

/// Dims of the plane obtained by fixing `axis`.
std::array<std::size_t, 2> slice_shape(const Dims& dims, int axis);
/// Flat volume indices of slice `index` along `axis`, in the plane's row-major order.
std::vector<std::size_t> slice_indices(const Dims& dims, int axis, std::size_t index);
Plane get_slice(const Volume& vol, int axis, std::size_t index);

}  // namespace gwlz
