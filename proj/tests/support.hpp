#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "gwlz/volume.hpp"

namespace gwlz::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gwlz_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Volume make_volume(Dims dims, std::vector<float> v) { return Volume(dims, std::move(v)); }

// Small random volumes of mixed character: smooth, spiky or constant.
inline Volume random_volume(std::mt19937_64& rng, std::size_t max_extent = 32) {
  std::uniform_int_distribution<std::size_t> ext(1, max_extent);
  Dims d{ext(rng), ext(rng), ext(rng)};
  std::vector<float> v(element_count(d));
  std::uniform_int_distribution<int> kind_dist(0, 2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int kind = kind_dist(rng);
  const double scale = std::pow(10.0, 6.0 * u(rng));
  const double offset = scale * 10.0 * u(rng);
  const double fx = 3.0 * u(rng), fy = 3.0 * u(rng), fz = 3.0 * u(rng);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k, ++idx) {
        double val = offset;
        if (kind == 0) {
          val += scale * std::sin(fx * double(i) / 5.0 + fy * double(j) / 7.0) * std::cos(fz * double(k) / 3.0);
        } else if (kind == 1) {
          val += scale * 0.01 * u(rng);
          if (u(rng) > 0.97) val += scale * 1e4 * u(rng);
        }
        v[idx] = static_cast<float>(val);
      }
  return Volume(d, std::move(v));
}

}  // namespace gwlz::testing
