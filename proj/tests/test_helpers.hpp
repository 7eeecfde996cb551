#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "voxl/volume.hpp"

namespace voxl::test {

inline Volume3D random_volume(Dims d, std::uint64_t seed, float lo = 0.0F, float hi = 1.0F) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(d.count());
  for (auto& x : v) x = u(rng);
  return Volume3D(d, std::move(v));
}

template <typename F>
Volume3D volume_from(Dims d, F f) {
  std::vector<float> v;
  v.reserve(d.count());
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) v.push_back(static_cast<float>(f(x, y, z)));
  return Volume3D(d, std::move(v));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("voxl_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace voxl::test
