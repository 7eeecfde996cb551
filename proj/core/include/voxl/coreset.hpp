#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voxl/volume.hpp"

namespace voxl {

enum class CoresetMethod { kAverage, kCenterSample, kMaxEntropy };

std::string_view to_string(CoresetMethod method);
// Accepts "average", "center_sample", "max_entropy". Throws kInvalidArgument
// listing the valid names otherwise.
CoresetMethod parse_coreset_method(std::string_view name);
std::string valid_coreset_methods();

struct CoresetConfig {
  int n_ratio = 3;           // per-axis scaling ratio N
  int entropy_window = 10;   // entropy cube edge, voxels
  int gray_levels = 32;      // histogram bins n
  CoresetMethod method = CoresetMethod::kMaxEntropy;
  // Average over disjoint N^3 blocks instead of overlapping (2N-1)^3 cubes.
  bool disjoint_blocks = false;
  int threads = 1;

  void validate() const;
};

struct EntropyMap {
  Dims dims;
  std::vector<double> values;  // bits, x fastest

  double at(int x, int y, int z) const {
    return values[(static_cast<std::size_t>(z) * dims.y + y) * dims.x + x];
  }
};

struct CoresetResult {
  Volume3D volume;
  int n_ratio = 1;
  CoresetMethod method = CoresetMethod::kAverage;
  std::optional<Coord3> landmark_scaled;
};

// Output grid for ratio N: ceil(dim / N) per axis.
Dims coreset_dims(const Dims& src, int n_ratio);

// Representative voxel of output cell `cell` along one axis:
// cell * N + N / 2, clamped to [0, extent - 1].
int cell_center(int cell, int n_ratio, int extent);

CoresetResult neighborhood_average(const Volume3D& vol, const CoresetConfig& cfg);
CoresetResult center_sample(const Volume3D& vol, const CoresetConfig& cfg);

// Gray-level index of every voxel: min(floor((v - min) / (max - min) * n), n - 1).
std::vector<int> quantize(const Volume3D& vol, int gray_levels);
EntropyMap entropy_map(const Volume3D& vol, const CoresetConfig& cfg);
CoresetResult max_entropy_coreset(const Volume3D& vol, const CoresetConfig& cfg);

// Scaled landmark: round-half-away-from-zero of landmark / N, clamped into `out`.
Coord3 scale_landmark(const Coord3& landmark, int n_ratio, const Dims& out);

CoresetResult compress(const Volume3D& vol, const CoresetConfig& cfg,
                       std::optional<Coord3> landmark = std::nullopt);

}  // namespace voxl
