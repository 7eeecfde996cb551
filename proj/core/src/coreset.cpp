#include "voxl/coreset.hpp"

#include <algorithm>
#include <cmath>

#include "voxl/error.hpp"
#include "voxl/parallel.hpp"

namespace voxl {

std::string_view to_string(CoresetMethod method) {
  switch (method) {
    case CoresetMethod::kAverage: return "average";
    case CoresetMethod::kCenterSample: return "center_sample";
    case CoresetMethod::kMaxEntropy: return "max_entropy";
  }
  return "unknown";
}

std::string valid_coreset_methods() { return "average, center_sample, max_entropy"; }

CoresetMethod parse_coreset_method(std::string_view name) {
  for (auto m : {CoresetMethod::kAverage, CoresetMethod::kCenterSample, CoresetMethod::kMaxEntropy}) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown coreset method '" + std::string(name) +
                                               "'; valid methods: " + valid_coreset_methods());
}

void CoresetConfig::validate() const {
  if (n_ratio < 1) throw Error(ErrorCode::kInvalidArgument, "n_ratio must be >= 1");
  if (gray_levels < 2) throw Error(ErrorCode::kInvalidArgument, "gray_levels must be >= 2");
  if (entropy_window < 1) throw Error(ErrorCode::kInvalidArgument, "entropy_window must be >= 1");
}

namespace {

void require_nonempty(const Volume3D& vol) {
  if (vol.empty()) throw Error(ErrorCode::kInvalidArgument, "coreset input volume is empty");
}

struct Span1 {
  int lo;
  int hi;  // exclusive
};

// In-bounds voxel range feeding output cell `cell` along one axis.
Span1 neighborhood(int cell, int n, int extent, bool disjoint) {
  if (disjoint) return {cell * n, std::min(cell * n + n, extent)};
  const int c = cell_center(cell, n, extent);
  return {std::max(0, c - (n - 1)), std::min(extent, c + n)};
}

}  // namespace

Dims coreset_dims(const Dims& src, int n) {
  return {(src.x + n - 1) / n, (src.y + n - 1) / n, (src.z + n - 1) / n};
}

int cell_center(int cell, int n, int extent) { return std::min(cell * n + n / 2, extent - 1); }

CoresetResult neighborhood_average(const Volume3D& vol, const CoresetConfig& cfg) {
  cfg.validate();
  require_nonempty(vol);
  const Dims& d = vol.dims();
  const int n = cfg.n_ratio;
  const Dims od = coreset_dims(d, n);
  std::vector<float> out(od.count());
  parallel_for(static_cast<std::size_t>(od.z), cfg.threads, [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    const Span1 sz = neighborhood(k, n, d.z, cfg.disjoint_blocks);
    for (int j = 0; j < od.y; ++j) {
      const Span1 sy = neighborhood(j, n, d.y, cfg.disjoint_blocks);
      for (int i = 0; i < od.x; ++i) {
        const Span1 sx = neighborhood(i, n, d.x, cfg.disjoint_blocks);
        double sum = 0.0;
        for (int z = sz.lo; z < sz.hi; ++z) {
          for (int y = sy.lo; y < sy.hi; ++y) {
            for (int x = sx.lo; x < sx.hi; ++x) sum += vol.at(x, y, z);
          }
        }
        const double count = static_cast<double>(sx.hi - sx.lo) * (sy.hi - sy.lo) * (sz.hi - sz.lo);
        out[(static_cast<std::size_t>(k) * od.y + j) * od.x + i] = static_cast<float>(sum / count);
      }
    }
  });
  return {Volume3D(od, std::move(out)), n, CoresetMethod::kAverage, std::nullopt};
}

CoresetResult center_sample(const Volume3D& vol, const CoresetConfig& cfg) {
  cfg.validate();
  require_nonempty(vol);
  const Dims& d = vol.dims();
  const int n = cfg.n_ratio;
  const Dims od = coreset_dims(d, n);
  std::vector<float> out;
  out.reserve(od.count());
  for (int k = 0; k < od.z; ++k) {
    const int z = cell_center(k, n, d.z);
    for (int j = 0; j < od.y; ++j) {
      const int y = cell_center(j, n, d.y);
      for (int i = 0; i < od.x; ++i) out.push_back(vol.at(cell_center(i, n, d.x), y, z));
    }
  }
  return {Volume3D(od, std::move(out)), n, CoresetMethod::kCenterSample, std::nullopt};
}

std::vector<int> quantize(const Volume3D& vol, int gray_levels) {
  if (gray_levels < 2) throw Error(ErrorCode::kInvalidArgument, "gray_levels must be >= 2");
  const auto [lo, hi] = vol.intensity_range();
  std::vector<int> q(vol.size(), 0);
  if (!(hi > lo)) return q;
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  auto src = vol.data();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double t = (static_cast<double>(src[i]) - lo) / span * gray_levels;
    q[i] = std::min(static_cast<int>(std::floor(t)), gray_levels - 1);
  }
  return q;
}

EntropyMap entropy_map(const Volume3D& vol, const CoresetConfig& cfg) {
  cfg.validate();
  const Dims& d = vol.dims();
  const int levels = cfg.gray_levels;
  const int w = cfg.entropy_window;
  const int before = w / 2;          // offsets [-before, after]
  const int after = w - before - 1;
  const std::vector<int> q = quantize(vol, levels);

  EntropyMap map{d, std::vector<double>(d.count(), 0.0)};
  const std::size_t rows = static_cast<std::size_t>(d.y) * d.z;

  // One sliding histogram per (y, z) row, stepped along x.
  parallel_for(rows, cfg.threads, [&](std::size_t row) {
    const int y = static_cast<int>(row % d.y);
    const int z = static_cast<int>(row / d.y);
    const int y0 = std::max(0, y - before), y1 = std::min(d.y - 1, y + after);
    const int z0 = std::max(0, z - before), z1 = std::min(d.z - 1, z + after);
    const long plane = static_cast<long>(y1 - y0 + 1) * (z1 - z0 + 1);
    std::vector<long> hist(static_cast<std::size_t>(levels), 0);
    auto add_plane = [&](int x, long sign) {
      for (int zz = z0; zz <= z1; ++zz) {
        for (int yy = y0; yy <= y1; ++yy) hist[static_cast<std::size_t>(q[vol.index(x, yy, zz)])] += sign;
      }
    };
    for (int x = 0; x <= std::min(d.x - 1, after); ++x) add_plane(x, 1);
    for (int x = 0; x < d.x; ++x) {
      if (x > 0) {
        if (x + after < d.x) add_plane(x + after, 1);
        if (x - before - 1 >= 0) add_plane(x - before - 1, -1);
      }
      const int x0 = std::max(0, x - before), x1 = std::min(d.x - 1, x + after);
      const double total = static_cast<double>(plane * (x1 - x0 + 1));
      double h = 0.0;
      for (long c : hist) {
        if (c > 0) {
          const double p = static_cast<double>(c) / total;
          h -= p * std::log2(p);
        }
      }
      map.values[vol.index(x, y, z)] = h;
    }
  });
  return map;
}

CoresetResult max_entropy_coreset(const Volume3D& vol, const CoresetConfig& cfg) {
  cfg.validate();
  require_nonempty(vol);
  const Dims& d = vol.dims();
  const int n = cfg.n_ratio;
  const Dims od = coreset_dims(d, n);
  const EntropyMap ent = entropy_map(vol, cfg);
  std::vector<float> out(od.count());
  parallel_for(static_cast<std::size_t>(od.z), cfg.threads, [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < od.y; ++j) {
      for (int i = 0; i < od.x; ++i) {
        // Strict '>' over z, y, x order keeps the smallest row-major index on ties.
        std::size_t best = vol.index(i * n, j * n, k * n);
        double best_h = ent.values[best];
        for (int z = k * n; z < std::min(k * n + n, d.z); ++z) {
          for (int y = j * n; y < std::min(j * n + n, d.y); ++y) {
            for (int x = i * n; x < std::min(i * n + n, d.x); ++x) {
              const std::size_t idx = vol.index(x, y, z);
              if (ent.values[idx] > best_h) {
                best_h = ent.values[idx];
                best = idx;
              }
            }
          }
        }
        out[(static_cast<std::size_t>(k) * od.y + j) * od.x + i] = vol.data()[best];
      }
    }
  });
  return {Volume3D(od, std::move(out)), n, CoresetMethod::kMaxEntropy, std::nullopt};
}

Coord3 scale_landmark(const Coord3& landmark, int n, const Dims& out) {
  auto axis = [n](int v, int extent) {
    const long r = std::lround(static_cast<double>(v) / n);
    return static_cast<int>(std::clamp<long>(r, 0, extent - 1));
  };
  return {axis(landmark.x, out.x), axis(landmark.y, out.y), axis(landmark.z, out.z)};
}

CoresetResult compress(const Volume3D& vol, const CoresetConfig& cfg, std::optional<Coord3> landmark) {
  CoresetResult result;
  switch (cfg.method) {
    case CoresetMethod::kAverage: result = neighborhood_average(vol, cfg); break;
    case CoresetMethod::kCenterSample: result = center_sample(vol, cfg); break;
    case CoresetMethod::kMaxEntropy: result = max_entropy_coreset(vol, cfg); break;
  }
  if (landmark) result.landmark_scaled = scale_landmark(*landmark, cfg.n_ratio, result.volume.dims());
  return result;
}

}  // namespace voxl
