#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace voxl {

struct Dims {
  int x = 0;
  int y = 0;
  int z = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(z);
  }
  bool positive() const { return x > 0 && y > 0 && z > 0; }
  int max_extent() const;
  std::string str() const;  // "XxYxZ"

  friend bool operator==(const Dims&, const Dims&) = default;
};

// Integer voxel coordinate. Positions of agents and landmarks live on the grid.
struct Coord3 {
  int x = 0;
  int y = 0;
  int z = 0;

  friend bool operator==(const Coord3&, const Coord3&) = default;
  friend auto operator<=>(const Coord3&, const Coord3&) = default;
};

double euclidean(const Coord3& a, const Coord3& b);

// Dense grayscale volume, x fastest. Immutable once constructed; the
// constructor rejects length mismatches and non-finite samples.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, std::vector<float> data);

  static Volume3D filled(Dims dims, float value);

  const Dims& dims() const { return dims_; }
  std::span<const float> data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float min_intensity() const { return range_.first; }
  float max_intensity() const { return range_.second; }
  std::pair<float, float> intensity_range() const { return range_; }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_.y) +
            static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims_.x) +
           static_cast<std::size_t>(x);
  }
  float at(int x, int y, int z) const { return data_[index(x, y, z)]; }
  float at(const Coord3& c) const { return at(c.x, c.y, c.z); }
  bool contains(const Coord3& c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims_.x && c.y < dims_.y &&
           c.z < dims_.z;
  }

  friend bool operator==(const Volume3D& a, const Volume3D& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_;
  std::vector<float> data_;
  std::pair<float, float> range_{0.0F, 0.0F};
};

// Min-max rescale into [0, 1]. Constant volumes map to all zeros.
Volume3D normalize_intensity(const Volume3D& vol);

// VOL format: "VOXLCORE", u32 X, u32 Y, u32 Z (LE), X*Y*Z f32 (LE), no trailer.
Volume3D load_volume(const std::filesystem::path& path);
void save_volume(const Volume3D& vol, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_volume(const Volume3D& vol);
Volume3D decode_volume(std::span<const std::uint8_t> bytes);

enum class Modality { kA, kB };

struct PhantomConfig {
  Dims dims{48, 48, 48};
  Modality modality = Modality::kA;
  Coord3 landmark_center{24, 24, 24};
  Coord3 landmark_radii{3, 3, 3};
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // Draws the background phases from a separate stream so several phantoms
  // can share one anatomy while the noise differs. Unset: phases use `seed`.
  std::optional<std::uint64_t> background_seed;
};

struct Phantom {
  Volume3D volume;
  Coord3 landmark;
};

// Smooth background in [0, 0.3] plus a unit-contrast ellipsoid plus noise,
// clamped to [0, 1]. Modality B inverts the unclamped value.
Phantom make_phantom(const PhantomConfig& cfg);

// Patch of exactly patch_dims centred on `center`; per axis the offsets run
// over [-d/2, d - d/2 - 1]. Out-of-bounds samples take pad_value.
Volume3D crop_patch(const Volume3D& vol, const Coord3& center, const Dims& patch_dims,
                    float pad_value = 0.0F);

}  // namespace voxl
