#include "voxl/volume.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "voxl/error.hpp"

namespace voxl {

namespace {

constexpr std::array<char, 8> kVolMagic = {'V', 'O', 'X', 'L', 'C', 'O', 'R', 'E'};
constexpr std::size_t kVolHeaderBytes = 8 + 3 * 4;

static_assert(std::endian::native == std::endian::little,
              "VOL encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

int Dims::max_extent() const { return std::max({x, y, z}); }

std::string Dims::str() const {
  std::ostringstream os;
  os << x << "x" << y << "x" << z;
  return os.str();
}

double euclidean(const Coord3& a, const Coord3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Volume3D::Volume3D(Dims dims, std::vector<float> data) : dims_(dims), data_(std::move(data)) {
  if (!dims_.positive()) {
    throw Error(ErrorCode::kInvariantViolation, "volume dims must be positive, got " + dims_.str());
  }
  if (data_.size() != dims_.count()) {
    throw Error(ErrorCode::kLengthMismatch,
                "volume " + dims_.str() + " needs " + std::to_string(dims_.count()) +
                    " samples, got " + std::to_string(data_.size()));
  }
  float lo = data_.front();
  float hi = data_.front();
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const float v = data_[i];
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kInvariantViolation,
                  "volume sample " + std::to_string(i) + " is not finite");
    }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  range_ = {lo, hi};
}

Volume3D Volume3D::filled(Dims dims, float value) {
  return Volume3D(dims, std::vector<float>(dims.count(), value));
}

Volume3D normalize_intensity(const Volume3D& vol) {
  const auto [lo, hi] = vol.intensity_range();
  std::vector<float> out(vol.size(), 0.0F);
  if (hi > lo) {
    const double span = static_cast<double>(hi) - static_cast<double>(lo);
    auto src = vol.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<float>((static_cast<double>(src[i]) - lo) / span);
    }
  }
  return Volume3D(vol.dims(), std::move(out));
}

std::vector<std::uint8_t> encode_volume(const Volume3D& vol) {
  std::vector<std::uint8_t> out(kVolMagic.begin(), kVolMagic.end());
  out.reserve(kVolHeaderBytes + vol.size() * 4);
  put_u32(out, static_cast<std::uint32_t>(vol.dims().x));
  put_u32(out, static_cast<std::uint32_t>(vol.dims().y));
  put_u32(out, static_cast<std::uint32_t>(vol.dims().z));
  for (float v : vol.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Volume3D decode_volume(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kVolHeaderBytes ||
      std::memcmp(bytes.data(), kVolMagic.data(), kVolMagic.size()) != 0) {
    throw Error(ErrorCode::kMalformedHeader, "VOL header missing or magic is not VOXLCORE");
  }
  const std::uint32_t x = get_u32(bytes.data() + 8);
  const std::uint32_t y = get_u32(bytes.data() + 12);
  const std::uint32_t z = get_u32(bytes.data() + 16);
  if (x == 0 || y == 0 || z == 0 || x > (1U << 20) || y > (1U << 20) || z > (1U << 20)) {
    throw Error(ErrorCode::kMalformedHeader, "VOL header declares invalid dims " +
                                                 std::to_string(x) + "x" + std::to_string(y) +
                                                 "x" + std::to_string(z));
  }
  const Dims dims{static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)};
  const std::size_t payload = bytes.size() - kVolHeaderBytes;
  if (payload % 4 != 0 || payload / 4 != dims.count()) {
    throw Error(ErrorCode::kLengthMismatch,
                "VOL header declares " + std::to_string(dims.count()) + " samples but payload has " +
                    std::to_string(payload) + " bytes");
  }
  std::vector<float> data(dims.count());
  const std::uint8_t* p = bytes.data() + kVolHeaderBytes;
  for (std::size_t i = 0; i < data.size(); ++i, p += 4) {
    data[i] = std::bit_cast<float>(get_u32(p));
    if (!std::isfinite(data[i])) {
      throw Error(ErrorCode::kNonFinite, "VOL sample " + std::to_string(i) + " is not finite");
    }
  }
  return Volume3D(dims, std::move(data));
}

Volume3D load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open volume file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_volume(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_volume(const Volume3D& vol, const std::filesystem::path& path) {
  if (vol.empty()) throw Error(ErrorCode::kInvariantViolation, "cannot save an empty volume");
  const auto bytes = encode_volume(vol);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kUnwritable, "cannot write volume file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kUnwritable, "short write to " + path.string());
}

Phantom make_phantom(const PhantomConfig& cfg) {
  const Dims& d = cfg.dims;
  if (!d.positive()) throw Error(ErrorCode::kInvalidArgument, "phantom dims must be positive");
  if (cfg.noise_sigma < 0.0 || !std::isfinite(cfg.noise_sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "phantom noise_sigma must be finite and >= 0");
  }
  const Coord3& c = cfg.landmark_center;
  const Coord3& r = cfg.landmark_radii;
  if (r.x < 0 || r.y < 0 || r.z < 0 || c.x - r.x < 0 || c.y - r.y < 0 || c.z - r.z < 0 ||
      c.x + r.x >= d.x || c.y + r.y >= d.y || c.z + r.z >= d.z) {
    throw Error(ErrorCode::kOutOfBounds, "landmark ellipsoid does not fit inside " + d.str());
  }

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 bg_rng(cfg.background_seed.value_or(0));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  // Three fixed cosine products; only the phases come from the seed.
  constexpr std::array<std::array<double, 3>, 3> kFreq = {{{1, 1, 1}, {2, 1, 1}, {1, 2, 2}}};
  std::array<std::array<double, 3>, 3> phases{};
  for (auto& term : phases) {
    for (auto& p : term) p = cfg.background_seed ? phase(bg_rng) : phase(rng);
  }
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);

  auto radius_sq = [](int v, int center, int radius) {
    if (radius == 0) return v == center ? 0.0 : 2.0;
    const double t = static_cast<double>(v - center) / radius;
    return t * t;
  };

  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<float> data(d.count());
  std::size_t i = 0;
  for (int z = 0; z < d.z; ++z) {
    for (int y = 0; y < d.y; ++y) {
      for (int x = 0; x < d.x; ++x, ++i) {
        double bg = 0.0;
        for (std::size_t k = 0; k < kFreq.size(); ++k) {
          const double prod = std::cos(two_pi * kFreq[k][0] * x / d.x + phases[k][0]) *
                              std::cos(two_pi * kFreq[k][1] * y / d.y + phases[k][1]) *
                              std::cos(two_pi * kFreq[k][2] * z / d.z + phases[k][2]);
          bg += 0.5 * (1.0 + prod);
        }
        bg *= 0.3 / static_cast<double>(kFreq.size());
        const bool inside =
            radius_sq(x, c.x, r.x) + radius_sq(y, c.y, r.y) + radius_sq(z, c.z, r.z) <= 1.0;
        double v = bg + (inside ? 1.0 : 0.0);
        if (cfg.noise_sigma > 0.0) v += noise(rng);
        if (cfg.modality == Modality::kB) v = 1.0 - v;
        data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return Phantom{Volume3D(d, std::move(data)), c};
}

Volume3D crop_patch(const Volume3D& vol, const Coord3& center, const Dims& patch_dims,
                    float pad_value) {
  if (!patch_dims.positive()) {
    throw Error(ErrorCode::kInvalidArgument, "patch dims must be positive, got " + patch_dims.str());
  }
  const Dims& vd = vol.dims();
  const int x0 = center.x - patch_dims.x / 2;
  const int y0 = center.y - patch_dims.y / 2;
  const int z0 = center.z - patch_dims.z / 2;
  std::vector<float> out(patch_dims.count(), pad_value);
  auto src = vol.data();
  // Clip the x-run once per row so the inner copy is contiguous.
  const int px_lo = std::max(0, -x0);
  const int px_hi = std::min(patch_dims.x, vd.x - x0);
  std::size_t row = 0;
  for (int pz = 0; pz < patch_dims.z; ++pz) {
    const int z = z0 + pz;
    for (int py = 0; py < patch_dims.y; ++py, row += static_cast<std::size_t>(patch_dims.x)) {
      const int y = y0 + py;
      if (z < 0 || z >= vd.z || y < 0 || y >= vd.y || px_lo >= px_hi) continue;
      const std::size_t base = vol.index(x0 + px_lo, y, z);
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(base), px_hi - px_lo,
                  out.begin() + static_cast<std::ptrdiff_t>(row + px_lo));
    }
  }
  return Volume3D(patch_dims, std::move(out));
}

}  // namespace voxl
