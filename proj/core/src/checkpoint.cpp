#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "voxl/dqn.hpp"
#include "voxl/error.hpp"

namespace voxl {

namespace {

constexpr char kMagic[8] = {'V', 'O', 'X', 'L', 'N', 'E', 'T', '1'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const QNetwork& net, const CheckpointMeta& meta) {
  std::string text = net.architecture().describe();
  for (const auto& [key, value] : meta) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "checkpoint meta key/value contains a separator: " + key);
    }
    text += "meta " + key + " " + value + "\n";
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, text.size(), 4);
  out.insert(out.end(), text.begin(), text.end());
  for (double p : net.parameters()) put_le(out, std::bit_cast<std::uint64_t>(p), 8);
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kCorruptCheckpoint, "checkpoint magic is not VOXLNET1");
  }
  const std::size_t text_len = get_le(bytes.data() + 8, 4);
  if (12 + text_len > bytes.size()) {
    throw Error(ErrorCode::kCorruptCheckpoint, "checkpoint descriptor runs past end of file");
  }
  const std::string text(reinterpret_cast<const char*>(bytes.data() + 12), text_len);
  Architecture arch = Architecture::parse(text);

  const std::size_t payload = bytes.size() - 12 - text_len;
  if (payload != arch.parameter_count() * 8) {
    throw Error(ErrorCode::kCorruptCheckpoint, "checkpoint carries " + std::to_string(payload / 8) +
                                                   " parameters, descriptor needs " +
                                                   std::to_string(arch.parameter_count()));
  }
  std::vector<double> params(arch.parameter_count());
  const std::uint8_t* p = bytes.data() + 12 + text_len;
  for (auto& v : params) {
    v = std::bit_cast<double>(get_le(p, 8));
    p += 8;
  }

  CheckpointMeta meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("meta ", 0) != 0) continue;
    const std::string rest = line.substr(5);
    const auto sp = rest.find(' ');
    if (sp == std::string::npos) {
      meta[rest] = "";
    } else {
      meta[rest.substr(0, sp)] = rest.substr(sp + 1);
    }
  }
  try {
    return {QNetwork(std::move(arch), std::move(params)), std::move(meta)};
  } catch (const Error& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("checkpoint parameters invalid: ") + e.what());
  }
}

void save_checkpoint(const QNetwork& net, const std::filesystem::path& path, const CheckpointMeta& meta) {
  const auto bytes = encode_checkpoint(net, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kUnwritable, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kUnwritable, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace voxl
