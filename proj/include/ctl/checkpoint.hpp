#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ctl/nn.hpp"

namespace ctl {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'C', 'T', 'L', 'C'};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Bad magic, truncation, malformed structure.
struct CheckpointFormatError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
// Tensor table disagrees with the fixed architecture; names the tensor.
struct CheckpointShapeError : CheckpointError {
  using CheckpointError::CheckpointError;
};

// Parameters plus provenance, on disk as:
//   "CTLC" | u32 version | u32 metadata-length | metadata (key=value lines)
//   | u32 tensor count | per tensor: u16 name length, name, u8 rank,
//     u32 dims[rank], 32-bit little-endian IEEE-754 values.
// All integers little-endian.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> metadata;
  NetworkParams params;

  std::string meta(const std::string& key) const {
    for (const auto& [k, v] : metadata) {
      if (k == key) return v;
    }
    return {};
  }
  void set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : metadata) {
      if (k == key) {
        v = value;
        return;
      }
    }
    metadata.emplace_back(key, value);
  }
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CheckpointFormatError("truncated checkpoint file");
  }
  std::uint16_t u16() {
    need(2);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 2;
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32() {
    need(4);
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);

  std::string md;
  for (const auto& [k, v] : ckpt.metadata) {
    md += k;
    md += '=';
    md += v;
    md += '\n';
  }
  detail::put_u32(out, static_cast<std::uint32_t>(md.size()));
  out += md;

  detail::put_u32(out, kNumTensors);
  const auto tensors = ckpt.params.tensors();
  for (int t = 0; t < kNumTensors; ++t) {
    const TensorSpec& spec = kNetTensors[t];
    const std::string name = spec.name;
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(spec.rank));
    for (int d = 0; d < spec.rank; ++d) detail::put_u32(out, spec.dims[d]);
    static_assert(sizeof(float) == 4);
    const auto& data = *tensors[t];
    const std::size_t bytes = data.size() * sizeof(float);
    const std::size_t at = out.size();
    out.resize(at + bytes);
    std::memcpy(out.data() + at, data.data(), bytes);  // little-endian host
  }

  // Atomic publish: write a temp file next to the target, then rename.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  detail::Reader r{buf};
  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointFormatError("bad magic bytes in " + path.string());
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  const std::uint32_t md_len = r.u32();
  const std::string md = r.bytes(md_len);
  std::size_t start = 0;
  while (start < md.size()) {
    std::size_t end = md.find('\n', start);
    if (end == std::string::npos) end = md.size();
    const std::string line = md.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) {
      ckpt.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    start = end + 1;
  }

  const std::uint32_t count = r.u32();
  if (count != kNumTensors) {
    throw CheckpointFormatError("expected " + std::to_string(kNumTensors) +
                                " tensors, found " + std::to_string(count));
  }
  auto tensors = ckpt.params.tensors();
  for (int t = 0; t < kNumTensors; ++t) {
    const TensorSpec& spec = kNetTensors[t];
    const std::uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    if (name != spec.name) {
      throw CheckpointShapeError("tensor " + std::to_string(t) + " is named '" + name +
                                 "', expected '" + spec.name + "'");
    }
    const std::uint8_t rank = static_cast<std::uint8_t>(r.bytes(1)[0]);
    if (rank != spec.rank) {
      throw CheckpointShapeError("tensor '" + name + "' has rank " + std::to_string(rank) +
                                 ", expected " + std::to_string(spec.rank));
    }
    std::size_t elems = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim != spec.dims[d]) {
        throw CheckpointShapeError("tensor '" + name + "' dimension " + std::to_string(d) +
                                   " is " + std::to_string(dim) + ", expected " +
                                   std::to_string(spec.dims[d]));
      }
      elems *= dim;
    }
    r.need(elems * sizeof(float));
    auto& dst = *tensors[t];
    std::memcpy(dst.data(), buf.data() + r.pos, elems * sizeof(float));
    r.pos += elems * sizeof(float);
  }
  if (r.pos != buf.size()) {
    throw CheckpointFormatError("trailing bytes after tensor table in " + path.string());
  }
  return ckpt;
}

}  // namespace ctl
