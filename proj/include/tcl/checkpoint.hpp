#pragma once

// Binary parameter container. Exact byte layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "TCL1"
//   4       4     u32 format version (currently 1)
//   8       4     u32 scalar width in bytes (4 = float32, 8 = float64)
//   12      8     u64 parameter count N
//   then N records, each:
//           4     u32 name length L
//           L     name bytes (UTF-8)
//           4     u32 rank (always 2)
//           16    u64 rows, u64 cols
//           rows*cols*width   IEEE-754 values, little-endian, row-major
//
// Loading is strict: magic, version, scalar width, names, and shapes must all
// match the destination parameter list.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tcl/common.hpp"
#include "tcl/tensor.hpp"

namespace tcl::ad {

namespace ckpt_detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

// Scalars are serialized via byte copy; the build targets little-endian
// hosts, which the static_assert in save_checkpoint documents.
template <class T>
void put_scalars(std::ostream& os, const T* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void get_scalars(std::istream& is, T* p, size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw IoError("checkpoint: truncated value block");
}

}  // namespace ckpt_detail

inline constexpr char kCheckpointMagic[4] = {'T', 'C', 'L', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const std::string& path, const std::vector<Tensor<T>>& params) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic, 4);
  ckpt_detail::put_u32(os, kCheckpointVersion);
  ckpt_detail::put_u32(os, static_cast<std::uint32_t>(sizeof(T)));
  ckpt_detail::put_u64(os, params.size());
  for (const auto& p : params) {
    check(!p.name().empty(), "checkpoint: unnamed parameter");
    ckpt_detail::put_u32(os, static_cast<std::uint32_t>(p.name().size()));
    os.write(p.name().data(), static_cast<std::streamsize>(p.name().size()));
    ckpt_detail::put_u32(os, 2);
    ckpt_detail::put_u64(os, static_cast<std::uint64_t>(p.rows()));
    ckpt_detail::put_u64(os, static_cast<std::uint64_t>(p.cols()));
    ckpt_detail::put_scalars(os, p.data(), p.size());
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

// Loads values into an existing parameter list by name. Every destination
// parameter must be present in the file with a matching shape.
template <class T>
void load_checkpoint(const std::string& path, std::vector<Tensor<T>>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  const std::uint32_t version = ckpt_detail::get_u32(is);
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  const std::uint32_t width = ckpt_detail::get_u32(is);
  if (width != sizeof(T))
    throw IoError("checkpoint: scalar width " + std::to_string(width) +
                  " does not match expected " + std::to_string(sizeof(T)));
  const std::uint64_t n = ckpt_detail::get_u64(is);

  struct Entry {
    std::uint64_t rows, cols;
    std::vector<T> values;
  };
  std::map<std::string, Entry> entries;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t len = ckpt_detail::get_u32(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw IoError("checkpoint: truncated name");
    const std::uint32_t rank = ckpt_detail::get_u32(is);
    if (rank != 2) throw IoError("checkpoint: unsupported rank for '" + name + "'");
    Entry e;
    e.rows = ckpt_detail::get_u64(is);
    e.cols = ckpt_detail::get_u64(is);
    e.values.resize(static_cast<size_t>(e.rows * e.cols));
    ckpt_detail::get_scalars(is, e.values.data(), e.values.size());
    entries.emplace(std::move(name), std::move(e));
  }

  for (auto& p : params) {
    auto it = entries.find(p.name());
    if (it == entries.end())
      throw IoError("checkpoint: parameter '" + p.name() + "' missing in " + path);
    const Entry& e = it->second;
    if (e.rows != static_cast<std::uint64_t>(p.rows()) ||
        e.cols != static_cast<std::uint64_t>(p.cols()))
      throw IoError("checkpoint: shape mismatch for '" + p.name() + "'");
    std::copy(e.values.begin(), e.values.end(), p.data());
  }
}

}  // namespace tcl::ad
