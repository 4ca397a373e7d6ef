// Copyright 2026 The cfedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfedit/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace cfedit {
namespace {

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("checkpoint " + path.string() + ": truncated header");
  return to_little(v);
}

}  // namespace

void write_tensor_container(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kCheckpointMagic, 4);
    put_u32(os, kCheckpointVersion);
    for (const auto& r : records) {
      put_u32(os, static_cast<std::uint32_t>(r.name.size()));
      os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      put_u32(os, static_cast<std::uint32_t>(r.tensor.rank()));
      for (int d : r.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(d));
      for (float f : r.tensor.span()) {
        f = to_little(f);
        os.write(reinterpret_cast<const char*>(&f), sizeof f);
      }
    }
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedTensor> read_tensor_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw IoError("checkpoint " + path.string() + ": bad magic (expected CFWT)");
  }
  const std::uint32_t version = get_u32(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  std::vector<NamedTensor> records;
  while (is.peek() != std::char_traits<char>::eof()) {
    NamedTensor r;
    const std::uint32_t name_len = get_u32(is, path);
    if (name_len > 4096) throw IoError("checkpoint " + path.string() + ": implausible name length");
    r.name.resize(name_len);
    if (!is.read(r.name.data(), name_len)) throw IoError("checkpoint " + path.string() + ": truncated name");
    const std::uint32_t rank = get_u32(is, path);
    if (rank > 8) throw IoError("checkpoint " + path.string() + ": implausible rank for '" + r.name + "'");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get_u32(is, path)));
    r.tensor = Tensor<float>(shape);
    for (float& f : r.tensor.span()) {
      if (!is.read(reinterpret_cast<char*>(&f), sizeof f)) {
        throw IoError("checkpoint " + path.string() + ": truncated payload for '" + r.name + "'");
      }
      f = to_little(f);
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace cfedit
