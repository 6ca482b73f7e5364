#pragma once

#include <bit>
#include <cstring>
#include <optional>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "divan/checksum.hpp"
#include "divan/error.hpp"

// All on-disk arrays are little-endian fixed width; the raw-copy fast path relies on that.
static_assert(std::endian::native == std::endian::little, "on-disk layout assumes a little-endian host");

namespace divan::detail {

template <typename T>
std::span<const std::byte> as_bytes_of(const std::vector<T>& values) {
  return std::as_bytes(std::span{values});
}

inline void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  auto out = std::ofstream{path, std::ios::binary | std::ios::trunc};
  if (!out) {
    throw Error("cannot write '" + path.string() + "'");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error("short write to '" + path.string() + "'");
  }
}

inline std::vector<std::byte> read_file(const std::filesystem::path& path) {
  auto in = std::ifstream{path, std::ios::binary | std::ios::ate};
  if (!in) {
    throw Error("cannot read '" + path.string() + "'");
  }
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  auto bytes = std::vector<std::byte>(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) {
    throw Error("short read from '" + path.string() + "'");
  }
  return bytes;
}

inline std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string{reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::as_bytes(std::span{text.data(), text.size()}));
}

template <typename T>
std::vector<T> bytes_to_vector(std::span<const std::byte> bytes, const std::filesystem::path& origin) {
  if (bytes.size() % sizeof(T) != 0) {
    throw IntegrityError("'" + origin.string() + "' has a size that is not a multiple of " +
                         std::to_string(sizeof(T)));
  }
  auto out = std::vector<T>(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

// Writes `values` and returns the crc32 of what was written.
template <typename T>
std::uint32_t write_array(const std::filesystem::path& path, const std::vector<T>& values) {
  const auto bytes = as_bytes_of(values);
  write_file(path, bytes);
  return crc32(bytes);
}

template <typename T>
std::vector<T> read_array(const std::filesystem::path& path, std::optional<std::uint32_t> expected_crc) {
  const auto bytes = read_file(path);
  if (expected_crc && crc32(bytes) != *expected_crc) {
    throw IntegrityError("checksum mismatch in '" + path.string() + "'");
  }
  return bytes_to_vector<T>(bytes, path);
}

// Append-only little-endian record writer for compact binary headers.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::byte*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::span<const std::byte> bytes) { bytes_.insert(bytes_.end(), bytes.begin(), bytes.end()); }
  const std::vector<std::byte>& bytes() const { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::byte> bytes, std::filesystem::path origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    if (offset_ + sizeof(T) > bytes_.size()) {
      throw IntegrityError("'" + origin_.string() + "' is truncated");
    }
    auto value = T{};
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }
  std::span<const std::byte> rest() const { return bytes_.subspan(offset_); }

 private:
  std::span<const std::byte> bytes_;
  std::filesystem::path origin_;
  std::size_t offset_ = 0;
};

}  // namespace divan::detail
