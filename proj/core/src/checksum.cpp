#include "divan/checksum.hpp"

#include <cstdio>

#include <zlib.h>

namespace divan {

std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t seed) {
  auto crc = static_cast<uLong>(seed);
  const auto* data = reinterpret_cast<const Bytef*>(bytes.data());
  auto remaining = bytes.size();
  // zlib takes uInt lengths.
  while (remaining > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed) {
  auto hash = seed;
  for (const auto c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string to_hex(std::uint64_t value) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

}  // namespace divan
