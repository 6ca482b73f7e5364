#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace divan {

std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t seed = 0);

// Stable 64-bit FNV-1a; used for content-addressed ids, not for integrity.
std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t value);

}  // namespace divan
