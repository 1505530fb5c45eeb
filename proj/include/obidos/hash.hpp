#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace obidos {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

/// 64-bit FNV-1a; stable across platforms and runs.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void random_bytes(std::span<std::uint8_t> out);
std::string random_token(std::size_t bytes = 16);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace obidos
