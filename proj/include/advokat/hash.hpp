#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>

#include "advokat/bytes.hpp"

namespace advokat {

using Digest32 = std::array<uint8_t, 32>;
using Digest20 = std::array<uint8_t, 20>;

Digest32 sha256(std::span<const uint8_t> data);
Digest20 ripemd160(std::span<const uint8_t> data);

/// RIPEMD-160 of SHA-256, the 160-bit identifier hash.
Digest20 hash160(std::span<const uint8_t> data);

inline std::string toHex(const Digest32& d) { return toHex(std::span<const uint8_t>(d)); }
inline std::string toHex(const Digest20& d) { return toHex(std::span<const uint8_t>(d)); }

}  // namespace advokat
