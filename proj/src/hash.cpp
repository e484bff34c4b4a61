// RIPEMD160() is the low-level legacy API; the EVP fetch requires the legacy
// provider which is not loaded by default on this OpenSSL build.
#define OPENSSL_SUPPRESS_DEPRECATED

#include "advokat/hash.hpp"

#include <openssl/ripemd.h>
#include <openssl/sha.h>

namespace advokat {

Digest32 sha256(std::span<const uint8_t> data) {
  Digest32 out;
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest20 ripemd160(std::span<const uint8_t> data) {
  Digest20 out;
  RIPEMD160(data.data(), data.size(), out.data());
  return out;
}

Digest20 hash160(std::span<const uint8_t> data) {
  Digest32 inner = sha256(data);
  return ripemd160(inner);
}

}  // namespace advokat
