#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "advokat/bytes.hpp"
#include "advokat/hash.hpp"
#include "advokat/kid.hpp"
#include "advokat/rng.hpp"

namespace advokat {

struct IdentityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ed25519 signing key pair, generated deterministically from a seeded
/// stream. Signatures are deterministic by construction.
class KeyPair {
 public:
  KeyPair() = default;
  static KeyPair generate(Rng& rng);

  const Bytes& publicKey() const { return pk_; }
  Bytes sign(std::span<const uint8_t> message) const;

  static bool verify(std::span<const uint8_t> pk, std::span<const uint8_t> message,
                     std::span<const uint8_t> signature);

 private:
  Bytes sk_;
  Bytes pk_;
};

// ---------------------------------------------------------------------------
// Chaum blind signatures (RSA): chi(m, r) = m * r^e, sigma_A(b) = b^d,
// delta(s, r) = s * r^-1, all mod N. The signed message is SHA-256(pk)
// interpreted as an integer.

struct AdminPublicKey {
  mpz_class modulus;
  mpz_class exponent;

  size_t tokenBytes() const { return (mpz_sizeinbase(modulus.get_mpz_t(), 2) + 7) / 8; }
};

struct BlindingState {
  mpz_class factor;   // r
  mpz_class blinded;  // b = chi(pk, r)
};

mpz_class hashToGroup(std::span<const uint8_t> pkBytes, const AdminPublicKey& pub);

/// b = m * r^e mod N. The caller draws r until invertible; drawBlinding does.
mpz_class blindMessage(const mpz_class& m, const mpz_class& r, const AdminPublicKey& pub);
BlindingState drawBlinding(std::span<const uint8_t> pkBytes, const AdminPublicKey& pub, Rng& rng);

/// t = s * r^-1 mod N, verified against pk before returning.
/// Throws IdentityError if the administrator signature does not check out.
Bytes unblindAndVerify(const mpz_class& s, const mpz_class& r, std::span<const uint8_t> pkBytes,
                       const AdminPublicKey& pub);

bool adminVerify(std::span<const uint8_t> pkBytes, const Bytes& token, const AdminPublicKey& pub);

mpz_class tokenToInteger(const Bytes& token);
Bytes integerToToken(const mpz_class& t, const AdminPublicKey& pub);

/// The eligibility authority. Signs exactly one blinded message per
/// authenticated requester; a second request signals a Sybil attempt.
class Administrator {
 public:
  /// Deterministic key generation; bits >= 512 (512 is the test profile,
  /// 2048 the default elsewhere).
  Administrator(int modulusBits, Rng& rng);

  const AdminPublicKey& publicKey() const { return pub_; }

  enum class SignStatus { Issued, DuplicateRequest, NotAuthenticated };
  struct SignResult {
    SignStatus status;
    mpz_class signature;
  };

  /// requesterId models the authenticated administrator channel.
  SignResult signBlinded(const mpz_class& blinded, uint64_t requesterId);

  void authenticate(uint64_t requesterId) { authenticated_.insert(requesterId); }
  size_t issuedCount() const { return served_.size(); }

 private:
  AdminPublicKey pub_;
  mpz_class secret_;
  std::set<uint64_t> authenticated_;
  std::set<uint64_t> served_;
};

// ---------------------------------------------------------------------------

enum class KidMode : uint8_t { Token, SimulationPk, PerfectTree };

/// Token mode hashes the authorization token; simulation-pk mode hashes the
/// public key (SHA-256 then RIPEMD-160). Both truncate to B bits.
Kid deriveKid(const Bytes& token, const Bytes& pk, KidMode mode, int bits);

/// Public identity attached to every signature and message.
struct Credentials {
  Kid kid;
  Bytes pk;
  Bytes token;

  bool operator==(const Credentials&) const = default;
};

/// sigma_i(h, d, c): binds a container hash, its depth and its counter to the
/// signer. Only valid for containers of subtrees the signer inhabits.
struct ContainerSignature {
  Digest32 h{};
  uint16_t depth = 0;
  uint32_t counter = 0;
  Credentials signer;
  Bytes signature;

  Bytes claimBytes() const;
  bool operator==(const ContainerSignature&) const = default;
};

ContainerSignature signContainerClaim(const KeyPair& keys, const Credentials& signer,
                                      const Digest32& h, int depth, uint32_t counter);

/// Cryptographic checks only: signature bytes, token, KID proof. Subtree
/// capacity is enforced by the caller, which knows the container.
bool verifyContainerClaim(const ContainerSignature& sig, const AdminPublicKey& adminPub,
                          KidMode mode);

}  // namespace advokat
