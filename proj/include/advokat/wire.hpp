#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "advokat/container.hpp"
#include "advokat/identity.hpp"
#include "advokat/kid.hpp"

namespace advokat {

using Address = uint32_t;

/// Routing-table entry; the credentials are the proof of the KID.
struct Contact {
  Credentials cred;
  Address address = 0;

  const Kid& kid() const { return cred.kid; }
};

/// Two verified signatures by one peer with equal depth and counter but
/// different hashes. Self-contained: verifies without the containers, since
/// a signer only ever signs containers of its own subtree path.
struct DeviationProof {
  Credentials culprit;
  ContainerSignature sigA;
  ContainerSignature sigB;

  Bytes encode() const;
  static DeviationProof decode(std::span<const uint8_t> bytes, int kidBits);

  /// c <= 3, distinct hashes, matching (d, c), both signatures by culprit.
  bool verify(const AdminPublicKey& adminPub, KidMode mode) const;
};

/// Summary of a candidate (no aggregate payload) carried in confirmation
/// refusals for the hash majority vote.
struct ContainerHeader {
  Digest32 h{};
  uint32_t c = 0;
  uint32_t c1 = 0;
  uint32_t c2 = 0;
  std::optional<Digest32> h1;
  std::optional<Digest32> h2;
  SubtreeId subtree;

  static ContainerHeader of(const AggregateContainer& k) {
    return {k.h, k.c, k.c1, k.c2, k.h1, k.h2, k.subtree};
  }
};

// --------------------------------------------------------------------------
// Request bodies

struct LookupRequest {
  Kid target;
};

struct PullRequest {
  SubtreeId subtree;
};

struct ConfirmRequest {
  AggregateContainer candidate;
  std::vector<RoleSignature> partialSigs;  // rules 1, 2, 4
  std::vector<DeviationProof> proofs;
  bool rootExtra = false;
};

struct StoreRequest {
  Digest20 key{};
  Bytes value;
};

struct GetRequest {
  Digest20 key{};
};

using RequestBody =
    std::variant<LookupRequest, PullRequest, ConfirmRequest, StoreRequest, GetRequest>;

// --------------------------------------------------------------------------
// Response bodies

enum class Status : uint8_t { Ok, Deny, Refuse, NotFound, Ignored };

struct LookupResponse {
  std::vector<Contact> contacts;
};

struct PullResponse {
  Status status = Status::Deny;
  std::optional<ConfirmedContainer> container;
  std::vector<DeviationProof> proofs;
};

struct ConfirmResponse {
  Status status = Status::Deny;
  std::optional<ContainerSignature> signature;  // Ok
  std::optional<ContainerHeader> own;           // Refuse: responder's candidate
  std::vector<RoleSignature> ownSigs;           // Refuse: its rules 1, 2, 4
  std::vector<DeviationProof> proofs;
};

struct StoreResponse {
  Status status = Status::Ok;  // Ok stored, Ignored when a value already exists
};

struct GetResponse {
  Status status = Status::NotFound;
  Bytes value;
};

using ResponseBody =
    std::variant<LookupResponse, PullResponse, ConfirmResponse, StoreResponse, GetResponse>;

// --------------------------------------------------------------------------

struct RequestEnvelope {
  Address from = 0;
  Credentials sender;
  uint64_t nonce = 0;
  RequestBody body;
  Bytes signature;

  Bytes signedBytes() const;
};

struct ResponseEnvelope {
  Address from = 0;
  Credentials sender;
  uint64_t nonce = 0;
  ResponseBody body;
  Bytes signature;
  bool silence = false;  // adversarial non-answer on a reliable channel

  Bytes signedBytes() const;
};

// Serialization of the pieces above (canonical, used for signing and for
// DHT-stored proofs).
void encode(const Credentials& c, ByteWriter& w);
Credentials decodeCredentials(ByteReader& r, int kidBits);
void encode(const ContainerSignature& s, ByteWriter& w);
ContainerSignature decodeContainerSignature(ByteReader& r, int kidBits);
void encode(const ConfirmedContainer& cc, ByteWriter& w);
void encode(const ContainerHeader& hdr, ByteWriter& w);
void encode(const RequestBody& b, ByteWriter& w);
void encode(const ResponseBody& b, ByteWriter& w);

}  // namespace advokat
