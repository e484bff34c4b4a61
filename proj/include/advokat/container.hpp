#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "advokat/algebra.hpp"
#include "advokat/hash.hpp"
#include "advokat/identity.hpp"
#include "advokat/kid.hpp"

namespace advokat {

struct ContainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Hash-chained aggregation record for one tree node. Child slots are
/// canonical: with two children, slot 1 is the 0-branch child and slot 2 the
/// 1-branch child, so every peer of a subtree computes bit-identical bytes
/// for the same node. A single surviving child always sits in slot 1 (c2 = 0
/// marks the absent sibling).
struct AggregateContainer {
  Digest32 h{};
  Aggregate a;
  uint32_t c = 0;
  uint32_t c1 = 0;
  uint32_t c2 = 0;
  std::optional<Digest32> h1;
  std::optional<Digest32> h2;
  SubtreeId subtree;

  bool isLeaf() const { return c == 1 && !h1 && !h2; }

  /// Canonical layout without h: magic, version, depth, prefix, counters,
  /// child hashes (zero-filled when absent), aggregate payload.
  Bytes bodyBytes() const;
  Digest32 canonicalHash() const { return sha256(bodyBytes()); }

  /// Structural checks: counter sum, child-slot conventions, hash match.
  bool wellFormed() const;

  static AggregateContainer decode(std::span<const uint8_t> body, int kidBits);

  bool operator==(const AggregateContainer& o) const { return h == o.h && bodyBytes() == o.bodyBytes(); }
};

AggregateContainer buildLeafContainer(const Aggregate& a, const Kid& kid,
                                      const AlgebraSpec& spec);

/// Combines a node's container with its sibling's (or passes it up when the
/// sibling subtree is empty). Inputs must be sibling subtrees of equal depth.
AggregateContainer buildParentContainer(const AggregateContainer& own,
                                        const AggregateContainer* sibling);

// ---------------------------------------------------------------------------

enum class SigRule : uint8_t {
  Rule1 = 1,  // producer's signature on the container
  Rule2 = 2,  // producer's signature on its own child
  Rule3 = 3,  // confirmer from the producer's half
  Rule4 = 4,  // pulled child's own rule-1 signature
  Rule5 = 5,  // confirmer from the pulled half
};

struct RoleSignature {
  SigRule rule;
  ContainerSignature sig;
};

/// Container plus the signature set that makes it acceptable in pulls, or a
/// compensation pair of fully signed children when a confirmation signature
/// could not be acquired.
struct ConfirmedContainer {
  AggregateContainer container;
  std::vector<RoleSignature> signatures;
  std::vector<std::shared_ptr<const ConfirmedContainer>> compensation;

  const ContainerSignature* find(SigRule rule) const {
    for (const auto& rs : signatures)
      if (rs.rule == rule) return &rs.sig;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------

enum class ChainResult { Verified, Failed, Incomplete };

struct ChainReport {
  ChainResult result = ChainResult::Failed;
  std::vector<Digest32> missing;  // witnesses absent from the map
  std::vector<Digest32> corrupt;  // witnesses failing re-hash or counters
};

using WitnessMap = std::map<Digest32, AggregateContainer>;

/// Walks h1/h2 links from the root container towards leafHash. Every
/// traversed witness must re-hash to its key and keep c = c1 + c2.
ChainReport verifyChain(const AggregateContainer& root, const WitnessMap& witnesses,
                        const Digest32& leafHash);

}  // namespace advokat
