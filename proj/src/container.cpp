#include "advokat/container.hpp"

#include <set>

namespace advokat {

namespace {
constexpr uint8_t kMagic0 = 0x41;
constexpr uint8_t kMagic1 = 0x56;
constexpr uint8_t kVersion = 0x01;
}  // namespace

Bytes AggregateContainer::bodyBytes() const {
  ByteWriter w;
  w.u8(kMagic0);
  w.u8(kMagic1);
  w.u8(kVersion);
  w.u8(uint8_t(subtree.depth()));
  w.raw(std::span<const uint8_t>(subtree.prefix()));
  w.u32(c);
  w.u32(c1);
  w.u32(c2);
  static const Digest32 zero{};
  w.raw(std::span<const uint8_t>(h1 ? *h1 : zero));
  w.raw(std::span<const uint8_t>(h2 ? *h2 : zero));
  encodeAggregate(a, w);
  return w.take();
}

bool AggregateContainer::wellFormed() const {
  if (c < 1) return false;
  if (c != c1 + c2) {
    if (!isLeaf()) return false;  // leaves keep c1 = c2 = 0
  }
  if (isLeaf()) {
    if (c1 != 0 || c2 != 0 || h1 || h2) return false;
    if (subtree.depth() != subtree.kidBits()) return false;
  } else {
    if (c1 == 0 || !h1) return false;  // surviving child lives in slot 1
    if ((c2 == 0) != !h2) return false;
  }
  for (const Rational& e : a.payload)
    if (e.isNegative()) return false;
  return h == canonicalHash();
}

AggregateContainer AggregateContainer::decode(std::span<const uint8_t> body, int kidBits) {
  ByteReader r(body);
  if (r.u8() != kMagic0 || r.u8() != kMagic1) throw ContainerError("bad container magic");
  if (r.u8() != kVersion) throw ContainerError("unknown container version");
  int depth = r.u8();
  Bytes prefix = r.raw(20);
  AggregateContainer out;
  out.c = r.u32();
  out.c1 = r.u32();
  out.c2 = r.u32();
  Bytes h1b = r.raw(32);
  Bytes h2b = r.raw(32);
  out.a = decodeAggregate(r);
  if (!r.done()) throw ContainerError("trailing container bytes");
  if (depth > kidBits) throw ContainerError("container depth exceeds kid width");

  Digest20 p{};
  std::copy(prefix.begin(), prefix.end(), p.begin());
  Kid anchor(p, kidBits);
  out.subtree = SubtreeId::containing(anchor, depth);
  // Reject prefixes with set bits beyond the depth; those cannot round-trip.
  if (out.subtree.prefix() != p) throw ContainerError("subtree prefix has stray bits");

  auto toDigest = [](const Bytes& b) {
    Digest32 d{};
    std::copy(b.begin(), b.end(), d.begin());
    return d;
  };
  Digest32 z{};
  if (toDigest(h1b) != z) out.h1 = toDigest(h1b);
  if (toDigest(h2b) != z) out.h2 = toDigest(h2b);
  out.h = out.canonicalHash();
  return out;
}

AggregateContainer buildLeafContainer(const Aggregate& a, const Kid& kid,
                                      const AlgebraSpec& spec) {
  if (!validateInitial(a, spec))
    throw ContainerError("initial aggregate fails Manhattan-norm validity");
  AggregateContainer out;
  out.a = a;
  out.c = 1;
  out.subtree = SubtreeId::containing(kid, kid.bits());
  out.h = out.canonicalHash();
  return out;
}

AggregateContainer buildParentContainer(const AggregateContainer& own,
                                        const AggregateContainer* sibling) {
  AggregateContainer out;
  if (!sibling) {
    if (own.subtree.depth() == 0) throw ContainerError("root container cannot be passed up");
    out.a = own.a;
    out.c = own.c;
    out.c1 = own.c;
    out.h1 = own.h;
    out.subtree = own.subtree.parent();
    out.h = out.canonicalHash();
    return out;
  }
  if (own.subtree.depth() != sibling->subtree.depth())
    throw ContainerError("child depth mismatch");
  if (own.subtree.sibling() != sibling->subtree)
    throw ContainerError("containers are not for sibling subtrees");
  const AggregateContainer& left = own.subtree.sideBit() ? *sibling : own;
  const AggregateContainer& right = own.subtree.sideBit() ? own : *sibling;
  out.a = combine(left.a, right.a);
  out.c1 = left.c;
  out.c2 = right.c;
  out.c = out.c1 + out.c2;
  out.h1 = left.h;
  out.h2 = right.h;
  out.subtree = own.subtree.parent();
  out.h = out.canonicalHash();
  return out;
}

ChainReport verifyChain(const AggregateContainer& root, const WitnessMap& witnesses,
                        const Digest32& leafHash) {
  ChainReport rep;
  std::set<Digest32> seen;
  bool sawBad = false;
  bool found = false;

  // Iterative DFS over child links. A node is traversed only if it
  // re-hashes to the hash that referenced it.
  std::vector<const AggregateContainer*> stack;
  auto check = [&](const AggregateContainer& node, const Digest32& expected) -> bool {
    if (node.canonicalHash() != expected || !node.wellFormed()) {
      rep.corrupt.push_back(expected);
      sawBad = true;
      return false;
    }
    return true;
  };

  if (!check(root, root.h)) {
    rep.result = ChainResult::Failed;
    return rep;
  }
  stack.push_back(&root);
  seen.insert(root.h);
  if (root.h == leafHash) found = true;

  while (!stack.empty() && !found) {
    const AggregateContainer* node = stack.back();
    stack.pop_back();
    for (const std::optional<Digest32>& link : {node->h1, node->h2}) {
      if (!link || seen.count(*link)) continue;
      seen.insert(*link);
      if (*link == leafHash) {
        auto it = witnesses.find(*link);
        if (it == witnesses.end()) {
          rep.missing.push_back(*link);
          continue;
        }
        if (!check(it->second, *link)) continue;
        found = true;
        break;
      }
      auto it = witnesses.find(*link);
      if (it == witnesses.end()) {
        rep.missing.push_back(*link);
        continue;
      }
      if (!check(it->second, *link)) continue;
      stack.push_back(&it->second);
    }
  }

  if (found)
    rep.result = ChainResult::Verified;
  else if (sawBad)
    rep.result = ChainResult::Failed;
  else if (!rep.missing.empty())
    rep.result = ChainResult::Incomplete;
  else
    rep.result = ChainResult::Failed;
  return rep;
}

}  // namespace advokat
