#include "advokat/wire.hpp"

namespace advokat {

void encode(const Credentials& c, ByteWriter& w) {
  w.u8(uint8_t(c.kid.bits()));
  w.raw(std::span<const uint8_t>(c.kid.bytes()));
  w.blob(c.pk);
  w.blob(c.token);
}

Credentials decodeCredentials(ByteReader& r, int kidBits) {
  int bits = r.u8();
  if (bits != kidBits) throw std::invalid_argument("credential kid width mismatch");
  Bytes kb = r.raw(20);
  Digest20 d{};
  std::copy(kb.begin(), kb.end(), d.begin());
  Credentials c;
  c.kid = Kid(d, bits);
  c.pk = r.blob();
  c.token = r.blob();
  return c;
}

void encode(const ContainerSignature& s, ByteWriter& w) {
  w.raw(std::span<const uint8_t>(s.h));
  w.u16(s.depth);
  w.u32(s.counter);
  encode(s.signer, w);
  w.blob(s.signature);
}

ContainerSignature decodeContainerSignature(ByteReader& r, int kidBits) {
  ContainerSignature s;
  Bytes h = r.raw(32);
  std::copy(h.begin(), h.end(), s.h.begin());
  s.depth = r.u16();
  s.counter = r.u32();
  s.signer = decodeCredentials(r, kidBits);
  s.signature = r.blob();
  return s;
}

void encode(const ConfirmedContainer& cc, ByteWriter& w) {
  w.blob(cc.container.bodyBytes());
  w.u32(uint32_t(cc.signatures.size()));
  for (const RoleSignature& rs : cc.signatures) {
    w.u8(uint8_t(rs.rule));
    encode(rs.sig, w);
  }
  w.u32(uint32_t(cc.compensation.size()));
  for (const auto& child : cc.compensation) encode(*child, w);
}

void encode(const ContainerHeader& hdr, ByteWriter& w) {
  static const Digest32 zero{};
  w.raw(std::span<const uint8_t>(hdr.h));
  w.u8(uint8_t(hdr.subtree.depth()));
  w.raw(std::span<const uint8_t>(hdr.subtree.prefix()));
  w.u32(hdr.c);
  w.u32(hdr.c1);
  w.u32(hdr.c2);
  w.raw(std::span<const uint8_t>(hdr.h1 ? *hdr.h1 : zero));
  w.raw(std::span<const uint8_t>(hdr.h2 ? *hdr.h2 : zero));
}

Bytes DeviationProof::encode() const {
  ByteWriter w;
  w.tag("AVDP");
  advokat::encode(culprit, w);
  advokat::encode(sigA, w);
  advokat::encode(sigB, w);
  return w.take();
}

DeviationProof DeviationProof::decode(std::span<const uint8_t> bytes, int kidBits) {
  ByteReader r(bytes);
  Bytes tag = r.raw(4);
  if (std::string(tag.begin(), tag.end()) != "AVDP")
    throw std::invalid_argument("bad deviation proof tag");
  DeviationProof p;
  p.culprit = decodeCredentials(r, kidBits);
  p.sigA = decodeContainerSignature(r, kidBits);
  p.sigB = decodeContainerSignature(r, kidBits);
  return p;
}

bool DeviationProof::verify(const AdminPublicKey& adminPub, KidMode mode) const {
  if (sigA.signer != culprit || sigB.signer != culprit) return false;
  if (sigA.depth != sigB.depth || sigA.counter != sigB.counter) return false;
  if (sigA.h == sigB.h) return false;
  if (sigA.counter == 0 || sigA.counter > 3) return false;
  return verifyContainerClaim(sigA, adminPub, mode) && verifyContainerClaim(sigB, adminPub, mode);
}

namespace {

void encodeContact(const Contact& c, ByteWriter& w) {
  encode(c.cred, w);
  w.u32(c.address);
}

struct RequestEncoder {
  ByteWriter& w;
  void operator()(const LookupRequest& b) {
    w.u8(1);
    w.u8(uint8_t(b.target.bits()));
    w.raw(std::span<const uint8_t>(b.target.bytes()));
  }
  void operator()(const PullRequest& b) {
    w.u8(2);
    w.u8(uint8_t(b.subtree.depth()));
    w.raw(std::span<const uint8_t>(b.subtree.prefix()));
  }
  void operator()(const ConfirmRequest& b) {
    w.u8(3);
    w.blob(b.candidate.bodyBytes());
    w.u32(uint32_t(b.partialSigs.size()));
    for (const RoleSignature& rs : b.partialSigs) {
      w.u8(uint8_t(rs.rule));
      encode(rs.sig, w);
    }
    w.u32(uint32_t(b.proofs.size()));
    for (const DeviationProof& p : b.proofs) w.blob(p.encode());
    w.u8(b.rootExtra ? 1 : 0);
  }
  void operator()(const StoreRequest& b) {
    w.u8(4);
    w.raw(std::span<const uint8_t>(b.key));
    w.blob(b.value);
  }
  void operator()(const GetRequest& b) {
    w.u8(5);
    w.raw(std::span<const uint8_t>(b.key));
  }
};

struct ResponseEncoder {
  ByteWriter& w;
  void operator()(const LookupResponse& b) {
    w.u8(1);
    w.u32(uint32_t(b.contacts.size()));
    for (const Contact& c : b.contacts) encodeContact(c, w);
  }
  void operator()(const PullResponse& b) {
    w.u8(2);
    w.u8(uint8_t(b.status));
    w.u8(b.container ? 1 : 0);
    if (b.container) encode(*b.container, w);
    w.u32(uint32_t(b.proofs.size()));
    for (const DeviationProof& p : b.proofs) w.blob(p.encode());
  }
  void operator()(const ConfirmResponse& b) {
    w.u8(3);
    w.u8(uint8_t(b.status));
    w.u8(b.signature ? 1 : 0);
    if (b.signature) encode(*b.signature, w);
    w.u8(b.own ? 1 : 0);
    if (b.own) encode(*b.own, w);
    w.u32(uint32_t(b.ownSigs.size()));
    for (const RoleSignature& rs : b.ownSigs) {
      w.u8(uint8_t(rs.rule));
      encode(rs.sig, w);
    }
    w.u32(uint32_t(b.proofs.size()));
    for (const DeviationProof& p : b.proofs) w.blob(p.encode());
  }
  void operator()(const StoreResponse& b) {
    w.u8(4);
    w.u8(uint8_t(b.status));
  }
  void operator()(const GetResponse& b) {
    w.u8(5);
    w.u8(uint8_t(b.status));
    w.blob(b.value);
  }
};

}  // namespace

void encode(const RequestBody& b, ByteWriter& w) { std::visit(RequestEncoder{w}, b); }
void encode(const ResponseBody& b, ByteWriter& w) { std::visit(ResponseEncoder{w}, b); }

Bytes RequestEnvelope::signedBytes() const {
  ByteWriter w;
  w.tag("AVRQ");
  encode(sender, w);
  w.u64(nonce);
  encode(body, w);
  return w.take();
}

Bytes ResponseEnvelope::signedBytes() const {
  ByteWriter w;
  w.tag("AVRS");
  encode(sender, w);
  w.u64(nonce);
  encode(body, w);
  return w.take();
}

}  // namespace advokat
