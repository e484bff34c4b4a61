#include "advokat/identity.hpp"

#include <sodium.h>

namespace advokat {

namespace {
void ensureSodium() {
  static const int status = sodium_init();
  if (status < 0) throw IdentityError("libsodium initialization failed");
}
}  // namespace

KeyPair KeyPair::generate(Rng& rng) {
  ensureSodium();
  uint8_t seed[crypto_sign_SEEDBYTES];
  rng.fill(seed, sizeof seed);
  KeyPair kp;
  kp.pk_.resize(crypto_sign_PUBLICKEYBYTES);
  kp.sk_.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_seed_keypair(kp.pk_.data(), kp.sk_.data(), seed);
  return kp;
}

Bytes KeyPair::sign(std::span<const uint8_t> message) const {
  if (sk_.empty()) throw IdentityError("signing with empty key pair");
  Bytes sig(crypto_sign_BYTES);
  unsigned long long siglen = 0;
  crypto_sign_detached(sig.data(), &siglen, message.data(), message.size(), sk_.data());
  if (siglen != crypto_sign_BYTES) throw IdentityError("ed25519 signing failed");
  return sig;
}

bool KeyPair::verify(std::span<const uint8_t> pk, std::span<const uint8_t> message,
                     std::span<const uint8_t> signature) {
  if (pk.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES)
    return false;
  ensureSodium();
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                     pk.data()) == 0;
}

// ---------------------------------------------------------------------------

namespace {

mpz_class bytesToInteger(std::span<const uint8_t> b) {
  mpz_class v;
  mpz_import(v.get_mpz_t(), b.size(), 1, 1, 1, 0, b.data());
  return v;
}

mpz_class randomBelow(const mpz_class& bound, Rng& rng) {
  size_t bits = mpz_sizeinbase(bound.get_mpz_t(), 2);
  size_t bytes = (bits + 7) / 8;
  Bytes buf(bytes);
  mpz_class v;
  do {
    rng.fill(buf.data(), buf.size());
    v = bytesToInteger(buf);
  } while (v >= bound || v <= 1);
  return v;
}

}  // namespace

mpz_class hashToGroup(std::span<const uint8_t> pkBytes, const AdminPublicKey& pub) {
  Digest32 d = sha256(pkBytes);
  mpz_class m = bytesToInteger(d);
  return m % pub.modulus;
}

mpz_class blindMessage(const mpz_class& m, const mpz_class& r, const AdminPublicKey& pub) {
  mpz_class re;
  mpz_powm(re.get_mpz_t(), r.get_mpz_t(), pub.exponent.get_mpz_t(), pub.modulus.get_mpz_t());
  return m * re % pub.modulus;
}

BlindingState drawBlinding(std::span<const uint8_t> pkBytes, const AdminPublicKey& pub, Rng& rng) {
  mpz_class m = hashToGroup(pkBytes, pub);
  for (;;) {
    mpz_class r = randomBelow(pub.modulus, rng);
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pub.modulus.get_mpz_t());
    if (g != 1) continue;  // non-invertible draw, try again
    return BlindingState{r, blindMessage(m, r, pub)};
  }
}

Bytes unblindAndVerify(const mpz_class& s, const mpz_class& r, std::span<const uint8_t> pkBytes,
                       const AdminPublicKey& pub) {
  mpz_class rInv;
  if (mpz_invert(rInv.get_mpz_t(), r.get_mpz_t(), pub.modulus.get_mpz_t()) == 0)
    throw IdentityError("blinding factor not invertible");
  mpz_class t = s * rInv % pub.modulus;
  Bytes token = integerToToken(t, pub);
  if (!adminVerify(pkBytes, token, pub))
    throw IdentityError("administrator signature failed verification after unblinding");
  return token;
}

bool adminVerify(std::span<const uint8_t> pkBytes, const Bytes& token, const AdminPublicKey& pub) {
  if (token.size() != pub.tokenBytes()) return false;
  mpz_class t = tokenToInteger(token);
  if (t >= pub.modulus) return false;
  mpz_class check;
  mpz_powm(check.get_mpz_t(), t.get_mpz_t(), pub.exponent.get_mpz_t(), pub.modulus.get_mpz_t());
  return check == hashToGroup(pkBytes, pub);
}

mpz_class tokenToInteger(const Bytes& token) { return bytesToInteger(token); }

Bytes integerToToken(const mpz_class& t, const AdminPublicKey& pub) {
  Bytes out(pub.tokenBytes(), 0);
  size_t count = 0;
  mpz_export(out.data(), &count, 1, 1, 1, 0, t.get_mpz_t());
  if (count < out.size()) {
    // mpz_export writes compact big-endian; right-align into fixed width.
    std::rotate(out.begin(), out.begin() + count, out.end());
  }
  return out;
}

Administrator::Administrator(int modulusBits, Rng& rng) {
  if (modulusBits < 512) throw IdentityError("modulus below test-profile minimum");
  mpz_class e = 65537;
  mpz_class p, q, n, phi, d;
  for (;;) {
    size_t half = size_t(modulusBits) / 2;
    Bytes buf(half / 8);
    rng.fill(buf.data(), buf.size());
    buf[0] |= 0xC0;  // keep the product at full width
    p = bytesToInteger(buf);
    mpz_nextprime(p.get_mpz_t(), p.get_mpz_t());
    rng.fill(buf.data(), buf.size());
    buf[0] |= 0xC0;
    q = bytesToInteger(buf);
    mpz_nextprime(q.get_mpz_t(), q.get_mpz_t());
    if (p == q) continue;
    n = p * q;
    phi = (p - 1) * (q - 1);
    if (mpz_invert(d.get_mpz_t(), e.get_mpz_t(), phi.get_mpz_t()) == 0) continue;
    break;
  }
  pub_.modulus = n;
  pub_.exponent = e;
  secret_ = d;
}

Administrator::SignResult Administrator::signBlinded(const mpz_class& blinded,
                                                     uint64_t requesterId) {
  if (!authenticated_.count(requesterId)) return {SignStatus::NotAuthenticated, 0};
  if (served_.count(requesterId)) return {SignStatus::DuplicateRequest, 0};
  served_.insert(requesterId);
  mpz_class s;
  mpz_class b = blinded % pub_.modulus;
  mpz_powm(s.get_mpz_t(), b.get_mpz_t(), secret_.get_mpz_t(), pub_.modulus.get_mpz_t());
  return {SignStatus::Issued, s};
}

// ---------------------------------------------------------------------------

Kid deriveKid(const Bytes& token, const Bytes& pk, KidMode mode, int bits) {
  switch (mode) {
    case KidMode::Token:
      return Kid(hash160(token), bits);
    case KidMode::SimulationPk:
      return Kid(hash160(pk), bits);
    case KidMode::PerfectTree:
      throw IdentityError("perfect-tree kids are assigned, not derived");
  }
  throw IdentityError("unknown kid mode");
}

Bytes ContainerSignature::claimBytes() const {
  ByteWriter w;
  w.tag("AVSG");
  w.raw(std::span<const uint8_t>(h));
  w.u16(depth);
  w.u32(counter);
  return w.take();
}

ContainerSignature signContainerClaim(const KeyPair& keys, const Credentials& signer,
                                      const Digest32& h, int depth, uint32_t counter) {
  ContainerSignature sig;
  sig.h = h;
  sig.depth = uint16_t(depth);
  sig.counter = counter;
  sig.signer = signer;
  sig.signature = keys.sign(sig.claimBytes());
  return sig;
}

bool verifyContainerClaim(const ContainerSignature& sig, const AdminPublicKey& adminPub,
                          KidMode mode) {
  if (!KeyPair::verify(sig.signer.pk, sig.claimBytes(), sig.signature)) return false;
  if (!adminVerify(sig.signer.pk, sig.signer.token, adminPub)) return false;
  if (mode != KidMode::PerfectTree) {
    Kid derived = deriveKid(sig.signer.token, sig.signer.pk, mode, sig.signer.kid.bits());
    if (derived != sig.signer.kid) return false;
  }
  return true;
}

}  // namespace advokat
