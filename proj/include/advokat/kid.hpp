#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "advokat/bytes.hpp"
#include "advokat/hash.hpp"

namespace advokat {

constexpr int kMaxKidBits = 160;

/// B-bit leaf identifier in the binary tree, B <= 160. Bit 0 is the most
/// significant bit of byte 0; unused tail bits are kept zero so byte-level
/// comparison is well defined.
class Kid {
 public:
  Kid() = default;
  Kid(const Digest20& digest, int bits) : bits_(bits) {
    checkBits(bits);
    bytes_ = digest;
    maskTail();
  }

  static Kid fromBits(const std::string& bitString) {
    Kid k;
    k.bits_ = int(bitString.size());
    checkBits(k.bits_);
    k.bytes_.fill(0);
    for (size_t i = 0; i < bitString.size(); ++i) {
      if (bitString[i] == '1')
        k.bytes_[i / 8] |= uint8_t(0x80 >> (i % 8));
      else if (bitString[i] != '0')
        throw std::invalid_argument("kid bit string must be 0/1");
    }
    return k;
  }

  /// The value i interpreted as a big-endian B-bit integer.
  static Kid fromInteger(uint64_t value, int bits) {
    Kid k;
    k.bits_ = bits;
    checkBits(bits);
    k.bytes_.fill(0);
    for (int i = 0; i < bits && i < 64; ++i)
      if (value >> (bits - 1 - i) & 1) k.bytes_[i / 8] |= uint8_t(0x80 >> (i % 8));
    return k;
  }

  int bits() const { return bits_; }
  const Digest20& bytes() const { return bytes_; }

  bool bit(int i) const { return bytes_[i / 8] >> (7 - i % 8) & 1; }

  Kid withBitFlipped(int i) const {
    Kid k = *this;
    k.bytes_[i / 8] ^= uint8_t(0x80 >> (i % 8));
    return k;
  }

  bool operator==(const Kid& o) const { return bits_ == o.bits_ && bytes_ == o.bytes_; }
  bool operator!=(const Kid& o) const { return !(*this == o); }
  bool operator<(const Kid& o) const { return bytes_ < o.bytes_; }

  std::string hex() const { return toHex(bytes_); }
  std::string bitString() const {
    std::string s;
    for (int i = 0; i < bits_; ++i) s.push_back(bit(i) ? '1' : '0');
    return s;
  }

 private:
  static void checkBits(int b) {
    if (b < 1 || b > kMaxKidBits) throw std::invalid_argument("kid bits out of range");
  }
  void maskTail() {
    for (int i = bits_; i < kMaxKidBits; ++i)
      bytes_[i / 8] &= uint8_t(~(0x80 >> (i % 8)));
  }

  Digest20 bytes_{};
  int bits_ = 0;
};

/// XOR distance, comparable as a B-bit big-endian integer.
struct XorDistance {
  Digest20 bytes{};
  int bits = 0;

  bool isZero() const {
    for (uint8_t b : bytes)
      if (b) return false;
    return true;
  }
  /// Integer value, only meaningful for B <= 64.
  uint64_t toInteger() const {
    uint64_t v = 0;
    for (int i = 0; i < bits; ++i) v = v << 1 | ((bytes[i / 8] >> (7 - i % 8)) & 1);
    return v;
  }
  auto operator<=>(const XorDistance& o) const { return bytes <=> o.bytes; }
  bool operator==(const XorDistance& o) const { return bytes == o.bytes; }
};

inline XorDistance xorDistance(const Kid& x, const Kid& y) {
  if (x.bits() != y.bits()) throw std::invalid_argument("kid width mismatch");
  XorDistance d;
  d.bits = x.bits();
  for (int i = 0; i < 20; ++i) d.bytes[i] = x.bytes()[i] ^ y.bytes()[i];
  return d;
}

inline int commonPrefixLength(const Kid& x, const Kid& y) {
  for (int i = 0; i < x.bits(); ++i)
    if (x.bit(i) != y.bit(i)) return i;
  return x.bits();
}

/// Depth d such that `other` lies in the sibling subtree S(owner, d):
/// common prefix length plus one. Undefined for owner == other.
inline int subtreeDepthOf(const Kid& owner, const Kid& other) {
  if (owner == other) throw std::invalid_argument("no peer lies in its own sibling subtree");
  return commonPrefixLength(owner, other) + 1;
}

/// Subtree address: root-to-node bit path of length `depth` (0 = whole tree).
class SubtreeId {
 public:
  SubtreeId() = default;

  /// S-bar(x, d): the depth-d subtree containing leaf x.
  static SubtreeId containing(const Kid& x, int depth) {
    if (depth < 0 || depth > x.bits()) throw std::invalid_argument("subtree depth out of range");
    SubtreeId s;
    s.depth_ = depth;
    s.kidBits_ = x.bits();
    s.prefix_.fill(0);
    for (int i = 0; i < depth; ++i)
      if (x.bit(i)) s.prefix_[i / 8] |= uint8_t(0x80 >> (i % 8));
    return s;
  }

  /// S(x, d): the sibling of the depth-d subtree containing x (d >= 1).
  static SubtreeId siblingOf(const Kid& x, int depth) {
    if (depth < 1) throw std::invalid_argument("root has no sibling");
    SubtreeId s = containing(x, depth);
    s.prefix_[(depth - 1) / 8] ^= uint8_t(0x80 >> ((depth - 1) % 8));
    return s;
  }

  int depth() const { return depth_; }
  int kidBits() const { return kidBits_; }
  const Digest20& prefix() const { return prefix_; }
  bool isRoot() const { return depth_ == 0; }

  bool prefixBit(int i) const { return prefix_[i / 8] >> (7 - i % 8) & 1; }

  bool contains(const Kid& x) const {
    if (x.bits() != kidBits_) return false;
    for (int i = 0; i < depth_; ++i)
      if (x.bit(i) != prefixBit(i)) return false;
    return true;
  }

  SubtreeId parent() const {
    if (depth_ == 0) throw std::logic_error("root subtree has no parent");
    SubtreeId s = *this;
    s.prefix_[(depth_ - 1) / 8] &= uint8_t(~(0x80 >> ((depth_ - 1) % 8)));
    s.depth_ -= 1;
    return s;
  }

  SubtreeId sibling() const {
    if (depth_ == 0) throw std::logic_error("root subtree has no sibling");
    SubtreeId s = *this;
    s.prefix_[(depth_ - 1) / 8] ^= uint8_t(0x80 >> ((depth_ - 1) % 8));
    return s;
  }

  SubtreeId child(bool bit) const {
    if (depth_ >= kidBits_) throw std::logic_error("leaf subtree has no children");
    SubtreeId s = *this;
    s.depth_ += 1;
    if (bit) s.prefix_[(s.depth_ - 1) / 8] |= uint8_t(0x80 >> ((s.depth_ - 1) % 8));
    return s;
  }

  /// Last path bit: false = left (0) child of the parent, true = right (1).
  bool sideBit() const {
    if (depth_ == 0) throw std::logic_error("root subtree has no side");
    return prefixBit(depth_ - 1);
  }

  bool operator==(const SubtreeId& o) const {
    return depth_ == o.depth_ && kidBits_ == o.kidBits_ && prefix_ == o.prefix_;
  }
  bool operator!=(const SubtreeId& o) const { return !(*this == o); }

  std::string bitString() const {
    std::string s;
    for (int i = 0; i < depth_; ++i) s.push_back(prefixBit(i) ? '1' : '0');
    return s;
  }

 private:
  Digest20 prefix_{};
  int depth_ = 0;
  int kidBits_ = 0;
};

}  // namespace advokat
