#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace advokat {

using Bytes = std::vector<uint8_t>;

/// Append-only builder for the canonical big-endian byte layouts used in
/// hashing and message signing.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    buf_.push_back(uint8_t(v >> 8));
    buf_.push_back(uint8_t(v));
  }
  void u32(uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) buf_.push_back(uint8_t(v >> s));
  }
  void u64(uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) buf_.push_back(uint8_t(v >> s));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void raw(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void raw(const Bytes& b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void tag(const char* t) { buf_.insert(buf_.end(), t, t + std::strlen(t)); }
  /// Length-prefixed variable-size field.
  void blob(std::span<const uint8_t> b) {
    u32(uint32_t(b.size()));
    raw(b);
  }

  const Bytes& bytes() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> b) : buf_(b) {}

  uint8_t u8() { return at(need(1))[0]; }
  uint16_t u16() {
    auto p = at(need(2));
    return uint16_t(p[0]) << 8 | p[1];
  }
  uint32_t u32() {
    auto p = at(need(4));
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | p[i];
    return v;
  }
  uint64_t u64() {
    auto p = at(need(8));
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | p[i];
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  Bytes raw(size_t n) {
    auto p = at(need(n));
    return Bytes(p, p + n);
  }
  Bytes blob() { return raw(u32()); }
  bool done() const { return pos_ == buf_.size(); }
  size_t remaining() const { return buf_.size() - pos_; }

 private:
  size_t need(size_t n) {
    if (pos_ + n > buf_.size()) throw std::out_of_range("byte reader underrun");
    size_t p = pos_;
    pos_ += n;
    return p;
  }
  const uint8_t* at(size_t p) const { return buf_.data() + p; }

  std::span<const uint8_t> buf_;
  size_t pos_ = 0;
};

inline std::string toHex(std::span<const uint8_t> b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (uint8_t c : b) {
    s.push_back(digits[c >> 4]);
    s.push_back(digits[c & 0xf]);
  }
  return s;
}

inline Bytes fromHex(const std::string& s) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  if (s.size() % 2) throw std::invalid_argument("odd hex length");
  Bytes out(s.size() / 2);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = uint8_t(nib(s[2 * i]) << 4 | nib(s[2 * i + 1]));
  return out;
}

}  // namespace advokat
