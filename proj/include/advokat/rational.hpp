#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace advokat {

struct RationalOverflow : std::overflow_error {
  RationalOverflow() : std::overflow_error("rational arithmetic overflow") {}
};

/// Exact rational with 64-bit reduced numerator/denominator. Aggregation must
/// be bit-exact, so there is no floating point anywhere in the algebra.
/// Intermediate products go through 128 bits and overflow throws.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(int64_t num, int64_t den = 1) : num_(num), den_(den) { normalize(); }

  int64_t num() const { return num_; }
  int64_t den() const { return den_; }

  bool isZero() const { return num_ == 0; }
  bool isNegative() const { return num_ < 0; }

  Rational operator+(const Rational& o) const {
    __int128 n = (__int128)num_ * o.den_ + (__int128)o.num_ * den_;
    __int128 d = (__int128)den_ * o.den_;
    return fromWide(n, d);
  }
  Rational operator-(const Rational& o) const {
    __int128 n = (__int128)num_ * o.den_ - (__int128)o.num_ * den_;
    __int128 d = (__int128)den_ * o.den_;
    return fromWide(n, d);
  }
  Rational operator*(const Rational& o) const {
    return fromWide((__int128)num_ * o.num_, (__int128)den_ * o.den_);
  }

  Rational abs() const {
    Rational r = *this;
    if (r.num_ < 0) r.num_ = -r.num_;
    return r;
  }

  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool operator!=(const Rational& o) const { return !(*this == o); }
  bool operator<(const Rational& o) const {
    return (__int128)num_ * o.den_ < (__int128)o.num_ * den_;
  }
  bool operator>(const Rational& o) const { return o < *this; }
  bool operator<=(const Rational& o) const { return !(o < *this); }
  bool operator>=(const Rational& o) const { return !(*this < o); }

  double toDouble() const { return double(num_) / double(den_); }

  std::string str() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  static Rational fromWide(__int128 n, __int128 d) {
    if (d == 0) throw std::domain_error("zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 g = gcd128(n < 0 ? -n : n, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX) throw RationalOverflow();
    Rational r;
    r.num_ = int64_t(n);
    r.den_ = int64_t(d);
    return r;
  }

  static __int128 gcd128(__int128 a, __int128 b) {
    while (b) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }

  void normalize() {
    if (den_ == 0) throw std::domain_error("zero denominator");
    if (den_ < 0) {
      if (num_ == INT64_MIN || den_ == INT64_MIN) throw RationalOverflow();
      num_ = -num_;
      den_ = -den_;
    }
    int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  int64_t num_ = 0;
  int64_t den_ = 1;
};

}  // namespace advokat
