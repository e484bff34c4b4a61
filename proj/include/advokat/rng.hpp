#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace advokat {

/// SplitMix64 finalizer, used to derive independent stream seeds from the
/// scenario master seed. Splitting is by label: each component hashes
/// (master, label, index) so streams never collide across components.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t deriveSeed(uint64_t master, const char* label, uint64_t index = 0) {
  uint64_t h = master;
  for (const char* p = label; *p; ++p) h = splitmix64(h ^ uint64_t(uint8_t(*p)));
  return splitmix64(h ^ splitmix64(index));
}

/// Seeded mt19937_64 stream. Bounded draws use plain modulo reduction rather
/// than std::uniform_int_distribution, which is not portable across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next() { return eng_(); }

  /// Uniform-ish in [0, bound). Modulo bias is negligible for the bounds used
  /// here (bound << 2^64) and keeps the stream portable.
  uint64_t below(uint64_t bound) { return bound ? eng_() % bound : 0; }

  bool chance(double p) { return double(eng_() >> 11) * (1.0 / 9007199254740992.0) < p; }

  void fill(uint8_t* out, size_t n) {
    size_t i = 0;
    while (i < n) {
      uint64_t v = eng_();
      for (int b = 0; b < 8 && i < n; ++b, ++i) out[i] = uint8_t(v >> (8 * b));
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace advokat
