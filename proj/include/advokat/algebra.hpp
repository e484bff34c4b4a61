#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "advokat/bytes.hpp"
#include "advokat/rational.hpp"

namespace advokat {

struct AlgebraError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AlgebraKind : uint8_t { Plurality, Ranked };

/// Commutative aggregation over non-negative rational vectors. Plurality uses
/// one component per option; ranked voting maps each of the d! rankings to a
/// plurality option, so its dimension is d!.
struct AlgebraSpec {
  AlgebraKind kind = AlgebraKind::Plurality;
  int optionCount = 2;
  bool splittingAllowed = false;

  size_t dimension() const;
  void validate() const;

  bool operator==(const AlgebraSpec&) const = default;
};

constexpr int kMaxRankedOptions = 8;  // 8! = 40320 components

struct Aggregate {
  std::vector<Rational> payload;

  bool operator==(const Aggregate&) const = default;
};

Aggregate zeroAggregate(const AlgebraSpec& spec);

/// Component-wise exact sum. Throws AlgebraError on dimension mismatch.
Aggregate combine(const Aggregate& a, const Aggregate& b);

/// True iff the Manhattan norm is exactly 1 (and, without splitting, the
/// aggregate is a unit vector). Entries must be non-negative.
bool validateInitial(const Aggregate& a, const AlgebraSpec& spec);

Aggregate encodePlurality(int choice, const AlgebraSpec& spec);

/// Maps a ranking (permutation of 0..d-1) to the unit vector at its
/// lexicographic index among all d! permutations.
Aggregate encodeRanked(const std::vector<int>& ranking, const AlgebraSpec& spec);

/// Lexicographic index of a permutation; exposed for tests.
uint64_t permutationIndex(const std::vector<int>& ranking);

struct OutcomeReport {
  size_t winner = 0;
  bool tied = false;
  std::vector<size_t> tiedOptions;
  std::vector<Rational> tallies;
};

/// Argmax with lowest-index tie-break; ties are flagged in the report.
OutcomeReport outcome(const Aggregate& root, const AlgebraSpec& spec);

/// Canonical byte encoding used by container hashing: 4-byte big-endian
/// dimension, then per entry 8-byte big-endian numerator and denominator in
/// reduced form.
void encodeAggregate(const Aggregate& a, ByteWriter& w);
Aggregate decodeAggregate(ByteReader& r);

}  // namespace advokat
