#include "advokat/algebra.hpp"

#include <algorithm>

namespace advokat {

namespace {

uint64_t factorial(int n) {
  uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= uint64_t(i);
  return f;
}

}  // namespace

size_t AlgebraSpec::dimension() const {
  if (kind == AlgebraKind::Plurality) return size_t(optionCount);
  return size_t(factorial(optionCount));
}

void AlgebraSpec::validate() const {
  if (optionCount < 2) throw AlgebraError("option count must be at least 2");
  if (kind == AlgebraKind::Ranked && optionCount > kMaxRankedOptions)
    throw AlgebraError("ranked encoding capped at 8 options");
}

Aggregate zeroAggregate(const AlgebraSpec& spec) {
  return Aggregate{std::vector<Rational>(spec.dimension())};
}

Aggregate combine(const Aggregate& a, const Aggregate& b) {
  if (a.payload.size() != b.payload.size())
    throw AlgebraError("aggregate dimension mismatch");
  Aggregate out;
  out.payload.reserve(a.payload.size());
  for (size_t i = 0; i < a.payload.size(); ++i)
    out.payload.push_back(a.payload[i] + b.payload[i]);
  return out;
}

bool validateInitial(const Aggregate& a, const AlgebraSpec& spec) {
  if (a.payload.size() != spec.dimension()) return false;
  Rational norm;
  int nonzero = 0;
  for (const Rational& e : a.payload) {
    if (e.isNegative()) return false;
    if (!e.isZero()) ++nonzero;
    norm = norm + e;
  }
  if (norm != Rational(1)) return false;
  if (!spec.splittingAllowed && nonzero != 1) return false;
  return true;
}

Aggregate encodePlurality(int choice, const AlgebraSpec& spec) {
  if (choice < 0 || size_t(choice) >= spec.dimension())
    throw AlgebraError("choice out of range");
  Aggregate a = zeroAggregate(spec);
  a.payload[size_t(choice)] = Rational(1);
  return a;
}

uint64_t permutationIndex(const std::vector<int>& ranking) {
  uint64_t index = 0;
  size_t n = ranking.size();
  for (size_t i = 0; i < n; ++i) {
    uint64_t smallerAfter = 0;
    for (size_t j = i + 1; j < n; ++j)
      if (ranking[j] < ranking[i]) ++smallerAfter;
    index += smallerAfter * factorial(int(n - 1 - i));
  }
  return index;
}

Aggregate encodeRanked(const std::vector<int>& ranking, const AlgebraSpec& spec) {
  spec.validate();
  if (spec.kind != AlgebraKind::Ranked) throw AlgebraError("spec is not ranked");
  if (ranking.size() != size_t(spec.optionCount))
    throw AlgebraError("ranking length mismatch");
  std::vector<bool> seen(ranking.size(), false);
  for (int v : ranking) {
    if (v < 0 || size_t(v) >= ranking.size() || seen[size_t(v)])
      throw AlgebraError("ranking is not a permutation");
    seen[size_t(v)] = true;
  }
  Aggregate a = zeroAggregate(spec);
  a.payload[size_t(permutationIndex(ranking))] = Rational(1);
  return a;
}

OutcomeReport outcome(const Aggregate& root, const AlgebraSpec& spec) {
  if (root.payload.size() != spec.dimension())
    throw AlgebraError("aggregate dimension mismatch");
  OutcomeReport rep;
  rep.tallies = root.payload;
  size_t best = 0;
  for (size_t i = 1; i < root.payload.size(); ++i)
    if (root.payload[i] > root.payload[best]) best = i;
  rep.winner = best;
  for (size_t i = 0; i < root.payload.size(); ++i)
    if (root.payload[i] == root.payload[best]) rep.tiedOptions.push_back(i);
  rep.tied = rep.tiedOptions.size() > 1;
  return rep;
}

void encodeAggregate(const Aggregate& a, ByteWriter& w) {
  w.u32(uint32_t(a.payload.size()));
  for (const Rational& e : a.payload) {
    w.i64(e.num());
    w.i64(e.den());
  }
}

Aggregate decodeAggregate(ByteReader& r) {
  uint32_t dim = r.u32();
  Aggregate a;
  a.payload.reserve(dim);
  for (uint32_t i = 0; i < dim; ++i) {
    int64_t num = r.i64();
    int64_t den = r.i64();
    a.payload.emplace_back(num, den);
  }
  return a;
}

}  // namespace advokat
