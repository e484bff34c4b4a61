#pragma once

#include <set>
#include <string>
#include <vector>

#include "advokat/protocol.hpp"
#include "advokat/rng.hpp"

namespace advokat {

enum class Targeting : uint8_t { Random, TargetedKidPrefix };

/// Dishonest minority entirely controlled by one adversary; behaviors
/// compose. Dishonest peers hold valid tokens and join like everyone else.
struct AdversaryConfig {
  double fraction = 0.0;
  std::set<Behavior> behaviors;
  Targeting targeting = Targeting::Random;

  void validate() const;
};

Behavior behaviorFromName(const std::string& name);
std::string behaviorName(Behavior b);
Targeting targetingFromName(const std::string& name);
std::string targetingName(Targeting t);

/// floor(fraction * n) peer indices, deterministic per rng stream. Random
/// targeting draws uniformly; prefix targeting takes the peers whose kids
/// sort lowest (concentrated in the all-zero subtree).
std::set<size_t> seedDishonestSet(size_t n, const AdversaryConfig& cfg, Rng& rng,
                                  const std::vector<Kid>& kids);

}  // namespace advokat
