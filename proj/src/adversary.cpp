#include "advokat/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace advokat {

void AdversaryConfig::validate() const {
  if (fraction < 0.0 || fraction >= 0.5)
    throw std::invalid_argument("adversary fraction must lie in [0, 0.5)");
}

Behavior behaviorFromName(const std::string& name) {
  if (name == "corruptAggregate") return Behavior::CorruptAggregate;
  if (name == "forgeCounter") return Behavior::ForgeCounter;
  if (name == "equivocate") return Behavior::Equivocate;
  if (name == "blockConfirmation") return Behavior::BlockConfirmation;
  if (name == "overreachRequests") return Behavior::OverreachRequests;
  if (name == "dropSibling") return Behavior::DropSibling;
  throw std::invalid_argument("unknown adversary behavior: " + name);
}

std::string behaviorName(Behavior b) {
  switch (b) {
    case Behavior::CorruptAggregate: return "corruptAggregate";
    case Behavior::ForgeCounter: return "forgeCounter";
    case Behavior::Equivocate: return "equivocate";
    case Behavior::BlockConfirmation: return "blockConfirmation";
    case Behavior::OverreachRequests: return "overreachRequests";
    case Behavior::DropSibling: return "dropSibling";
  }
  return "?";
}

Targeting targetingFromName(const std::string& name) {
  if (name == "random") return Targeting::Random;
  if (name == "targetedKidPrefix") return Targeting::TargetedKidPrefix;
  throw std::invalid_argument("unknown adversary targeting: " + name);
}

std::string targetingName(Targeting t) {
  return t == Targeting::Random ? "random" : "targetedKidPrefix";
}

std::set<size_t> seedDishonestSet(size_t n, const AdversaryConfig& cfg, Rng& rng,
                                  const std::vector<Kid>& kids) {
  cfg.validate();
  size_t count = size_t(std::floor(cfg.fraction * double(n)));
  std::set<size_t> out;
  if (count == 0) return out;

  if (cfg.targeting == Targeting::TargetedKidPrefix) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return kids[a] < kids[b]; });
    for (size_t i = 0; i < count; ++i) out.insert(order[i]);
    return out;
  }
  while (out.size() < count) out.insert(size_t(rng.below(n)));
  return out;
}

}  // namespace advokat
