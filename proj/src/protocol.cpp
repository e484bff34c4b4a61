#include "advokat/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace advokat {

bool SignatureRequirement::needs(SigRule r) const {
  switch (r) {
    case SigRule::Rule1: return rule1;
    case SigRule::Rule2: return rule2;
    case SigRule::Rule3: return rule3;
    case SigRule::Rule4: return rule4;
    case SigRule::Rule5: return rule5;
  }
  return false;
}

SignatureRequirement requiredSignatureSet(uint32_t c, uint32_t cOwn, uint32_t cPulled) {
  if (c != cOwn + cPulled && !(c == 1 && cOwn == 0 && cPulled == 0))
    throw std::invalid_argument("inconsistent counters");
  SignatureRequirement req;
  req.rule2 = c > 1;
  req.rule3 = c > 1 && cOwn > 1;
  req.rule4 = c > 1 && cPulled > 0;
  req.rule5 = c > 1 && cPulled > 0;
  return req;
}

SlotOrientation orientFor(const AggregateContainer& k, const Kid& producer) {
  SlotOrientation o;
  if (k.isLeaf()) return o;
  int depth = k.subtree.depth();
  if (k.c2 == 0) {
    // Single surviving child, kept in slot 1; it lies on the producer's side.
    o.cOwn = k.c1;
    o.hOwn = k.h1;
    o.ownChild = k.subtree.child(producer.bit(depth));
    return o;
  }
  bool producerRight = producer.bit(depth);
  o.ownChild = k.subtree.child(producerRight);
  o.pulledChild = k.subtree.child(!producerRight);
  if (producerRight) {
    o.cOwn = k.c2;
    o.hOwn = k.h2;
    o.cPulled = k.c1;
    o.hPulled = k.h1;
  } else {
    o.cOwn = k.c1;
    o.hOwn = k.h1;
    o.cPulled = k.c2;
    o.hPulled = k.h2;
  }
  return o;
}

// ---------------------------------------------------------------------------

Peer::Peer(EventLoop& loop, Transport& net, const AdminPublicKey& adminPub, PeerConfig cfg, int k,
           KeyPair keys, Credentials cred, Aggregate vote, uint64_t rngSeed)
    : Node(loop, net, adminPub, cfg.kidMode, std::move(keys), std::move(cred), k),
      cfg_(std::move(cfg)),
      vote_(std::move(vote)),
      rng_(rngSeed),
      bits_(cred_.kid.bits()),
      perDepth_(size_t(cred_.kid.bits()) + 1) {}

Detached Peer::runJoin(std::optional<Contact> bootstrap, std::function<void()> done) {
  phase_ = Phase::Joining;
  transition("join", -1);
  if (bootstrap) {
    insertContact(*bootstrap);
    co_await iterativeLookup(kid());
  }
  done();
}

Detached Peer::runRefresh(std::function<void()> done) {
  if (routing_.size() > 0) {
    co_await iterativeLookup(kid());
    // Buckets deeper than the k-th closest contact are covered exhaustively
    // by the self-lookup; refresh the rest with a lookup into each sibling
    // subtree (mirror bit, random tail).
    auto closest = routing_.closestTo(kid(), size_t(routing_.capacity()));
    int coverDepth = 0;
    if (closest.size() >= size_t(routing_.capacity()))
      coverDepth = subtreeDepthOf(kid(), closest.back().kid());
    for (int d = 1; d <= coverDepth; ++d) {
      if (!routing_.bucketExhaustive(d)) continue;  // full buckets gain nothing
      Kid target = kid().withBitFlipped(d - 1);
      for (int i = d; i < bits_; ++i)
        if (rng_.below(2)) target = target.withBitFlipped(i);
      co_await iterativeLookup(target);
    }
  }
  done();
}

void Peer::freezeRouting() { routing_.freeze(); }

Detached Peer::runAggregation(std::function<void(bool completed)> done) {
  phase_ = Phase::Aggregating;
  aggregationDone_ = std::move(done);
  transition("aggregate", bits_);
  buildLeaf();
  EpochStatus st = co_await aggregationMain();
  if (st == EpochStatus::Abort) {
    phase_ = Phase::Aborted;
    transition("abort", currentEpoch_);
    aggregationDone_(false);
    co_return;
  }
  co_await gatherRootExtras();
  phase_ = Phase::Done;
  currentEpoch_ = -1;
  transition("done", 0);
  flushParked();
  aggregationDone_(true);
}

void Peer::buildLeaf() {
  AggregateContainer leaf = buildLeafContainer(vote_, kid(), cfg_.algebra);
  auto sig = signClaim(leaf.h, bits_, 1);
  perDepth_[size_t(bits_)].own =
      ConfirmedContainer{leaf, {RoleSignature{SigRule::Rule1, *sig}}, {}};
  if (cfg_.behaviors.count(Behavior::Equivocate)) {
    // Second initial aggregate: rotate the vote one option forward.
    Aggregate alt = vote_;
    std::rotate(alt.payload.begin(), alt.payload.begin() + 1, alt.payload.end());
    AggregateContainer leafB = buildLeafContainer(alt, kid(), cfg_.algebra);
    ContainerSignature sigB =
        signContainerClaim(keys_, cred_, leafB.h, bits_, 1);  // bypasses the claim guard
    leafVariantB_ = ConfirmedContainer{leafB, {RoleSignature{SigRule::Rule1, sigB}}, {}};
  }
  flushParked();
}

Task<Peer::EpochStatus> Peer::aggregationMain() {
  int d = bits_;
  while (d >= 1) {
    EpochStatus st = co_await computeEpoch(d, cfg_.retryBudget);
    if (st == EpochStatus::Abort) co_return EpochStatus::Abort;
    if (redoFrom_) {
      int rd = *redoFrom_;
      redoFrom_.reset();
      purgeShallowerThan(rd);
      d = rd;
      continue;
    }
    --d;
  }
  co_return EpochStatus::Ok;
}

void Peer::purgeShallowerThan(int depth) {
  for (int dd = 0; dd < depth; ++dd) {
    perDepth_[size_t(dd)].own.reset();
    perDepth_[size_t(dd)].candidate.reset();
    perDepth_[size_t(dd)].siblingReceived.reset();
  }
  perDepth_[size_t(depth)].siblingReceived.reset();
  perDepth_[size_t(depth)].candidate.reset();
}

Task<Peer::EpochStatus> Peer::computeEpoch(int d, int recursionBudget) {
  currentEpoch_ = d;
  transition("epoch", d);
  int pullRepeats = 0;
  int childRepeats = 0;
  std::set<Digest20> excludedResponders;

  if (cfg_.behaviors.count(Behavior::OverreachRequests) && d <= bits_ - 2 &&
      !routing_.bucket(d).empty()) {
    co_await overreachProbe(d);
    currentEpoch_ = d;
  }

  for (;;) {
    PullResult pull = co_await pullSibling(d, excludedResponders);
    currentEpoch_ = d;
    if (redoPending(d)) co_return EpochStatus::Ok;
    if (pull.status == PullResult::Status::Unresolved) {
      if (!cfg_.degrade) co_return EpochStatus::Abort;
      flaggedIncomplete_ = true;
      pull.status = PullResult::Status::Empty;
      pull.container.reset();
    }

    const ConfirmedContainer& ownChild = *perDepth_[size_t(d)].own;
    AggregateContainer cand =
        pull.container ? buildParentContainer(ownChild.container, &pull.container->container)
                       : buildParentContainer(ownChild.container, nullptr);

    if (cfg_.behaviors.count(Behavior::CorruptAggregate)) {
      cand.a.payload[0] = cand.a.payload[0] + Rational(1);
      cand.h = cand.canonicalHash();
    }

    // Never produce a second claim for an already-signed (depth, counter) at
    // c <= 3; keep the previous result instead.
    auto guardKey = std::make_pair(uint16_t(d - 1), cand.c);
    auto guarded = signedClaims_.find(guardKey);
    if (guarded != signedClaims_.end() && guarded->second.h != cand.h && cand.c <= 3) {
      metrics_.securityEvents++;
      if (perDepth_[size_t(d - 1)].own) co_return EpochStatus::Ok;
    }

    perDepth_[size_t(d - 1)].candidate = cand;
    flushParked();

    ConfirmOutcome conf = co_await confirmCandidate(d - 1, pull);
    currentEpoch_ = d;
    if (redoPending(d)) co_return EpochStatus::Ok;

    switch (conf.action) {
      case ConfirmOutcome::Action::Confirmed:
        perDepth_[size_t(d - 1)].own = std::move(conf.confirmed);
        transition("confirmed", d - 1);
        flushParked();
        co_return EpochStatus::Ok;

      case ConfirmOutcome::Action::RepeatSiblingPull:
        metrics_.retriesUsed++;
        if (++pullRepeats > cfg_.retryBudget || !pull.container) {
          metrics_.conflictsFlagged++;
          perDepth_[size_t(d - 1)].own = std::move(conf.confirmed);
          flushParked();
          co_return EpochStatus::Ok;
        }
        excludedResponders.insert(pull.responder.cred.kid.bytes());
        perDepth_[size_t(d)].siblingReceived.reset();
        continue;

      case ConfirmOutcome::Action::RepeatChild:
        metrics_.retriesUsed++;
        if (++childRepeats > cfg_.retryBudget || recursionBudget <= 0 || d >= bits_) {
          metrics_.conflictsFlagged++;
          perDepth_[size_t(d - 1)].own = std::move(conf.confirmed);
          flushParked();
          co_return EpochStatus::Ok;
        }
        {
          EpochStatus st = co_await computeEpoch(d + 1, recursionBudget - 1);
          currentEpoch_ = d;
          if (st == EpochStatus::Abort) co_return EpochStatus::Abort;
          if (redoPending(d)) co_return EpochStatus::Ok;
        }
        continue;
    }
  }
}

Task<Peer::PullResult> Peer::pullSibling(int d, const std::set<Digest20>& excludedResponders) {
  PullResult out;
  if (cfg_.behaviors.count(Behavior::DropSibling)) co_return out;  // Empty

  std::vector<Contact> candidates;
  for (const Contact& c : routing_.bucket(d))
    if (!excludedResponders.count(c.kid().bytes())) candidates.push_back(c);
  if (candidates.empty()) co_return out;  // Empty: exhaustive bucket, no peers

  SubtreeId target = SubtreeId::siblingOf(kid(), d);
  Kid mirror = kid().withBitFlipped(d - 1);
  std::sort(candidates.begin(), candidates.end(), [&](const Contact& a, const Contact& b) {
    return xorDistance(a.kid(), mirror) < xorDistance(b.kid(), mirror);
  });

  int tried = 0;
  size_t idx = 0;
  int staleRetries = 0;
  while (idx < candidates.size()) {
    const Contact responder = candidates[idx];
    if (detected_.count(responder.kid().bytes())) {
      ++idx;
      continue;
    }
    if (tried >= cfg_.retryBudget) break;
    ++tried;
    metrics_.pullRequestsSent++;
    ResponseEnvelope resp = co_await send(responder, PullRequest{target});
    if (redoPending(currentEpoch_)) co_return out;
    if (!verifyResponse(resp)) {
      ++idx;
      continue;
    }
    auto* body = std::get_if<PullResponse>(&resp.body);
    if (!body) {
      ++idx;
      continue;
    }
    ingestProofs(body->proofs);
    if (redoPending(currentEpoch_)) co_return out;
    if (body->status != Status::Ok || !body->container) {
      ++idx;
      continue;
    }

    VerifyOutcome v = verifyConfirmed(*body->container, &target, &responder.cred.kid);
    if (v.staleDetectedSigner && staleRetries < cfg_.staleRetryBudget) {
      // The responder has not repaired yet; give it event-loop time.
      ++staleRetries;
      --tried;
      co_await Yield{loop_};
      continue;
    }
    if (!v.ok) {
      metrics_.securityEvents++;
      ++idx;
      continue;
    }
    if (!counterPlausible(*body->container, d)) {
      metrics_.securityEvents++;
      ++idx;
      continue;
    }
    ingestSignatures(v.verifiedSigs);
    if (redoPending(currentEpoch_)) co_return out;
    if (detected_.count(responder.kid().bytes())) {
      ++idx;
      continue;
    }

    metrics_.inbox++;
    metrics_.receivedCounters.push_back(body->container->container.c);
    if (cfg_.robustAccounting)
      for (const auto& child : body->container->compensation)
        metrics_.receivedRobust.push_back(child->container.c);
    perDepth_[size_t(d)].siblingReceived = *body->container;
    out.status = PullResult::Status::Got;
    out.container = std::move(*body->container);
    out.responder = responder;
    co_return out;
  }
  out.status = PullResult::Status::Unresolved;
  co_return out;
}

Task<Peer::ConfirmOutcome> Peer::confirmCandidate(int candidateDepth, const PullResult& pulled) {
  const AggregateContainer cand = *perDepth_[size_t(candidateDepth)].candidate;
  SlotOrientation o = orientFor(cand, kid());
  SignatureRequirement req = requiredSignatureSet(cand.c, o.cOwn, o.cPulled);
  std::vector<RoleSignature> partials = candidatePartials(candidateDepth);

  ConfirmedContainer result{cand, partials, {}};

  std::map<Digest32, std::set<Digest20>> tally;
  std::map<Digest32, ContainerHeader> headers;
  tally[cand.h].insert(kid().bytes());
  headers[cand.h] = ContainerHeader::of(cand);

  bool missing3 = req.rule3;
  bool missing5 = req.rule5;
  std::optional<ContainerHeader> majority;

  if (missing3) {
    // Confirmer from the producer's half: the shallowest non-empty sibling
    // subtree below the own child, ideally at candidateDepth + 2.
    std::vector<Contact> targets;
    for (int dPrime = candidateDepth + 2; dPrime <= bits_; ++dPrime) {
      for (const Contact& c : routing_.bucket(dPrime)) targets.push_back(c);
      if (targets.size() >= size_t(2 * cfg_.retryBudget)) break;
    }
    GatherResult g =
        co_await gatherSignature(SigRule::Rule3, cand, partials, std::move(targets), tally, headers);
    if (redoPending(currentEpoch_)) co_return ConfirmOutcome{ConfirmOutcome::Action::Confirmed, result};
    if (g.status == GatherResult::Status::Got) {
      result.signatures.push_back({SigRule::Rule3, *g.sig});
      missing3 = false;
    } else if (g.status == GatherResult::Status::Majority) {
      majority = g.majorityHeader;
    }
  }

  if (missing5 && !majority) {
    std::vector<Contact> targets;
    if (o.cPulled == 1) {
      targets.push_back(pulled.responder);
    } else {
      const Kid& producerL = pulled.container->find(SigRule::Rule1)->signer.kid;
      std::vector<std::pair<int, Contact>> ranked;
      for (const Contact& c : routing_.bucket(candidateDepth + 1)) {
        if (c.kid() == producerL) continue;
        ranked.emplace_back(subtreeDepthOf(producerL, c.kid()), c);
      }
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second.kid() < b.second.kid();
      });
      for (auto& [dPrime, c] : ranked) targets.push_back(c);
    }
    GatherResult g =
        co_await gatherSignature(SigRule::Rule5, cand, partials, std::move(targets), tally, headers);
    if (redoPending(currentEpoch_)) co_return ConfirmOutcome{ConfirmOutcome::Action::Confirmed, result};
    if (g.status == GatherResult::Status::Got) {
      result.signatures.push_back({SigRule::Rule5, *g.sig});
      missing5 = false;
    } else if (g.status == GatherResult::Status::Majority) {
      majority = g.majorityHeader;
    }
  }

  if (majority) {
    // Hash majority against this candidate: decide which side to repeat.
    // Child slots are canonical (side-addressed), so the headers compare
    // directly. Requests for c = 1 children are never repeated.
    const ContainerHeader& their = *majority;
    bool ownRight = kid().bit(candidateDepth);
    if (their.c2 > 0 && o.cPulled > 0) {
      std::optional<Digest32> theirOwn = ownRight ? their.h2 : their.h1;
      std::optional<Digest32> theirPulled = ownRight ? their.h1 : their.h2;
      if (o.cOwn > 1 && theirOwn != o.hOwn)
        co_return ConfirmOutcome{ConfirmOutcome::Action::RepeatChild,
                                 buildCompensated(result, o, pulled)};
      if (o.cPulled > 1 && theirPulled != o.hPulled)
        co_return ConfirmOutcome{ConfirmOutcome::Action::RepeatSiblingPull,
                                 buildCompensated(result, o, pulled)};
    } else if (o.cPulled > 1) {
      // Structural disagreement about whether the sibling half exists.
      co_return ConfirmOutcome{ConfirmOutcome::Action::RepeatSiblingPull,
                               buildCompensated(result, o, pulled)};
    } else if (o.cOwn > 1) {
      co_return ConfirmOutcome{ConfirmOutcome::Action::RepeatChild,
                               buildCompensated(result, o, pulled)};
    }
    // Otherwise the dispute concerns c = 1 children only: keep.
  }

  if (missing3 || missing5) {
    result = buildCompensated(result, o, pulled);
    metrics_.compensationsAttached++;
    if (majority) metrics_.conflictsFlagged++;
  }
  co_return ConfirmOutcome{ConfirmOutcome::Action::Confirmed, std::move(result)};
}

Task<Peer::GatherResult> Peer::gatherSignature(SigRule rule, const AggregateContainer& cand,
                                               const std::vector<RoleSignature>& partials,
                                               std::vector<Contact> targets,
                                               std::map<Digest32, std::set<Digest20>>& tally,
                                               std::map<Digest32, ContainerHeader>& headers) {
  GatherResult out{GatherResult::Status::Exhausted, std::nullopt, std::nullopt};
  SlotOrientation o = orientFor(cand, kid());
  const ContainerSignature* rule4 =
      [&]() -> const ContainerSignature* {
    for (const auto& rs : partials)
      if (rs.rule == SigRule::Rule4) return &rs.sig;
    return nullptr;
  }();

  int tried = 0;
  for (const Contact& target : targets) {
    if (tried >= cfg_.retryBudget) break;
    if (detected_.count(target.kid().bytes())) continue;
    ++tried;
    metrics_.confirmRequestsSent++;
    if (cfg_.robustAccounting) metrics_.leakedRobust.push_back(cand.c);
    ResponseEnvelope resp =
        co_await send(target, ConfirmRequest{cand, partials, proofAttachments(), false});
    if (redoPending(currentEpoch_)) {
      out.status = GatherResult::Status::Detected;
      co_return out;
    }
    if (!verifyResponse(resp)) continue;
    auto* body = std::get_if<ConfirmResponse>(&resp.body);
    if (!body) continue;
    ingestProofs(body->proofs);
    if (redoPending(currentEpoch_)) {
      out.status = GatherResult::Status::Detected;
      co_return out;
    }

    if (body->status == Status::Ok && body->signature) {
      const ContainerSignature& sig = *body->signature;
      if (sig.signer.kid != target.kid()) continue;
      if (!verifyRole(rule, sig, cand, kid(), o, rule4)) continue;
      if (!verifyClaim(sig)) continue;
      if (auto proof = noteSignature(sig)) {
        handleDetection(*proof);
        continue;
      }
      tally[cand.h].insert(target.kid().bytes());
      out.status = GatherResult::Status::Got;
      out.sig = sig;
      co_return out;
    }

    if (body->status == Status::Refuse && body->own) {
      // Their candidate header, backed by their rules 1/2/4: tally for the
      // implicit hash majority vote and mine the signatures for conflicts.
      std::vector<ContainerSignature> theirSigs;
      const ContainerSignature* theirRule1 = nullptr;
      for (const auto& rs : body->ownSigs)
        if (rs.rule == SigRule::Rule1) theirRule1 = &rs.sig;
      if (!theirRule1 || theirRule1->signer.kid != target.kid()) continue;
      if (theirRule1->h != body->own->h) continue;
      bool sigsOk = true;
      for (const auto& rs : body->ownSigs) {
        if (!verifyClaim(rs.sig)) {
          sigsOk = false;
          break;
        }
        theirSigs.push_back(rs.sig);
      }
      if (!sigsOk) continue;
      if (body->own->subtree != cand.subtree) continue;
      ingestSignatures(theirSigs);
      if (redoPending(currentEpoch_)) {
        out.status = GatherResult::Status::Detected;
        co_return out;
      }
      tally[body->own->h].insert(target.kid().bytes());
      headers[body->own->h] = *body->own;

      // Check the DHT for a prior deviation proof about the refuser.
      if (!knownProofs_.count(target.kid().bytes())) {
        auto stored = co_await dhtGetValue(dhtKeyFor(target.kid()));
        if (redoPending(currentEpoch_)) {
          out.status = GatherResult::Status::Detected;
          co_return out;
        }
        if (stored) {
          try {
            DeviationProof p = DeviationProof::decode(*stored, bits_);
            if (p.verify(adminPub_, kidMode_)) handleDetection(p);
          } catch (const std::exception&) {
            metrics_.securityEvents++;
          }
          if (redoPending(currentEpoch_)) {
            out.status = GatherResult::Status::Detected;
            co_return out;
          }
        }
      }

      std::set<Digest20> everyone;
      for (const auto& [h, who] : tally) everyone.insert(who.begin(), who.end());
      for (const auto& [h, who] : tally) {
        if (h == cand.h) continue;
        if (who.size() * 2 > everyone.size()) {
          out.status = GatherResult::Status::Majority;
          out.majorityHeader = headers[h];
          co_return out;
        }
      }
      continue;
    }
    // Deny or silence: try the next target.
  }
  co_return out;
}

ConfirmedContainer Peer::buildCompensated(const ConfirmedContainer& base, const SlotOrientation& o,
                                          const PullResult& pulled) {
  ConfirmedContainer out = base;
  out.compensation.clear();
  int candidateDepth = base.container.subtree.depth();
  const ConfirmedContainer& ownChild = *perDepth_[size_t(candidateDepth) + 1].own;
  if (o.cPulled > 0 && pulled.container) {
    bool ownRight = kid().bit(candidateDepth);
    auto own = std::make_shared<const ConfirmedContainer>(ownChild);
    auto sib = std::make_shared<const ConfirmedContainer>(*pulled.container);
    if (ownRight) {
      out.compensation = {sib, own};
    } else {
      out.compensation = {own, sib};
    }
  } else {
    out.compensation = {std::make_shared<const ConfirmedContainer>(ownChild)};
  }
  return out;
}

Task<bool> Peer::overreachProbe(int d) {
  const Contact target = routing_.bucket(d).front();
  SubtreeId deep = SubtreeId::containing(target.kid(), d + 2);
  ResponseEnvelope resp = co_await send(target, PullRequest{deep});
  if (!verifyResponse(resp)) co_return false;
  auto* body = std::get_if<PullResponse>(&resp.body);
  if (body && body->status == Status::Deny) {
    metrics_.overreachDenied++;
    co_return false;
  }
  co_return body && body->status == Status::Ok;
}

Task<uint32_t> Peer::gatherRootExtras() {
  const ConfirmedContainer& root = *perDepth_[0].own;
  uint32_t c = root.container.c;
  uint32_t want = uint32_t(std::ceil(2.0 * std::log2(std::max(2.0, double(c)))));
  want = std::min(want, uint32_t(routing_.capacity()));
  if (routing_.size() == 0 || want == 0) co_return 0;

  std::vector<Contact> contacts = routing_.allContacts();
  std::sort(contacts.begin(), contacts.end(),
            [](const Contact& a, const Contact& b) { return a.kid() < b.kid(); });
  for (size_t i = contacts.size(); i > 1; --i)
    std::swap(contacts[i - 1], contacts[rng_.below(i)]);

  std::vector<RoleSignature> partials = candidatePartials(0);
  uint32_t got = 0;
  for (const Contact& target : contacts) {
    if (got >= want) break;
    if (detected_.count(target.kid().bytes())) continue;
    metrics_.confirmRequestsSent++;
    if (cfg_.robustAccounting) metrics_.leakedRobust.push_back(root.container.c);
    ResponseEnvelope resp = co_await send(
        target, ConfirmRequest{root.container, partials, proofAttachments(), true});
    if (!verifyResponse(resp)) continue;
    auto* body = std::get_if<ConfirmResponse>(&resp.body);
    if (!body) continue;
    ingestProofs(body->proofs);
    if (body->status == Status::Ok && body->signature) {
      const ContainerSignature& sig = *body->signature;
      if (sig.signer.kid != target.kid()) continue;
      if (sig.h != root.container.h || sig.depth != 0 || sig.counter != c) continue;
      if (!verifyClaim(sig)) continue;
      if (auto proof = noteSignature(sig)) {
        handleDetection(*proof);
        continue;
      }
      rootExtraSigs_.push_back(sig);
      ++got;
    } else if (body->status == Status::Refuse) {
      metrics_.conflictsFlagged++;
    }
  }
  co_return got;
}

Detached Peer::storeProofDetached(DeviationProof proof) {
  Digest20 key = dhtKeyFor(proof.culprit.kid);
  auto existing = co_await dhtGetValue(key);
  if (!existing) co_await dhtStoreValue(key, proof.encode());
}

// ---------------------------------------------------------------------------
// Verification and detection

Peer::VerifyOutcome Peer::verifyConfirmed(const ConfirmedContainer& cc, const SubtreeId* expected,
                                          const Kid* expectedProducer, int depthLimit) {
  VerifyOutcome out;
  const AggregateContainer& k = cc.container;
  if (expected && k.subtree != *expected) return out;
  if (!k.wellFormed()) return out;
  const ContainerSignature* rule1 = cc.find(SigRule::Rule1);
  if (!rule1) return out;
  const Kid& producer = rule1->signer.kid;
  if (expectedProducer && producer != *expectedProducer) return out;
  if (!k.subtree.contains(producer)) return out;

  SlotOrientation o = orientFor(k, producer);
  SignatureRequirement req = requiredSignatureSet(k.c, o.cOwn, o.cPulled);
  const ContainerSignature* rule4 = cc.find(SigRule::Rule4);
  bool missingAux = false;

  for (SigRule rule : {SigRule::Rule1, SigRule::Rule2, SigRule::Rule3, SigRule::Rule4,
                       SigRule::Rule5}) {
    const ContainerSignature* sig = cc.find(rule);
    if (!sig) {
      if (!req.needs(rule)) continue;
      if (rule == SigRule::Rule3 || rule == SigRule::Rule5) {
        missingAux = true;
        continue;
      }
      return out;
    }
    if (detected_.count(sig->signer.kid.bytes())) {
      out.staleDetectedSigner = true;
      return out;
    }
    if (!verifyRole(rule, *sig, k, producer, o, rule4)) return out;
    if (!verifyClaim(*sig)) return out;
    out.verifiedSigs.push_back(*sig);
  }

  if (missingAux) {
    // Compensation: both children fully signed, reproducing the parent.
    if (depthLimit <= 0) return out;
    size_t want = o.cPulled > 0 ? 2 : 1;
    if (cc.compensation.size() != want) return out;
    for (const auto& child : cc.compensation)
      if (!child) return out;
    AggregateContainer rebuilt;
    if (want == 2) {
      const AggregateContainer& left = cc.compensation[0]->container;
      const AggregateContainer& right = cc.compensation[1]->container;
      if (left.subtree != k.subtree.child(false) || right.subtree != k.subtree.child(true))
        return out;
      rebuilt = buildParentContainer(left, &right);
    } else {
      const AggregateContainer& child = cc.compensation[0]->container;
      if (child.subtree.depth() != k.subtree.depth() + 1 || child.subtree.parent() != k.subtree)
        return out;
      rebuilt = buildParentContainer(child, nullptr);
    }
    if (rebuilt.h != k.h) return out;
    for (const auto& child : cc.compensation) {
      VerifyOutcome cv = verifyConfirmed(*child, nullptr, nullptr, depthLimit - 1);
      if (!cv.ok) {
        out.staleDetectedSigner = cv.staleDetectedSigner;
        return out;
      }
      out.verifiedSigs.insert(out.verifiedSigs.end(), cv.verifiedSigs.begin(),
                              cv.verifiedSigs.end());
    }
  }
  out.ok = true;
  return out;
}

Peer::VerifyOutcome Peer::verifyCandidateSet(const AggregateContainer& cand,
                                             const std::vector<RoleSignature>& sigs,
                                             const Kid& producer) {
  VerifyOutcome out;
  if (!cand.wellFormed()) return out;
  if (!cand.subtree.contains(producer)) return out;
  SlotOrientation o = orientFor(cand, producer);
  SignatureRequirement req = requiredSignatureSet(cand.c, o.cOwn, o.cPulled);
  const ContainerSignature* rule4 = nullptr;
  const ContainerSignature* rule1 = nullptr;
  for (const auto& rs : sigs) {
    if (rs.rule == SigRule::Rule4) rule4 = &rs.sig;
    if (rs.rule == SigRule::Rule1) rule1 = &rs.sig;
  }
  if (!rule1 || rule1->signer.kid != producer) return out;
  if (req.rule2 && ![&] {
        for (const auto& rs : sigs)
          if (rs.rule == SigRule::Rule2) return true;
        return false;
      }())
    return out;
  if (req.rule4 && !rule4) return out;
  for (const auto& rs : sigs) {
    if (rs.rule == SigRule::Rule3 || rs.rule == SigRule::Rule5) continue;  // gathered later
    if (detected_.count(rs.sig.signer.kid.bytes())) {
      out.staleDetectedSigner = true;
      return out;
    }
    if (!verifyRole(rs.rule, rs.sig, cand, producer, o, rule4)) return out;
    if (!verifyClaim(rs.sig)) return out;
    out.verifiedSigs.push_back(rs.sig);
  }
  out.ok = true;
  return out;
}

bool Peer::verifyRole(SigRule rule, const ContainerSignature& sig, const AggregateContainer& k,
                      const Kid& producer, const SlotOrientation& o,
                      const ContainerSignature* rule4Sig) const {
  int depth = k.subtree.depth();
  switch (rule) {
    case SigRule::Rule1:
      return sig.h == k.h && sig.depth == depth && sig.counter == k.c &&
             sig.signer.kid == producer;
    case SigRule::Rule2:
      return o.hOwn && sig.h == *o.hOwn && sig.depth == depth + 1 && sig.counter == o.cOwn &&
             sig.signer.kid == producer;
    case SigRule::Rule3:
      return sig.h == k.h && sig.depth == depth && sig.counter == k.c &&
             sig.signer.kid != producer && o.ownChild.contains(sig.signer.kid);
    case SigRule::Rule4:
      return o.hPulled && sig.h == *o.hPulled && sig.depth == depth + 1 &&
             sig.counter == o.cPulled && o.pulledChild.contains(sig.signer.kid);
    case SigRule::Rule5: {
      if (!(sig.h == k.h && sig.depth == depth && sig.counter == k.c)) return false;
      if (o.cPulled == 0 || !o.pulledChild.contains(sig.signer.kid)) return false;
      if (o.cPulled == 1) return rule4Sig && sig.signer.kid == rule4Sig->signer.kid;
      return !rule4Sig || sig.signer.kid != rule4Sig->signer.kid;
    }
  }
  return false;
}

bool Peer::counterPlausible(const ConfirmedContainer& cc, int bucketDepth) const {
  if (!routing_.bucketExhaustive(bucketDepth)) return true;
  const AggregateContainer& k = cc.container;
  size_t population = routing_.bucket(bucketDepth).size();
  if (k.c > population) return false;
  if (k.c2 > 0) {
    if (k.c1 > routing_.contactsIn(k.subtree.child(false)).size()) return false;
    if (k.c2 > routing_.contactsIn(k.subtree.child(true)).size()) return false;
  }
  return true;
}

std::optional<DeviationProof> Peer::noteSignature(const ContainerSignature& sig) {
  if (sig.signer.kid == kid()) return std::nullopt;
  if (detected_.count(sig.signer.kid.bytes())) return std::nullopt;
  SigKey key{sig.signer.kid.bytes(), sig.depth, sig.counter};
  auto it = sigIndex_.find(key);
  if (it == sigIndex_.end()) {
    sigIndex_.emplace(key, sig);
    return std::nullopt;
  }
  if (it->second.h == sig.h) return std::nullopt;
  if (sig.counter > 3) return std::nullopt;  // no proof, presumed honest
  return DeviationProof{sig.signer, it->second, sig};
}

void Peer::ingestSignatures(const std::vector<ContainerSignature>& sigs) {
  for (const ContainerSignature& sig : sigs)
    if (auto proof = noteSignature(sig)) handleDetection(*proof);
}

void Peer::ingestProofs(const std::vector<DeviationProof>& proofs) {
  for (const DeviationProof& p : proofs) {
    if (detected_.count(p.culprit.kid.bytes())) continue;
    if (p.culprit.kid == kid()) {
      metrics_.securityEvents++;
      continue;
    }
    if (!p.verify(adminPub_, kidMode_)) {
      metrics_.securityEvents++;
      continue;
    }
    handleDetection(p);
  }
}

void Peer::handleDetection(const DeviationProof& proof) {
  Digest20 culprit = proof.culprit.kid.bytes();
  if (detected_.count(culprit)) return;
  if (proof.culprit.kid == kid()) return;
  detected_.insert(culprit);
  knownProofs_.emplace(culprit, proof);
  routing_.removeDishonest(proof.culprit.kid);
  transition("detection", currentEpoch_);

  if (phase_ == Phase::Aggregating) {
    int dc = subtreeDepthOf(kid(), proof.culprit.kid);
    bool consumed =
        dc > currentEpoch_ || (dc == currentEpoch_ && perDepth_[size_t(dc)].siblingReceived);
    if (consumed) {
      // Anything shallower may carry the culprit's contribution or signature.
      bool tainted = false;
      auto carries = [&](const std::optional<ConfirmedContainer>& cc) {
        if (!cc) return false;
        for (const auto& rs : cc->signatures)
          if (rs.sig.signer.kid.bytes() == culprit) return true;
        for (const auto& child : cc->compensation)
          for (const auto& rs : child->signatures)
            if (rs.sig.signer.kid.bytes() == culprit) return true;
        return false;
      };
      for (int dd = 0; dd <= dc && !tainted; ++dd) {
        const DepthSlot& slot = perDepth_[size_t(dd)];
        tainted = carries(slot.own) || carries(slot.siblingReceived);
      }
      if (tainted) redoFrom_ = std::max(redoFrom_.value_or(0), dc);
    }
  }

  if ((phase_ == Phase::Aggregating || phase_ == Phase::Done) &&
      !proofStoreStarted_.count(culprit)) {
    proofStoreStarted_.insert(culprit);
    storeProofDetached(proof);
  }
}

// ---------------------------------------------------------------------------
// Signing

std::optional<ContainerSignature> Peer::signClaim(const Digest32& h, int depth, uint32_t counter) {
  auto key = std::make_pair(uint16_t(depth), counter);
  auto it = signedClaims_.find(key);
  if (it != signedClaims_.end()) {
    if (it->second.h == h) return it->second;
    if (counter <= 3) return std::nullopt;  // would be equivocation material
  }
  ContainerSignature sig = signContainerClaim(keys_, cred_, h, depth, counter);
  signedClaims_[key] = sig;
  return sig;
}

std::vector<RoleSignature> Peer::candidatePartials(int candidateDepth) {
  const AggregateContainer& cand = perDepth_[size_t(candidateDepth)].candidate
                                       ? *perDepth_[size_t(candidateDepth)].candidate
                                       : perDepth_[size_t(candidateDepth)].own->container;
  SlotOrientation o = orientFor(cand, kid());
  std::vector<RoleSignature> out;
  auto rule1 = signClaim(cand.h, candidateDepth, cand.c);
  if (rule1) out.push_back({SigRule::Rule1, *rule1});
  if (cand.c > 1 && o.hOwn) {
    auto rule2 = signClaim(*o.hOwn, candidateDepth + 1, o.cOwn);
    if (rule2) out.push_back({SigRule::Rule2, *rule2});
  }
  if (cand.c > 1 && o.cPulled > 0) {
    const auto& pulled = perDepth_[size_t(candidateDepth) + 1].siblingReceived;
    if (pulled) {
      const ContainerSignature* rule1OfPulled = pulled->find(SigRule::Rule1);
      if (rule1OfPulled) out.push_back({SigRule::Rule4, *rule1OfPulled});
    }
  }
  return out;
}

std::vector<DeviationProof> Peer::proofAttachments() const {
  std::vector<DeviationProof> out;
  for (const auto& [kid, proof] : knownProofs_) out.push_back(proof);
  return out;
}

// ---------------------------------------------------------------------------
// Serving

bool Peer::authorizePull(const SubtreeId& subtree, const Kid& requester) const {
  if (subtree.isRoot()) return true;
  return subtree.contains(requester) || subtree.sibling().contains(requester);
}

bool Peer::authorizeConfirm(const SubtreeId& subtree, const Kid& requester) const {
  return subtree.contains(requester) && subtree.contains(kid());
}

void Peer::handlePull(const RequestEnvelope& env, uint64_t rid) {
  const PullRequest& pr = std::get<PullRequest>(env.body);
  if (pr.subtree.kidBits() != bits_ || !pr.subtree.contains(kid()) ||
      !authorizePull(pr.subtree, env.sender.kid)) {
    metrics_.deniedRequestsGiven++;
    reply(rid, PullResponse{Status::Deny, std::nullopt, {}});
    return;
  }
  if (!pullReady(pr.subtree.depth())) {
    parkRequest(env, rid);
    return;
  }
  servePull(env, rid);
}

bool Peer::pullReady(int depth) const {
  const auto& own = perDepth_[size_t(depth)].own;
  if (!own) return false;
  for (const auto& rs : own->signatures)
    if (detected_.count(rs.sig.signer.kid.bytes())) return false;  // repair pending
  return true;
}

void Peer::servePull(const RequestEnvelope& env, uint64_t rid) {
  int depth = std::get<PullRequest>(env.body).subtree.depth();
  ConfirmedContainer cc = *perDepth_[size_t(depth)].own;

  if (cfg_.behaviors.count(Behavior::Equivocate) && depth == bits_ && leafVariantB_) {
    leafRecipients_.insert(env.sender.kid.bytes());
    auto [it, fresh] = variantAssignment_.try_emplace(env.sender.kid.bytes(),
                                                      variantAssignment_.size() % 2 == 1);
    if (it->second) cc = *leafVariantB_;
  }
  if (cfg_.behaviors.count(Behavior::ForgeCounter)) {
    cc.container.c += 7;  // breaks c = c1 + c2, receivers must reject
    cc.container.h = cc.container.canonicalHash();
    ContainerSignature forged =
        signContainerClaim(keys_, cred_, cc.container.h, depth, cc.container.c);
    for (auto& rs : cc.signatures)
      if (rs.rule == SigRule::Rule1) rs.sig = forged;
  }

  metrics_.outbox++;
  metrics_.leakedCounters.push_back(cc.container.c);
  if (cfg_.robustAccounting)
    for (const auto& child : cc.compensation) metrics_.leakedRobust.push_back(child->container.c);
  reply(rid, PullResponse{Status::Ok, std::move(cc), proofAttachments()});
}

void Peer::handleConfirm(const RequestEnvelope& env, uint64_t rid) {
  if (cfg_.behaviors.count(Behavior::BlockConfirmation)) {
    net_.respondSilence(rid);
    return;
  }
  const ConfirmRequest& cr = std::get<ConfirmRequest>(env.body);
  const SubtreeId& subtree = cr.candidate.subtree;
  if (subtree.kidBits() != bits_ || !authorizeConfirm(subtree, env.sender.kid)) {
    metrics_.deniedRequestsGiven++;
    reply(rid, ConfirmResponse{Status::Deny});
    return;
  }
  ingestProofs(cr.proofs);
  VerifyOutcome v = verifyCandidateSet(cr.candidate, cr.partialSigs, env.sender.kid);
  if (!v.ok && !v.staleDetectedSigner) {
    metrics_.deniedRequestsGiven++;
    metrics_.securityEvents++;
    reply(rid, ConfirmResponse{Status::Deny});
    return;
  }
  ingestSignatures(v.verifiedSigs);
  if (cfg_.robustAccounting) metrics_.receivedRobust.push_back(cr.candidate.c);

  if (!confirmReady(subtree.depth())) {
    parkRequest(env, rid);
    return;
  }
  serveConfirm(env, rid);
}

bool Peer::confirmReady(int depth) const { return referenceAt(depth) != nullptr; }

const AggregateContainer* Peer::referenceAt(int depth) const {
  const DepthSlot& slot = perDepth_[size_t(depth)];
  if (slot.own) return &slot.own->container;
  if (slot.candidate) return &*slot.candidate;
  return nullptr;
}

void Peer::serveConfirm(const RequestEnvelope& env, uint64_t rid) {
  const ConfirmRequest& cr = std::get<ConfirmRequest>(env.body);
  int depth = cr.candidate.subtree.depth();
  const AggregateContainer* mine = referenceAt(depth);

  if (mine->h == cr.candidate.h) {
    auto sig = signClaim(cr.candidate.h, depth, cr.candidate.c);
    if (sig) {
      reply(rid, ConfirmResponse{Status::Ok, *sig, std::nullopt, {}, proofAttachments()});
      return;
    }
  }
  // Independent recomputation disagrees (or the claim guard refused): answer
  // with the own candidate so the requester can run its majority vote.
  ConfirmResponse refusal;
  refusal.status = Status::Refuse;
  refusal.own = ContainerHeader::of(*mine);
  refusal.ownSigs = candidatePartials(depth);
  refusal.proofs = proofAttachments();
  reply(rid, std::move(refusal));
}

void Peer::parkRequest(RequestEnvelope env, uint64_t rid) {
  parked_.push_back(Parked{std::move(env), rid});
}

void Peer::flushParked() {
  if (flushing_) return;
  flushing_ = true;
  for (;;) {
    bool progressed = false;
    std::vector<Parked> pending = std::move(parked_);
    parked_.clear();
    for (Parked& p : pending) {
      bool ready = false;
      if (std::holds_alternative<PullRequest>(p.env.body))
        ready = pullReady(std::get<PullRequest>(p.env.body).subtree.depth());
      else if (std::holds_alternative<ConfirmRequest>(p.env.body))
        ready = confirmReady(std::get<ConfirmRequest>(p.env.body).candidate.subtree.depth());
      if (!ready) {
        parked_.push_back(std::move(p));
        continue;
      }
      progressed = true;
      if (std::holds_alternative<PullRequest>(p.env.body))
        servePull(p.env, p.rid);
      else
        serveConfirm(p.env, p.rid);
    }
    if (!progressed) break;
  }
  flushing_ = false;
}

// ---------------------------------------------------------------------------

std::vector<Peer::HeldContainer> Peer::heldContainers() const {
  std::vector<HeldContainer> out;
  std::function<void(const ConfirmedContainer&, HeldContainer::Origin)> addTree =
      [&](const ConfirmedContainer& cc, HeldContainer::Origin origin) {
        out.push_back({cc.container, origin});
        for (const auto& child : cc.compensation)
          addTree(*child, HeldContainer::Origin::Compensation);
      };
  for (const DepthSlot& slot : perDepth_) {
    if (slot.own) addTree(*slot.own, HeldContainer::Origin::OwnPath);
    if (slot.siblingReceived) addTree(*slot.siblingReceived, HeldContainer::Origin::Pulled);
    if (slot.candidate) out.push_back({*slot.candidate, HeldContainer::Origin::OwnPath});
  }
  if (leafVariantB_) out.push_back({leafVariantB_->container, HeldContainer::Origin::OwnPath});
  return out;
}

ChainReport Peer::verifyRootInclusion(const WitnessMap& witnesses,
                                      const Digest32& majorityRoot) const {
  ChainReport rep;
  const AggregateContainer* leafContainer = leaf();
  if (!leafContainer) {
    rep.result = ChainResult::Incomplete;
    return rep;
  }
  auto it = witnesses.find(majorityRoot);
  if (it == witnesses.end()) {
    rep.result = ChainResult::Incomplete;
    rep.missing.push_back(majorityRoot);
    return rep;
  }
  return verifyChain(it->second, witnesses, leafContainer->h);
}

}  // namespace advokat
