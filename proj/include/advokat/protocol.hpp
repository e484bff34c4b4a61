#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>

#include "advokat/overlay.hpp"
#include "advokat/rng.hpp"

namespace advokat {

enum class Phase : uint8_t { Created, Joining, Aggregating, Done, Aborted };

enum class Behavior : uint8_t {
  CorruptAggregate,
  ForgeCounter,
  Equivocate,
  BlockConfirmation,
  OverreachRequests,
  DropSibling,
};

/// Which of the five confirmation rules apply, as a function of the counters
/// seen from the producer's side (own child vs pulled child).
struct SignatureRequirement {
  bool rule1 = true;
  bool rule2 = false;
  bool rule3 = false;  // confirmer from the producer's half
  bool rule4 = false;
  bool rule5 = false;  // confirmer from the pulled half

  bool needs(SigRule r) const;
};

SignatureRequirement requiredSignatureSet(uint32_t c, uint32_t cOwn, uint32_t cPulled);

/// Producer-relative view of a container's canonical child slots.
struct SlotOrientation {
  uint32_t cOwn = 0;
  uint32_t cPulled = 0;
  std::optional<Digest32> hOwn;
  std::optional<Digest32> hPulled;
  SubtreeId ownChild;
  SubtreeId pulledChild;  // valid only when cPulled > 0
};

SlotOrientation orientFor(const AggregateContainer& k, const Kid& producer);

struct PeerConfig {
  AlgebraSpec algebra;
  KidMode kidMode = KidMode::SimulationPk;
  int retryBudget = 3;
  int staleRetryBudget = 16;
  bool degrade = true;  // false: strict, abort on unresolved siblings
  bool robustAccounting = false;
  std::set<Behavior> behaviors;
};

/// One peer actor: joins the overlay, then runs the epoch-wise recursive
/// aggregation hardened by the confirmation procedure. All cross-peer
/// effects travel as signed transport messages; deferred responses are
/// parked until the local state they need exists.
class Peer : public Node {
 public:
  Peer(EventLoop& loop, Transport& net, const AdminPublicKey& adminPub, PeerConfig cfg, int k,
       KeyPair keys, Credentials cred, Aggregate vote, uint64_t rngSeed);

  // -- lifecycle, driven by the simulator ---------------------------------
  Detached runJoin(std::optional<Contact> bootstrap, std::function<void()> done);
  Detached runRefresh(std::function<void()> done);
  void freezeRouting();
  Detached runAggregation(std::function<void(bool completed)> done);

  // -- state access --------------------------------------------------------
  Phase phase() const { return phase_; }
  int currentEpoch() const { return currentEpoch_; }
  bool flaggedIncomplete() const { return flaggedIncomplete_; }
  bool dishonest() const { return !cfg_.behaviors.empty(); }

  const std::optional<ConfirmedContainer>& ownConfirmed(int depth) const {
    return perDepth_.at(size_t(depth)).own;
  }
  const std::optional<ConfirmedContainer>& siblingReceived(int depth) const {
    return perDepth_.at(size_t(depth)).siblingReceived;
  }
  const ConfirmedContainer* root() const {
    return perDepth_[0].own ? &*perDepth_[0].own : nullptr;
  }
  const AggregateContainer* leaf() const {
    return perDepth_.back().own ? &perDepth_.back().own->container : nullptr;
  }

  const std::set<Digest20>& detected() const { return detected_; }
  const std::map<Digest20, DeviationProof>& knownProofs() const { return knownProofs_; }
  const std::vector<ContainerSignature>& rootExtraSignatures() const { return rootExtraSigs_; }
  /// Distinct honest peers that were served a leaf variant (equivocators).
  const std::set<Digest20>& leafRecipients() const { return leafRecipients_; }

  struct HeldContainer {
    AggregateContainer container;
    enum class Origin : uint8_t { OwnPath, Pulled, Compensation } origin;
  };
  /// Everything this peer currently holds, for audits and witness maps.
  std::vector<HeldContainer> heldContainers() const;

  // -- authorization rules, exposed for tests ------------------------------
  bool authorizePull(const SubtreeId& subtree, const Kid& requester) const;
  bool authorizeConfirm(const SubtreeId& subtree, const Kid& requester) const;

  /// Chain verification from the network-majority root down to the own leaf.
  ChainReport verifyRootInclusion(const WitnessMap& witnesses,
                                  const Digest32& majorityRoot) const;

  using TransitionHook = std::function<void(const Peer&, const char* event, int depth)>;
  void setTransitionHook(TransitionHook h) { hook_ = std::move(h); }

 protected:
  void handlePull(const RequestEnvelope& env, uint64_t rid) override;
  void handleConfirm(const RequestEnvelope& env, uint64_t rid) override;

 private:
  struct DepthSlot {
    std::optional<ConfirmedContainer> own;
    std::optional<ConfirmedContainer> siblingReceived;
    std::optional<AggregateContainer> candidate;
  };

  struct PullResult {
    enum class Status : uint8_t { Got, Empty, Unresolved } status = Status::Empty;
    std::optional<ConfirmedContainer> container;
    Contact responder;
  };

  enum class EpochStatus : uint8_t { Ok, Abort };

  struct ConfirmOutcome {
    enum class Action : uint8_t { Confirmed, RepeatSiblingPull, RepeatChild } action;
    std::optional<ConfirmedContainer> confirmed;
  };

  struct GatherResult {
    enum class Status : uint8_t { Got, Exhausted, Majority, Detected } status;
    std::optional<ContainerSignature> sig;
    std::optional<ContainerHeader> majorityHeader;
  };

  struct VerifyOutcome {
    bool ok = false;
    bool staleDetectedSigner = false;  // failed because a signer is now detected
    std::vector<ContainerSignature> verifiedSigs;
  };

  // -- aggregation ----------------------------------------------------------
  Task<EpochStatus> aggregationMain();
  Task<EpochStatus> computeEpoch(int d, int recursionBudget);
  Task<PullResult> pullSibling(int d, const std::set<Digest20>& excludedResponders);
  Task<ConfirmOutcome> confirmCandidate(int candidateDepth, const PullResult& pulled);
  Task<GatherResult> gatherSignature(SigRule rule, const AggregateContainer& cand,
                                     const std::vector<RoleSignature>& partials,
                                     std::vector<Contact> targets,
                                     std::map<Digest32, std::set<Digest20>>& tally,
                                     std::map<Digest32, ContainerHeader>& headers);
  ConfirmedContainer buildCompensated(const ConfirmedContainer& base, const SlotOrientation& o,
                                      const PullResult& pulled);
  Task<bool> overreachProbe(int d);
  Task<uint32_t> gatherRootExtras();
  Detached storeProofDetached(DeviationProof proof);

  void buildLeaf();
  void purgeShallowerThan(int depth);
  bool redoPending(int d) const { return redoFrom_ && *redoFrom_ >= d; }

  // -- verification & detection --------------------------------------------
  VerifyOutcome verifyConfirmed(const ConfirmedContainer& cc, const SubtreeId* expected,
                                const Kid* expectedProducer, int depthLimit = 8);
  VerifyOutcome verifyCandidateSet(const AggregateContainer& cand,
                                   const std::vector<RoleSignature>& sigs, const Kid& producer);
  bool verifyRole(SigRule rule, const ContainerSignature& sig, const AggregateContainer& k,
                  const Kid& producer, const SlotOrientation& o,
                  const ContainerSignature* rule4Sig) const;
  bool counterPlausible(const ConfirmedContainer& cc, int bucketDepth) const;

  std::optional<DeviationProof> noteSignature(const ContainerSignature& sig);
  void ingestSignatures(const std::vector<ContainerSignature>& sigs);
  void ingestProofs(const std::vector<DeviationProof>& proofs);
  void handleDetection(const DeviationProof& proof);

  // -- signing --------------------------------------------------------------
  std::optional<ContainerSignature> signClaim(const Digest32& h, int depth, uint32_t counter);
  std::vector<RoleSignature> candidatePartials(int candidateDepth);
  std::vector<DeviationProof> proofAttachments() const;

  // -- serving --------------------------------------------------------------
  void servePull(const RequestEnvelope& env, uint64_t rid);
  void serveConfirm(const RequestEnvelope& env, uint64_t rid);
  bool pullReady(int depth) const;
  bool confirmReady(int depth) const;
  void parkRequest(RequestEnvelope env, uint64_t rid);
  void flushParked();
  const AggregateContainer* referenceAt(int depth) const;

  void transition(const char* event, int depth) {
    if (hook_) hook_(*this, event, depth);
  }

  PeerConfig cfg_;
  Aggregate vote_;
  Rng rng_;
  int bits_;

  std::vector<DepthSlot> perDepth_;  // index = depth, 0..B
  Phase phase_ = Phase::Created;
  int currentEpoch_ = -1;
  std::optional<int> redoFrom_;
  bool flaggedIncomplete_ = false;

  // signature index for equivocation detection: (signer, depth, c) -> sig
  struct SigKey {
    Digest20 signer;
    uint16_t depth;
    uint32_t counter;
    auto operator<=>(const SigKey&) const = default;
  };
  std::map<SigKey, ContainerSignature> sigIndex_;
  std::set<Digest20> detected_;
  std::map<Digest20, DeviationProof> knownProofs_;
  std::set<Digest20> proofStoreStarted_;

  // own signed claims: (depth, c) -> (h, signature); guards against ever
  // producing equivocation material at c <= 3
  std::map<std::pair<uint16_t, uint32_t>, ContainerSignature> signedClaims_;

  struct Parked {
    RequestEnvelope env;
    uint64_t rid;
  };
  std::vector<Parked> parked_;
  bool flushing_ = false;

  // adversarial state
  std::optional<ConfirmedContainer> leafVariantB_;
  std::map<Digest20, bool> variantAssignment_;  // requester -> serve B?
  std::set<Digest20> leafRecipients_;

  std::vector<ContainerSignature> rootExtraSigs_;
  TransitionHook hook_;
  std::function<void(bool)> aggregationDone_;
};

}  // namespace advokat
