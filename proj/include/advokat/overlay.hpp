#pragma once

#include <functional>
#include <map>
#include <set>

#include "advokat/task.hpp"
#include "advokat/wire.hpp"

namespace advokat {

/// Consecutive uninformative lookup responses before a lookup converges.
constexpr int kLookupWindow = 4;

/// Raw per-endpoint message counters kept by the transport. Protocol-level
/// load metrics (container responses, Fig.-style inbox/outbox) live in
/// PeerMetrics; these exist for conservation and determinism checks.
struct TransportStats {
  uint64_t requestsSent = 0;
  uint64_t responsesGiven = 0;
  uint64_t responsesReceived = 0;
};

/// Reliable, ordered, instrumented in-process request/response transport.
/// Deliveries are queued on the event loop in FIFO order. An adversarial
/// non-answer is delivered as an explicit silence marker: channels are
/// reliable, so refusing to answer is observable and the model needs no
/// timeouts.
class Transport {
 public:
  explicit Transport(EventLoop& loop) : loop_(loop) {}

  using Handler = std::function<void(RequestEnvelope, uint64_t)>;
  using ReplyFn = std::function<void(ResponseEnvelope)>;
  using MessageLogger = std::function<void(bool isRequest, Address from, Address to)>;

  Address add(Handler h) {
    handlers_.push_back(std::move(h));
    stats_.emplace_back();
    return Address(handlers_.size() - 1);
  }

  void request(Address to, RequestEnvelope env, ReplyFn onReply);
  void respond(uint64_t requestId, ResponseEnvelope env);
  void respondSilence(uint64_t requestId);

  const TransportStats& stats(Address a) const { return stats_.at(a); }
  size_t endpoints() const { return handlers_.size(); }
  void setLogger(MessageLogger lg) { logger_ = std::move(lg); }
  EventLoop& loop() { return loop_; }

 private:
  struct PendingRequest {
    ReplyFn onReply;
    Address requester;
    Address responder;
  };

  EventLoop& loop_;
  std::vector<Handler> handlers_;
  std::vector<TransportStats> stats_;
  std::map<uint64_t, PendingRequest> pending_;
  MessageLogger logger_;
  uint64_t nextId_ = 1;
};

/// co_await-able request; resumes with the response envelope (or silence).
struct RequestOp {
  Transport& net;
  Address to;
  RequestEnvelope env;
  std::optional<ResponseEnvelope> result;

  bool await_ready() const noexcept { return false; }
  void await_suspend(std::coroutine_handle<> h) {
    net.request(to, std::move(env), [this, h](ResponseEnvelope r) {
      result = std::move(r);
      h.resume();
    });
  }
  ResponseEnvelope await_resume() { return std::move(*result); }
};

// ---------------------------------------------------------------------------

/// k-buckets indexed by sibling-subtree depth d = 1..B; bucket d holds
/// contacts of S(owner, d). No eviction: peers are static after the join
/// phase, detected-dishonest peers are removed permanently.
class RoutingTable {
 public:
  RoutingTable() = default;
  RoutingTable(const Kid& owner, int k) : owner_(owner), k_(k), buckets_(owner.bits()) {}

  enum class Insert { Accepted, Known, Full, ProofRejected, Blacklisted, Ignored };
  using ProofCheck = std::function<bool(const Credentials&)>;

  Insert insert(const Contact& c, const ProofCheck& check);
  void removeDishonest(const Kid& kid);
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  const Kid& owner() const { return owner_; }
  int capacity() const { return k_; }
  const std::vector<Contact>& bucket(int d) const { return buckets_.at(size_t(d) - 1); }
  /// A non-full bucket is exhaustive once the join phase has completed.
  bool bucketExhaustive(int d) const { return bucket(d).size() < size_t(k_); }

  std::vector<Contact> closestTo(const Kid& target, size_t count) const;
  std::vector<Contact> contactsIn(const SubtreeId& subtree) const;
  std::vector<Contact> allContacts() const;
  size_t size() const;
  bool knows(const Kid& kid) const;

 private:
  Kid owner_;
  int k_ = 20;
  std::vector<std::vector<Contact>> buckets_;
  std::set<Digest20> blacklist_;
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------

struct PeerMetrics {
  // 1/c linkability bookkeeping: counters of containers sent in responses /
  // received in responses. Basic accounting covers pull traffic only; the
  // robust lists add containers attached to confirmations and compensation.
  std::vector<uint32_t> leakedCounters;
  std::vector<uint32_t> receivedCounters;
  std::vector<uint32_t> leakedRobust;
  std::vector<uint32_t> receivedRobust;

  uint64_t inbox = 0;   // container-bearing responses received
  uint64_t outbox = 0;  // container-bearing responses given
  uint64_t pullRequestsSent = 0;
  uint64_t confirmRequestsSent = 0;
  uint64_t lookupsStarted = 0;
  uint64_t lookupCycles = 0;
  uint64_t deniedRequestsGiven = 0;
  uint64_t overreachDenied = 0;
  uint64_t securityEvents = 0;
  uint64_t retriesUsed = 0;
  uint64_t compensationsAttached = 0;
  uint64_t conflictsFlagged = 0;

  double leaked(bool robust) const;
  double received(bool robust) const;
};

/// Overlay node: credentials, signed messaging, hardened routing table,
/// iterative lookup and the small DHT used for deviation proofs. The
/// aggregation protocol derives from this.
class Node {
 public:
  Node(EventLoop& loop, Transport& net, const AdminPublicKey& adminPub, KidMode kidMode,
       KeyPair keys, Credentials cred, int k);
  virtual ~Node() = default;

  const Credentials& cred() const { return cred_; }
  const Kid& kid() const { return cred_.kid; }
  Address address() const { return address_; }
  RoutingTable& routing() { return routing_; }
  const RoutingTable& routing() const { return routing_; }
  PeerMetrics& metrics() { return metrics_; }
  const PeerMetrics& metrics() const { return metrics_; }
  const std::map<Digest20, Bytes>& dhtStorage() const { return dht_; }

  Contact selfContact() const { return Contact{cred_, address_}; }

  /// Verifies a credential's KID proof, with a per-node cache.
  bool checkCredentials(const Credentials& c);

  /// verifyContainerClaim through the credential cache.
  bool verifyClaim(const ContainerSignature& sig);

  RoutingTable::Insert insertContact(const Contact& c);

  /// Kademlia lookup, alpha = 1, merging proof-checked contacts.
  Task<std::vector<Contact>> iterativeLookup(Kid target);

  Task<bool> dhtStoreValue(Digest20 key, Bytes value);
  Task<std::optional<Bytes>> dhtGetValue(Digest20 key);

  static Digest20 dhtKeyFor(const Kid& kid);

 protected:
  RequestEnvelope makeRequest(RequestBody body);
  ResponseEnvelope makeResponse(ResponseBody body);
  bool verifyRequest(const RequestEnvelope& env);
  bool verifyResponse(const ResponseEnvelope& env);
  RequestOp send(const Contact& to, RequestBody body);
  void reply(uint64_t rid, ResponseBody body) { net_.respond(rid, makeResponse(std::move(body))); }

  void onRequest(RequestEnvelope env, uint64_t rid);
  virtual void handlePull(const RequestEnvelope& env, uint64_t rid);
  virtual void handleConfirm(const RequestEnvelope& env, uint64_t rid);

  EventLoop& loop_;
  Transport& net_;
  const AdminPublicKey& adminPub_;
  KidMode kidMode_;
  KeyPair keys_;
  Credentials cred_;
  Address address_ = 0;
  RoutingTable routing_;
  PeerMetrics metrics_;
  std::map<Digest20, Bytes> dht_;
  uint64_t nonce_ = 0;
  size_t maxDhtValue_ = 1 << 16;

 private:
  std::set<Digest20> credCache_;
  std::map<Digest20, uint64_t> lastNonce_;
};

}  // namespace advokat
