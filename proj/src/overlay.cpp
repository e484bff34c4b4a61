#include "advokat/overlay.hpp"

#include <algorithm>

namespace advokat {

void Transport::request(Address to, RequestEnvelope env, ReplyFn onReply) {
  uint64_t rid = nextId_++;
  pending_[rid] = PendingRequest{std::move(onReply), env.from, to};
  stats_[env.from].requestsSent++;
  if (logger_) logger_(true, env.from, to);
  loop_.post([this, to, rid, env = std::move(env)]() mutable {
    handlers_[to](std::move(env), rid);
  });
}

void Transport::respond(uint64_t requestId, ResponseEnvelope env) {
  auto it = pending_.find(requestId);
  if (it == pending_.end()) throw std::logic_error("responding to unknown request");
  PendingRequest pr = std::move(it->second);
  pending_.erase(it);
  stats_[pr.responder].responsesGiven++;
  if (logger_) logger_(false, pr.responder, pr.requester);
  loop_.post([this, pr = std::move(pr), env = std::move(env)]() mutable {
    stats_[pr.requester].responsesReceived++;
    pr.onReply(std::move(env));
  });
}

void Transport::respondSilence(uint64_t requestId) {
  auto it = pending_.find(requestId);
  if (it == pending_.end()) throw std::logic_error("responding to unknown request");
  PendingRequest pr = std::move(it->second);
  pending_.erase(it);
  ResponseEnvelope env;
  env.silence = true;
  loop_.post([pr = std::move(pr), env = std::move(env)]() mutable { pr.onReply(std::move(env)); });
}

// ---------------------------------------------------------------------------

RoutingTable::Insert RoutingTable::insert(const Contact& c, const ProofCheck& check) {
  if (c.kid() == owner_) return Insert::Ignored;
  if (blacklist_.count(c.kid().bytes())) return Insert::Blacklisted;
  if (frozen_) return Insert::Ignored;
  if (!check(c.cred)) return Insert::ProofRejected;
  int d = subtreeDepthOf(owner_, c.kid());
  auto& bucket = buckets_[size_t(d) - 1];
  for (const Contact& known : bucket)
    if (known.kid() == c.kid()) return Insert::Known;
  if (bucket.size() >= size_t(k_)) return Insert::Full;
  bucket.push_back(c);
  return Insert::Accepted;
}

void RoutingTable::removeDishonest(const Kid& kid) {
  blacklist_.insert(kid.bytes());
  if (kid == owner_) return;
  auto& bucket = buckets_[size_t(subtreeDepthOf(owner_, kid)) - 1];
  std::erase_if(bucket, [&](const Contact& c) { return c.kid() == kid; });
}

std::vector<Contact> RoutingTable::closestTo(const Kid& target, size_t count) const {
  std::vector<const Contact*> refs;
  refs.reserve(64);
  for (const auto& bucket : buckets_)
    for (const Contact& c : bucket) refs.push_back(&c);
  auto closer = [&](const Contact* a, const Contact* b) {
    return xorDistance(a->kid(), target) < xorDistance(b->kid(), target);
  };
  if (refs.size() > count) {
    std::nth_element(refs.begin(), refs.begin() + long(count), refs.end(), closer);
    refs.resize(count);
  }
  std::sort(refs.begin(), refs.end(), closer);
  std::vector<Contact> out;
  out.reserve(refs.size());
  for (const Contact* c : refs) out.push_back(*c);
  return out;
}

std::vector<Contact> RoutingTable::contactsIn(const SubtreeId& subtree) const {
  std::vector<Contact> out;
  for (const auto& bucket : buckets_)
    for (const Contact& c : bucket)
      if (subtree.contains(c.kid())) out.push_back(c);
  return out;
}

std::vector<Contact> RoutingTable::allContacts() const {
  std::vector<Contact> out;
  for (const auto& bucket : buckets_) out.insert(out.end(), bucket.begin(), bucket.end());
  return out;
}

size_t RoutingTable::size() const {
  size_t n = 0;
  for (const auto& bucket : buckets_) n += bucket.size();
  return n;
}

bool RoutingTable::knows(const Kid& kid) const {
  if (kid == owner_) return false;
  for (const Contact& c : bucket(subtreeDepthOf(owner_, kid)))
    if (c.kid() == kid) return true;
  return false;
}

// ---------------------------------------------------------------------------

double PeerMetrics::leaked(bool robust) const {
  double sum = 0;
  for (uint32_t c : leakedCounters) sum += 1.0 / double(c);
  if (robust)
    for (uint32_t c : leakedRobust) sum += 1.0 / double(c);
  return sum;
}

double PeerMetrics::received(bool robust) const {
  double sum = 0;
  for (uint32_t c : receivedCounters) sum += 1.0 / double(c);
  if (robust)
    for (uint32_t c : receivedRobust) sum += 1.0 / double(c);
  return sum;
}

Node::Node(EventLoop& loop, Transport& net, const AdminPublicKey& adminPub, KidMode kidMode,
           KeyPair keys, Credentials cred, int k)
    : loop_(loop),
      net_(net),
      adminPub_(adminPub),
      kidMode_(kidMode),
      keys_(std::move(keys)),
      cred_(std::move(cred)),
      routing_(cred_.kid, k) {
  address_ = net_.add([this](RequestEnvelope env, uint64_t rid) { onRequest(std::move(env), rid); });
}

bool Node::checkCredentials(const Credentials& c) {
  if (credCache_.count(c.kid.bytes())) return true;
  if (!adminVerify(c.pk, c.token, adminPub_)) return false;
  if (kidMode_ != KidMode::PerfectTree) {
    if (deriveKid(c.token, c.pk, kidMode_, c.kid.bits()) != c.kid) return false;
  }
  credCache_.insert(c.kid.bytes());
  return true;
}

bool Node::verifyClaim(const ContainerSignature& sig) {
  if (!KeyPair::verify(sig.signer.pk, sig.claimBytes(), sig.signature)) return false;
  return checkCredentials(sig.signer);
}

RoutingTable::Insert Node::insertContact(const Contact& c) {
  auto res = routing_.insert(c, [this](const Credentials& cr) { return checkCredentials(cr); });
  if (res == RoutingTable::Insert::ProofRejected) metrics_.securityEvents++;
  return res;
}

RequestEnvelope Node::makeRequest(RequestBody body) {
  RequestEnvelope env;
  env.from = address_;
  env.sender = cred_;
  env.nonce = ++nonce_;
  env.body = std::move(body);
  env.signature = keys_.sign(env.signedBytes());
  return env;
}

ResponseEnvelope Node::makeResponse(ResponseBody body) {
  ResponseEnvelope env;
  env.from = address_;
  env.sender = cred_;
  env.nonce = ++nonce_;
  env.body = std::move(body);
  env.signature = keys_.sign(env.signedBytes());
  return env;
}

bool Node::verifyRequest(const RequestEnvelope& env) {
  if (!KeyPair::verify(env.sender.pk, env.signedBytes(), env.signature)) return false;
  if (!checkCredentials(env.sender)) return false;
  // Monotone nonce per sender.
  uint64_t& last = lastNonce_[env.sender.kid.bytes()];
  if (env.nonce <= last) return false;
  last = env.nonce;
  return true;
}

bool Node::verifyResponse(const ResponseEnvelope& env) {
  if (env.silence) return false;
  if (!KeyPair::verify(env.sender.pk, env.signedBytes(), env.signature)) return false;
  if (!checkCredentials(env.sender)) return false;
  uint64_t& last = lastNonce_[env.sender.kid.bytes()];
  if (env.nonce <= last) return false;
  last = env.nonce;
  return true;
}

RequestOp Node::send(const Contact& to, RequestBody body) {
  return RequestOp{net_, to.address, makeRequest(std::move(body))};
}

void Node::onRequest(RequestEnvelope env, uint64_t rid) {
  if (!verifyRequest(env)) {
    metrics_.securityEvents++;
    metrics_.deniedRequestsGiven++;
    // Deny with a body matching the request type.
    if (std::holds_alternative<PullRequest>(env.body))
      reply(rid, PullResponse{Status::Deny, std::nullopt, {}});
    else if (std::holds_alternative<ConfirmRequest>(env.body))
      reply(rid, ConfirmResponse{Status::Deny});
    else if (std::holds_alternative<LookupRequest>(env.body))
      reply(rid, LookupResponse{});
    else if (std::holds_alternative<StoreRequest>(env.body))
      reply(rid, StoreResponse{Status::Ignored});
    else
      reply(rid, GetResponse{});
    return;
  }
  // Every verified sender is a live contact (ignored once frozen).
  insertContact(Contact{env.sender, env.from});

  if (auto* lookup = std::get_if<LookupRequest>(&env.body)) {
    reply(rid, LookupResponse{routing_.closestTo(lookup->target, size_t(routing_.capacity()))});
    return;
  }
  if (auto* store = std::get_if<StoreRequest>(&env.body)) {
    if (store->value.size() > maxDhtValue_) {
      reply(rid, StoreResponse{Status::Ignored});
      return;
    }
    // First write wins.
    if (dht_.count(store->key)) {
      reply(rid, StoreResponse{Status::Ignored});
    } else {
      dht_[store->key] = store->value;
      reply(rid, StoreResponse{Status::Ok});
    }
    return;
  }
  if (auto* get = std::get_if<GetRequest>(&env.body)) {
    auto it = dht_.find(get->key);
    if (it == dht_.end())
      reply(rid, GetResponse{Status::NotFound, {}});
    else
      reply(rid, GetResponse{Status::Ok, it->second});
    return;
  }
  if (std::holds_alternative<PullRequest>(env.body)) {
    handlePull(env, rid);
    return;
  }
  handleConfirm(env, rid);
}

void Node::handlePull(const RequestEnvelope&, uint64_t rid) {
  metrics_.deniedRequestsGiven++;
  reply(rid, PullResponse{Status::Deny, std::nullopt, {}});
}

void Node::handleConfirm(const RequestEnvelope&, uint64_t rid) {
  metrics_.deniedRequestsGiven++;
  reply(rid, ConfirmResponse{Status::Deny});
}

Task<std::vector<Contact>> Node::iterativeLookup(Kid target) {
  metrics_.lookupsStarted++;
  const size_t want = size_t(routing_.capacity());

  struct Entry {
    Contact contact;
    bool queried = false;
  };
  std::map<XorDistance, Entry> shortlist;
  bool learnedNew = false;
  auto merge = [&](const Contact& c) {
    if (c.kid() == cred_.kid) return;
    if (!checkCredentials(c.cred)) {
      metrics_.securityEvents++;
      return;
    }
    insertContact(c);
    if (shortlist.emplace(xorDistance(c.kid(), target), Entry{c, false}).second)
      learnedNew = true;
  };
  for (const Contact& c : routing_.closestTo(target, want)) merge(c);

  // Candidates are queried closest-first, so contacts inside the target's
  // subtree are exhausted before any outsider. The lookup converges once a
  // few consecutive responses stop teaching anything new.
  int uninformative = 0;
  for (;;) {
    if (uninformative >= kLookupWindow) break;
    Entry* next = nullptr;
    size_t rank = 0;
    for (auto& [dist, entry] : shortlist) {
      if (rank++ >= want) break;
      if (!entry.queried) {
        next = &entry;
        break;
      }
    }
    if (!next) break;
    next->queried = true;
    metrics_.lookupCycles++;
    ResponseEnvelope resp = co_await send(next->contact, LookupRequest{target});
    learnedNew = false;
    if (verifyResponse(resp)) {
      if (auto* body = std::get_if<LookupResponse>(&resp.body))
        for (const Contact& c : body->contacts) merge(c);
    }
    uninformative = learnedNew ? 0 : uninformative + 1;
  }

  std::vector<Contact> result;
  for (auto& [dist, entry] : shortlist) {
    if (result.size() >= want) break;
    result.push_back(entry.contact);
  }
  co_return result;
}

Digest20 Node::dhtKeyFor(const Kid& kid) {
  return hash160(std::span<const uint8_t>(kid.bytes()));
}

Task<bool> Node::dhtStoreValue(Digest20 key, Bytes value) {
  Kid keyKid(key, cred_.kid.bits());
  std::vector<Contact> targets = co_await iterativeLookup(keyKid);
  if (targets.size() > size_t(routing_.capacity())) targets.resize(size_t(routing_.capacity()));
  bool storedAnywhere = false;
  // The local replica counts if this node is among the k closest.
  bool selfCloser = targets.empty() ||
                    xorDistance(cred_.kid, keyKid) < xorDistance(targets.back().kid(), keyKid) ||
                    targets.size() < size_t(routing_.capacity());
  if (selfCloser && !dht_.count(key)) {
    dht_[key] = value;
    storedAnywhere = true;
  }
  for (const Contact& t : targets) {
    ResponseEnvelope resp = co_await send(t, StoreRequest{key, value});
    if (!verifyResponse(resp)) continue;
    auto* body = std::get_if<StoreResponse>(&resp.body);
    if (body && body->status == Status::Ok) storedAnywhere = true;
  }
  co_return storedAnywhere;
}

Task<std::optional<Bytes>> Node::dhtGetValue(Digest20 key) {
  auto local = dht_.find(key);
  if (local != dht_.end()) co_return local->second;
  Kid keyKid(key, cred_.kid.bits());
  std::vector<Contact> targets = co_await iterativeLookup(keyKid);
  for (const Contact& t : targets) {
    ResponseEnvelope resp = co_await send(t, GetRequest{key});
    if (!verifyResponse(resp)) continue;
    auto* body = std::get_if<GetResponse>(&resp.body);
    if (body && body->status == Status::Ok) co_return body->value;
  }
  co_return std::nullopt;
}

}  // namespace advokat
