#include "advokat/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace advokat {

using nlohmann::json;

void ScenarioConfig::validate() const {
  if (n < 1) throw ConfigError("n must be at least 1");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (kidBits < 1 || kidBits > kMaxKidBits) throw ConfigError("B out of range (1..160)");
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (rsaBits < 512) throw ConfigError("rsa_bits below 512");
  if (retryBudget < 1) throw ConfigError("retry_budget must be at least 1");
  try {
    algebra.validate();
    adversary.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (kidMode == KidMode::PerfectTree) {
    if (!forcedKids.empty()) {
      if (forcedKids.size() != n) throw ConfigError("forced_kids size must equal n");
      for (const std::string& s : forcedKids)
        if (int(s.size()) != kidBits) throw ConfigError("forced kid width must equal B");
    } else {
      if (kidBits > 30 || n != (uint32_t(1) << kidBits))
        throw ConfigError("perfect-tree mode requires n = 2^B (or explicit forced_kids)");
    }
  } else if (!forcedKids.empty()) {
    throw ConfigError("forced_kids requires kid_mode = perfect-tree");
  }
  if (voteMode != "random" && voteMode.rfind("fixed:", 0) != 0)
    throw ConfigError("vote_mode must be 'random' or 'fixed:<option>'");
}

namespace {

std::string kidModeName(KidMode m) {
  switch (m) {
    case KidMode::Token: return "token";
    case KidMode::SimulationPk: return "simulation-pk";
    case KidMode::PerfectTree: return "perfect-tree";
  }
  return "?";
}

KidMode kidModeFromName(const std::string& s) {
  if (s == "token") return KidMode::Token;
  if (s == "simulation-pk") return KidMode::SimulationPk;
  if (s == "perfect-tree") return KidMode::PerfectTree;
  throw ConfigError("unknown kid_mode: " + s);
}

void checkKeys(const json& j, const std::set<std::string>& allowed, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(std::string("unknown ") + where + " key: " + it.key());
}

}  // namespace

json ScenarioConfig::toJson() const {
  json j;
  j["n"] = n;
  j["k"] = k;
  j["B"] = kidBits;
  j["algebra"] = algebra.kind == AlgebraKind::Plurality ? "plurality" : "ranked";
  j["options"] = algebra.optionCount;
  j["splitting"] = algebra.splittingAllowed;
  j["kid_mode"] = kidModeName(kidMode);
  j["seed"] = seed;
  j["mode"] = strict ? "strict" : "degrade";
  j["repeats"] = repeats;
  json adv;
  adv["fraction"] = adversary.fraction;
  json behaviors = json::array();
  for (Behavior b : adversary.behaviors) behaviors.push_back(behaviorName(b));
  adv["behaviors"] = behaviors;
  adv["targeting"] = targetingName(adversary.targeting);
  j["adversary"] = adv;
  j["robust_accounting"] = robustAccounting;
  j["rsa_bits"] = rsaBits;
  j["retry_budget"] = retryBudget;
  j["vote_mode"] = voteMode;
  j["log_messages"] = logMessages;
  if (!forcedKids.empty()) j["forced_kids"] = forcedKids;
  return j;
}

ScenarioConfig ScenarioConfig::fromJson(const json& j) {
  static const std::set<std::string> allowed = {
      "n",       "k",        "B",        "algebra",           "options",
      "splitting", "kid_mode", "seed",   "mode",              "repeats",
      "adversary", "robust_accounting", "rsa_bits", "retry_budget", "vote_mode",
      "log_messages", "forced_kids"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  checkKeys(j, allowed, "config");
  ScenarioConfig c;
  try {
    if (j.contains("n")) c.n = j.at("n").get<uint32_t>();
    if (j.contains("k")) c.k = j.at("k").get<int>();
    if (j.contains("B")) c.kidBits = j.at("B").get<int>();
    if (j.contains("algebra")) {
      std::string a = j.at("algebra").get<std::string>();
      if (a == "plurality")
        c.algebra.kind = AlgebraKind::Plurality;
      else if (a == "ranked")
        c.algebra.kind = AlgebraKind::Ranked;
      else
        throw ConfigError("algebra must be 'plurality' or 'ranked'");
    }
    if (j.contains("options")) c.algebra.optionCount = j.at("options").get<int>();
    if (j.contains("splitting")) c.algebra.splittingAllowed = j.at("splitting").get<bool>();
    if (j.contains("kid_mode")) c.kidMode = kidModeFromName(j.at("kid_mode").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("mode")) {
      std::string m = j.at("mode").get<std::string>();
      if (m == "strict")
        c.strict = true;
      else if (m == "degrade")
        c.strict = false;
      else
        throw ConfigError("mode must be 'strict' or 'degrade'");
    }
    if (j.contains("repeats")) c.repeats = j.at("repeats").get<int>();
    if (j.contains("adversary")) {
      const json& adv = j.at("adversary");
      checkKeys(adv, {"fraction", "behaviors", "targeting"}, "adversary");
      if (adv.contains("fraction")) c.adversary.fraction = adv.at("fraction").get<double>();
      if (adv.contains("behaviors"))
        for (const auto& b : adv.at("behaviors"))
          c.adversary.behaviors.insert(behaviorFromName(b.get<std::string>()));
      if (adv.contains("targeting"))
        c.adversary.targeting = targetingFromName(adv.at("targeting").get<std::string>());
    }
    if (j.contains("robust_accounting")) c.robustAccounting = j.at("robust_accounting").get<bool>();
    if (j.contains("rsa_bits")) c.rsaBits = j.at("rsa_bits").get<int>();
    if (j.contains("retry_budget")) c.retryBudget = j.at("retry_budget").get<int>();
    if (j.contains("vote_mode")) c.voteMode = j.at("vote_mode").get<std::string>();
    if (j.contains("log_messages")) c.logMessages = j.at("log_messages").get<bool>();
    if (j.contains("forced_kids"))
      c.forcedKids = j.at("forced_kids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig ScenarioConfig::fromFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return fromJson(j);
}

void ScenarioConfig::applyOverride(const std::string& dottedKey, const std::string& value) {
  json j = toJson();
  // Navigate the dotted path; every segment must already exist.
  std::vector<std::string> parts;
  std::stringstream ss(dottedKey);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty override key");
  json* cur = &j;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur->contains(parts[i])) throw ConfigError("unknown override key: " + dottedKey);
    cur = &(*cur)[parts[i]];
  }
  const std::string& leaf = parts.back();
  if (!cur->contains(leaf)) throw ConfigError("unknown override key: " + dottedKey);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  const json& old = (*cur)[leaf];
  bool compatible = (old.is_number() && parsed.is_number()) ||
                    (old.is_boolean() && parsed.is_boolean()) ||
                    (old.is_string() && parsed.is_string()) ||
                    (old.is_array() && parsed.is_array());
  if (!compatible)
    throw ConfigError("override type mismatch for key: " + dottedKey);
  (*cur)[leaf] = parsed;
  *this = fromJson(j);
}

uint64_t runSeed(uint64_t master, int runIndex) {
  return deriveSeed(master, "run", uint64_t(runIndex));
}

// ---------------------------------------------------------------------------

void Transcript::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write transcript: " + path.string());
  out << json{{"type", "config"}, {"data", config}}.dump() << "\n";
  for (const PeerRecord& p : peers) {
    json j{{"type", "peer"},
           {"index", p.index},
           {"kid", p.kid},
           {"dishonest", p.dishonest},
           {"leaf", p.leafHash},
           {"root", p.rootHash},
           {"root_c", p.rootCounter},
           {"L", p.leakedInformation},
           {"R", p.receivedInformation},
           {"l", p.relativeLeak},
           {"r", p.relativeReceived},
           {"leaked_counters", p.leakedCounters},
           {"received_counters", p.receivedCounters},
           {"inbox", p.inbox},
           {"outbox", p.outbox},
           {"pulls", p.pulls},
           {"confirms", p.confirms},
           {"lookups", p.lookups},
           {"lookup_cycles", p.lookupCycles},
           {"denied_given", p.deniedGiven},
           {"overreach_denied", p.overreachDenied},
           {"security_events", p.securityEvents},
           {"compensations", p.compensations},
           {"conflicts", p.conflicts},
           {"detected", p.detected},
           {"completed", p.completed},
           {"flagged_incomplete", p.flaggedIncomplete},
           {"included", p.inclusionVerified}};
    out << j.dump() << "\n";
  }
  for (const auto& [hash, bytes] : witnesses)
    out << json{{"type", "container"}, {"hash", hash}, {"bytes", toHex(bytes)}}.dump() << "\n";
  for (const ProofRecord& p : proofs)
    out << json{{"type", "proof"}, {"culprit", p.culprit}, {"bytes", toHex(p.bytes)}}.dump()
        << "\n";
  for (const auto& [from, to] : messages)
    out << json{{"type", "msg"}, {"from", from}, {"to", to}}.dump() << "\n";
  out << json{{"type", "summary"},
              {"aborted", aborted},
              {"majority_root", majorityRoot},
              {"B", kidBits}}
             .dump()
      << "\n";
}

Transcript Transcript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read transcript: " + path.string());
  Transcript t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    std::string type = j.at("type").get<std::string>();
    if (type == "config") {
      t.config = j.at("data");
      if (t.config.contains("B")) t.kidBits = t.config.at("B").get<int>();
    } else if (type == "peer") {
      PeerRecord p;
      p.index = j.at("index").get<uint32_t>();
      p.kid = j.at("kid").get<std::string>();
      p.dishonest = j.at("dishonest").get<bool>();
      p.leafHash = j.at("leaf").get<std::string>();
      p.rootHash = j.at("root").get<std::string>();
      p.rootCounter = j.at("root_c").get<uint32_t>();
      p.leakedInformation = j.at("L").get<double>();
      p.receivedInformation = j.at("R").get<double>();
      p.relativeLeak = j.at("l").get<double>();
      p.relativeReceived = j.at("r").get<double>();
      p.leakedCounters = j.at("leaked_counters").get<std::vector<uint32_t>>();
      p.receivedCounters = j.at("received_counters").get<std::vector<uint32_t>>();
      p.inbox = j.at("inbox").get<uint64_t>();
      p.outbox = j.at("outbox").get<uint64_t>();
      p.pulls = j.at("pulls").get<uint64_t>();
      p.confirms = j.at("confirms").get<uint64_t>();
      p.lookups = j.at("lookups").get<uint64_t>();
      p.lookupCycles = j.at("lookup_cycles").get<uint64_t>();
      p.deniedGiven = j.at("denied_given").get<uint64_t>();
      p.overreachDenied = j.at("overreach_denied").get<uint64_t>();
      p.securityEvents = j.at("security_events").get<uint64_t>();
      p.compensations = j.at("compensations").get<uint64_t>();
      p.conflicts = j.at("conflicts").get<uint64_t>();
      p.detected = j.at("detected").get<std::vector<std::string>>();
      p.completed = j.at("completed").get<bool>();
      p.flaggedIncomplete = j.at("flagged_incomplete").get<bool>();
      p.inclusionVerified = j.at("included").get<bool>();
      t.peers.push_back(std::move(p));
    } else if (type == "container") {
      t.witnesses[j.at("hash").get<std::string>()] = fromHex(j.at("bytes").get<std::string>());
    } else if (type == "proof") {
      t.proofs.push_back({j.at("culprit").get<std::string>(),
                          fromHex(j.at("bytes").get<std::string>())});
    } else if (type == "msg") {
      t.messages.emplace_back(j.at("from").get<uint32_t>(), j.at("to").get<uint32_t>());
    } else if (type == "summary") {
      t.aborted = j.at("aborted").get<bool>();
      t.majorityRoot = j.at("majority_root").get<std::string>();
      if (j.contains("B")) t.kidBits = j.at("B").get<int>();
    }
  }
  return t;
}

WitnessMap Transcript::decodeWitnesses() const {
  WitnessMap out;
  for (const auto& [hash, bytes] : witnesses) {
    try {
      AggregateContainer c = AggregateContainer::decode(bytes, kidBits);
      out.emplace(c.h, std::move(c));
    } catch (const std::exception&) {
      // Undecodable witness: its hash will surface as a missing link.
    }
  }
  return out;
}

Rational exactInverseSum(const std::vector<uint32_t>& counters) {
  Rational sum;
  for (uint32_t c : counters) sum = sum + Rational(1, int64_t(c));
  return sum;
}

// ---------------------------------------------------------------------------

Simulator::Simulator(ScenarioConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Simulator::~Simulator() = default;

namespace {

std::vector<int> unrankPermutation(uint64_t index, int d) {
  std::vector<int> pool(d);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<uint64_t> fact(size_t(d), 1);
  for (int i = 1; i < d; ++i) fact[size_t(i)] = fact[size_t(i) - 1] * uint64_t(i);
  std::vector<int> out;
  for (int i = d - 1; i >= 0; --i) {
    uint64_t f = fact[size_t(i)];
    size_t pos = size_t(index / f);
    index %= f;
    out.push_back(pool[pos]);
    pool.erase(pool.begin() + long(pos));
  }
  return out;
}

}  // namespace

void Simulator::setupIdentities() {
  Rng adminRng(deriveSeed(cfg_.seed, "admin"));
  admin_ = std::make_unique<Administrator>(cfg_.rsaBits, adminRng);
  const AdminPublicKey& pub = admin_->publicKey();

  std::set<Digest20> seen;
  std::vector<KeyPair> keys;
  std::vector<Credentials> creds;
  for (uint32_t i = 0; i < cfg_.n; ++i) {
    Rng keyRng(deriveSeed(cfg_.seed, "keys", i));
    KeyPair kp = KeyPair::generate(keyRng);
    admin_->authenticate(i);
    BlindingState blinding = drawBlinding(kp.publicKey(), pub, keyRng);
    auto res = admin_->signBlinded(blinding.blinded, i);
    if (res.status != Administrator::SignStatus::Issued)
      throw std::runtime_error("administration failed");
    Bytes token = unblindAndVerify(res.signature, blinding.factor, kp.publicKey(), pub);

    Kid kid;
    if (!cfg_.forcedKids.empty())
      kid = Kid::fromBits(cfg_.forcedKids[i]);
    else if (cfg_.kidMode == KidMode::PerfectTree)
      kid = Kid::fromInteger(i, cfg_.kidBits);
    else
      kid = deriveKid(token, kp.publicKey(), cfg_.kidMode, cfg_.kidBits);
    if (!seen.insert(kid.bytes()).second)
      throw std::runtime_error("kid collision; raise B or change the seed");
    kids_.push_back(kid);
    keys.push_back(std::move(kp));
    creds.push_back(Credentials{kid, keys.back().publicKey(), token});
  }

  // Initial aggregates.
  for (uint32_t i = 0; i < cfg_.n; ++i) {
    Rng voteRng(deriveSeed(cfg_.seed, "votes", i));
    Aggregate vote;
    if (cfg_.voteMode.rfind("fixed:", 0) == 0) {
      uint64_t idx = std::stoull(cfg_.voteMode.substr(6));
      if (cfg_.algebra.kind == AlgebraKind::Plurality)
        vote = encodePlurality(int(idx), cfg_.algebra);
      else
        vote = encodeRanked(unrankPermutation(idx, cfg_.algebra.optionCount), cfg_.algebra);
    } else if (cfg_.algebra.kind == AlgebraKind::Ranked) {
      std::vector<int> perm(size_t(cfg_.algebra.optionCount));
      std::iota(perm.begin(), perm.end(), 0);
      for (size_t m = perm.size(); m > 1; --m) std::swap(perm[m - 1], perm[voteRng.below(m)]);
      vote = encodeRanked(perm, cfg_.algebra);
    } else if (cfg_.algebra.splittingAllowed && voteRng.chance(0.25)) {
      size_t a = voteRng.below(cfg_.algebra.dimension());
      size_t b = voteRng.below(cfg_.algebra.dimension());
      while (b == a) b = voteRng.below(cfg_.algebra.dimension());
      vote = zeroAggregate(cfg_.algebra);
      vote.payload[a] = Rational(1, 2);
      vote.payload[b] = Rational(1, 2);
    } else {
      vote = encodePlurality(int(voteRng.below(uint64_t(cfg_.algebra.optionCount))), cfg_.algebra);
    }
    votes_.push_back(std::move(vote));
  }

  Rng advRng(deriveSeed(cfg_.seed, "adversary"));
  dishonest_ = seedDishonestSet(cfg_.n, cfg_.adversary, advRng, kids_);

  net_ = std::make_unique<Transport>(loop_);
  if (cfg_.logMessages)
    net_->setLogger([this](bool isRequest, Address from, Address to) {
      if (isRequest) messageLog_.emplace_back(from, to);
    });

  for (uint32_t i = 0; i < cfg_.n; ++i) {
    PeerConfig pc;
    pc.algebra = cfg_.algebra;
    pc.kidMode = cfg_.kidMode;
    pc.retryBudget = cfg_.retryBudget;
    pc.degrade = !cfg_.strict;
    pc.robustAccounting = cfg_.robustAccounting;
    if (dishonest_.count(i)) pc.behaviors = cfg_.adversary.behaviors;
    peers_.push_back(std::make_unique<Peer>(loop_, *net_, admin_->publicKey(), pc, cfg_.k,
                                            std::move(keys[i]), creds[i], votes_[i],
                                            deriveSeed(cfg_.seed, "peer", i)));
  }
}

void Simulator::driveJoin(size_t i) {
  std::optional<Contact> bootstrap;
  if (i > 0) bootstrap = peers_[i - 1]->selfContact();
  peers_[i]->runJoin(bootstrap, [this, i] {
    if (i + 1 < peers_.size())
      driveJoin(i + 1);
    else
      lifecycleDone_++;
  });
}

void Simulator::driveRefresh(size_t i) {
  peers_[i]->runRefresh([this, i] {
    if (i + 1 < peers_.size())
      driveRefresh(i + 1);
    else
      lifecycleDone_++;
  });
}

RunResult Simulator::run() {
  if (ran_) throw std::logic_error("simulator runs once");
  ran_ = true;
  setupIdentities();

  driveJoin(0);
  loop_.run();
  driveRefresh(0);
  loop_.run();
  for (auto& p : peers_) p->freezeRouting();

  for (size_t i = 0; i < peers_.size(); ++i) {
    peers_[i]->runAggregation([this](bool completed) {
      if (completed)
        completedPeers_++;
      else if (cfg_.strict) {
        aborted_ = true;
        loop_.stop();
      }
    });
  }
  loop_.run();

  RunResult out;
  collect(out);
  return out;
}

Aggregate Simulator::foldVotes() const {
  Aggregate acc = zeroAggregate(cfg_.algebra);
  for (const Aggregate& v : votes_) acc = combine(acc, v);
  return acc;
}

void Simulator::collect(RunResult& out) {
  MetricsReport& rep = out.report;
  Transcript& tr = out.transcript;
  rep.n = cfg_.n;
  rep.seed = cfg_.seed;
  rep.aborted = aborted_;
  rep.completedPeers = completedPeers_;
  tr.config = cfg_.toJson();
  tr.kidBits = cfg_.kidBits;
  tr.aborted = aborted_;
  tr.messages = messageLog_;

  WitnessMap witnesses;
  for (const auto& p : peers_)
    for (const Peer::HeldContainer& held : p->heldContainers())
      witnesses.emplace(held.container.h, held.container);

  for (const auto& p : peers_) {
    if (const ConfirmedContainer* root = p->root()) {
      rep.rootTally[toHex(root->container.h)]++;
    }
  }
  int best = -1;
  for (const auto& [hash, count] : rep.rootTally)
    if (count > best) {
      best = count;
      rep.majorityRoot = hash;
    }
  Digest32 majorityDigest{};
  if (!rep.majorityRoot.empty()) {
    Bytes raw = fromHex(rep.majorityRoot);
    std::copy(raw.begin(), raw.end(), majorityDigest.begin());
    auto it = witnesses.find(majorityDigest);
    if (it != witnesses.end()) {
      rep.outcome = outcome(it->second.a, cfg_.algebra);
      rep.outcomeValid = true;
    }
  }
  tr.majorityRoot = rep.majorityRoot;

  std::set<std::string> culprits;
  uint64_t totalLookups = 0, totalCycles = 0, totalPulls = 0;

  for (uint32_t i = 0; i < peers_.size(); ++i) {
    const Peer& p = *peers_[i];
    const PeerMetrics& m = p.metrics();
    PeerRecord rec;
    rec.index = i;
    rec.kid = p.kid().hex();
    rec.dishonest = dishonest_.count(i) > 0;
    if (const AggregateContainer* leaf = p.leaf()) rec.leafHash = toHex(leaf->h);
    if (const ConfirmedContainer* root = p.root()) {
      rec.rootHash = toHex(root->container.h);
      rec.rootCounter = root->container.c;
    }
    rec.leakedInformation = m.leaked(cfg_.robustAccounting);
    rec.receivedInformation = m.received(cfg_.robustAccounting);
    rec.relativeLeak = cfg_.n > 1 ? rec.leakedInformation / double(cfg_.n - 1) : 0.0;
    rec.relativeReceived = cfg_.n > 1 ? rec.receivedInformation / double(cfg_.n - 1) : 0.0;
    rec.leakedCounters = m.leakedCounters;
    rec.receivedCounters = m.receivedCounters;
    rec.inbox = m.inbox;
    rec.outbox = m.outbox;
    rec.pulls = m.pullRequestsSent;
    rec.confirms = m.confirmRequestsSent;
    rec.lookups = m.lookupsStarted;
    rec.lookupCycles = m.lookupCycles;
    rec.deniedGiven = m.deniedRequestsGiven;
    rec.overreachDenied = m.overreachDenied;
    rec.securityEvents = m.securityEvents;
    rec.compensations = m.compensationsAttached;
    rec.conflicts = m.conflictsFlagged;
    rec.completed = p.phase() == Phase::Done;
    rec.flaggedIncomplete = p.flaggedIncomplete();
    for (const auto& [kidBytes, proof] : p.knownProofs()) {
      rec.detected.push_back(toHex(std::span<const uint8_t>(kidBytes)));
      culprits.insert(rec.detected.back());
      std::string key = rec.detected.back();
      bool have = false;
      for (const ProofRecord& pr : tr.proofs)
        if (pr.culprit == key) have = true;
      if (!have) tr.proofs.push_back({key, proof.encode()});
    }
    if (!rep.majorityRoot.empty() && p.leaf()) {
      ChainReport chain = p.verifyRootInclusion(witnesses, majorityDigest);
      rec.inclusionVerified = chain.result == ChainResult::Verified;
    }

    rep.leaked.push_back(rec.leakedInformation);
    rep.received.push_back(rec.receivedInformation);
    rep.relLeaked.push_back(rec.relativeLeak);
    rep.relReceived.push_back(rec.relativeReceived);
    rep.inbox.push_back(m.inbox);
    rep.outbox.push_back(m.outbox);
    rep.anyFlaggedIncomplete = rep.anyFlaggedIncomplete || rec.flaggedIncomplete;
    totalLookups += m.lookupsStarted;
    totalCycles += m.lookupCycles;
    totalPulls += m.pullRequestsSent;
    tr.peers.push_back(std::move(rec));
  }

  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  auto stddev = [&](const std::vector<double>& v, double mu) {
    if (v.size() < 2) return 0.0;
    double s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / double(v.size()));
  };
  rep.meanLeaked = mean(rep.leaked);
  rep.meanReceived = mean(rep.received);
  rep.meanRelLeaked = mean(rep.relLeaked);
  rep.meanRelReceived = mean(rep.relReceived);
  rep.stddevRelLeaked = stddev(rep.relLeaked, rep.meanRelLeaked);
  rep.stddevRelReceived = stddev(rep.relReceived, rep.meanRelReceived);
  rep.meanLookupCycles = totalLookups ? double(totalCycles) / double(totalLookups) : 0.0;
  rep.meanContainerRequests = double(totalPulls) / double(cfg_.n);
  rep.culprits.assign(culprits.begin(), culprits.end());

  for (const auto& [hash, container] : witnesses)
    tr.witnesses[toHex(hash)] = container.bodyBytes();
}

// ---------------------------------------------------------------------------

std::vector<RunResult> runRepeats(const ScenarioConfig& base, int repeats, int threads) {
  std::vector<std::optional<RunResult>> slots(static_cast<size_t>(repeats));
  unsigned hw = std::thread::hardware_concurrency();
  int workers = threads > 0 ? threads : int(std::min(8u, std::max(1u, hw)));
  workers = std::min(workers, repeats);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      int r = next.fetch_add(1);
      if (r >= repeats) return;
      ScenarioConfig c = base;
      c.seed = runSeed(base.seed, r);
      Simulator sim(c);
      slots[size_t(r)] = sim.run();
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  std::vector<RunResult> out;
  out.reserve(size_t(repeats));
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<ComplexityRow> complexityCurve(const std::vector<size_t>& ns,
                                           const ScenarioConfig& base, int threads) {
  std::vector<ComplexityRow> rows;
  for (size_t n : ns) {
    ScenarioConfig c = base;
    c.n = uint32_t(n);
    std::vector<RunResult> runs = runRepeats(c, base.repeats, threads);
    double mu = 0;
    for (const RunResult& r : runs) mu += r.report.meanContainerRequests;
    mu /= double(runs.size());
    double var = 0;
    for (const RunResult& r : runs) {
      double d = r.report.meanContainerRequests - mu;
      var += d * d;
    }
    var = runs.size() > 1 ? var / double(runs.size()) : 0.0;
    rows.push_back({n, mu, std::sqrt(var)});
  }
  return rows;
}

double logFitR2(const std::vector<ComplexityRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double m = double(rows.size());
  for (const ComplexityRow& r : rows) {
    double x = std::log2(double(r.n));
    sx += x;
    sy += r.mean;
    sxx += x * x;
    sxy += x * r.mean;
  }
  double denom = m * sxx - sx * sx;
  if (denom == 0) return 0;
  double b = (m * sxy - sx * sy) / denom;
  double a = (sy - b * sx) / m;
  double ssRes = 0, ssTot = 0, muY = sy / m;
  for (const ComplexityRow& r : rows) {
    double x = std::log2(double(r.n));
    double e = r.mean - (a + b * x);
    ssRes += e * e;
    ssTot += (r.mean - muY) * (r.mean - muY);
  }
  if (ssTot == 0) return 1.0;
  return 1.0 - ssRes / ssTot;
}

// ---------------------------------------------------------------------------

namespace {

std::string runPrefix(uint32_t n, int runIndex) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%u-%02d", n, runIndex);
  return buf;
}

void writeColumn(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path);
  for (double v : values) out << v << "\n";
}

void writeColumn(const std::filesystem::path& path, const std::vector<uint64_t>& values) {
  std::ofstream out(path);
  for (uint64_t v : values) out << v << "\n";
}

}  // namespace

std::string summaryText(const MetricsReport& rep, const ScenarioConfig& cfg) {
  std::ostringstream out;
  out << "n=" << rep.n << "\n";
  out << "seed=" << rep.seed << "\n";
  out << "mode=" << (cfg.strict ? "strict" : "degrade") << "\n";
  out << "algebra=" << (cfg.algebra.kind == AlgebraKind::Plurality ? "plurality" : "ranked")
      << "\n";
  out << "options=" << cfg.algebra.optionCount << "\n";
  out << "robustAccounting=" << (cfg.robustAccounting ? "true" : "false") << "\n";
  out << "aborted=" << (rep.aborted ? "true" : "false") << "\n";
  out << "completedPeers=" << rep.completedPeers << "\n";
  out << "meanLeaked=" << rep.meanLeaked << "\n";
  out << "meanReceived=" << rep.meanReceived << "\n";
  out << "meanRelLeakedPercent=" << rep.meanRelLeaked * 100.0 << "\n";
  out << "meanRelReceivedPercent=" << rep.meanRelReceived * 100.0 << "\n";
  out << "stddevRelLeakedPercent=" << rep.stddevRelLeaked * 100.0 << "\n";
  out << "stddevRelReceivedPercent=" << rep.stddevRelReceived * 100.0 << "\n";
  out << "meanLookupCycles=" << rep.meanLookupCycles << "\n";
  out << "meanContainerRequests=" << rep.meanContainerRequests << "\n";
  out << "majorityRoot=" << rep.majorityRoot << "\n";
  out << "rootHashCount=" << rep.rootTally.size() << "\n";
  if (rep.outcomeValid) {
    out << "outcomeWinner=" << rep.outcome.winner << "\n";
    out << "outcomeTied=" << (rep.outcome.tied ? "true" : "false") << "\n";
    std::ostringstream tallies;
    for (size_t i = 0; i < rep.outcome.tallies.size(); ++i) {
      if (i) tallies << ",";
      tallies << rep.outcome.tallies[i].str();
    }
    out << "outcomeTallies=" << tallies.str() << "\n";
  }
  out << "flaggedIncomplete=" << (rep.anyFlaggedIncomplete ? "true" : "false") << "\n";
  std::ostringstream cs;
  for (size_t i = 0; i < rep.culprits.size(); ++i) {
    if (i) cs << ",";
    cs << rep.culprits[i];
  }
  out << "culprits=" << cs.str() << "\n";
  return out.str();
}

void writeRunArtifacts(const std::filesystem::path& outDir, const RunResult& result,
                       int runIndex) {
  std::filesystem::create_directories(outDir);
  const MetricsReport& rep = result.report;
  std::string prefix = runPrefix(rep.n, runIndex);
  writeColumn(outDir / (prefix + "-leakedInformation.csv"), rep.leaked);
  writeColumn(outDir / (prefix + "-receivedInformation.csv"), rep.received);
  writeColumn(outDir / (prefix + "-inbox.csv"), rep.inbox);
  writeColumn(outDir / (prefix + "-outbox.csv"), rep.outbox);
  ScenarioConfig cfg = ScenarioConfig::fromJson(result.transcript.config);
  std::ofstream summary(outDir / (prefix + "-summary.txt"));
  summary << summaryText(rep, cfg);
  result.transcript.write(outDir / (prefix + "-transcript.jsonl"));
}

void writeComplexityCsv(const std::filesystem::path& outDir,
                        const std::vector<ComplexityRow>& rows) {
  std::filesystem::create_directories(outDir);
  std::ofstream out(outDir / "complexity.csv");
  for (const ComplexityRow& r : rows)
    out << r.n << "," << r.mean << "," << r.stddev << "\n";
}

}  // namespace advokat
