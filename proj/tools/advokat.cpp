#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "advokat/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitAborted = 3;
constexpr int kExitIncomplete = 4;

using namespace advokat;

ScenarioConfig loadConfig(const std::string& path, const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed, std::optional<int> repeats) {
  ScenarioConfig cfg = ScenarioConfig::fromFile(path);
  for (const std::string& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key=value: " + kv);
    cfg.applyOverride(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) {
    cfg.seed = *seed;
    cfg.validate();
  }
  if (repeats) {
    cfg.repeats = *repeats;
    cfg.validate();
  }
  return cfg;
}

int cmdRun(const std::string& configPath, const std::string& outDir,
           const std::vector<std::string>& overrides, std::optional<uint64_t> seed,
           std::optional<int> repeats, int threads) {
  ScenarioConfig cfg = loadConfig(configPath, overrides, seed, repeats);
  std::vector<RunResult> runs = runRepeats(cfg, cfg.repeats, threads);
  bool anyAborted = false;
  for (int r = 0; r < int(runs.size()); ++r) {
    writeRunArtifacts(outDir, runs[size_t(r)], r + 1);
    anyAborted = anyAborted || runs[size_t(r)].report.aborted;
    std::cout << "run " << (r + 1) << ": seed=" << runs[size_t(r)].report.seed
              << " meanRelLeaked=" << runs[size_t(r)].report.meanRelLeaked * 100.0 << "%"
              << (runs[size_t(r)].report.aborted ? " ABORTED" : "") << "\n";
  }
  if (anyAborted) {
    std::cerr << "aborted run in strict mode\n";
    return kExitAborted;
  }
  return kExitOk;
}

int cmdSweep(const std::string& configPath, const std::string& outDir,
             const std::vector<std::string>& overrides, std::vector<size_t> ns,
             std::optional<uint64_t> seed, std::optional<int> repeats, int threads) {
  if (ns.empty()) throw ConfigError("sweep needs at least one n");
  ScenarioConfig cfg = loadConfig(configPath, overrides, seed, repeats);
  std::vector<ComplexityRow> rows = complexityCurve(ns, cfg, threads);
  writeComplexityCsv(outDir, rows);
  for (const ComplexityRow& r : rows)
    std::cout << r.n << "," << r.mean << "," << r.stddev << "\n";
  std::cout << "log2 fit R^2 = " << logFitR2(rows) << "\n";
  return kExitOk;
}

int cmdVerify(const std::string& transcriptPath, int peerIndex) {
  Transcript t = Transcript::load(transcriptPath);
  if (peerIndex < 0 || size_t(peerIndex) >= t.peers.size()) {
    std::cerr << "peer index out of range (transcript has " << t.peers.size() << " peers)\n";
    return kExitBadConfig;
  }
  const PeerRecord& peer = t.peers[size_t(peerIndex)];
  if (peer.leafHash.empty()) {
    std::cerr << "peer has no leaf container recorded\n";
    return kExitIncomplete;
  }

  std::map<std::string, int> tally;
  for (const PeerRecord& p : t.peers)
    if (!p.rootHash.empty()) tally[p.rootHash]++;
  std::string majority;
  int best = -1;
  for (const auto& [hash, count] : tally)
    if (count > best) {
      best = count;
      majority = hash;
    }
  if (majority.empty()) {
    std::cerr << "no root hash in transcript\n";
    return kExitIncomplete;
  }

  WitnessMap witnesses = t.decodeWitnesses();
  auto toDigest = [](const std::string& hex) {
    Digest32 d{};
    Bytes raw = fromHex(hex);
    std::copy(raw.begin(), raw.end(), d.begin());
    return d;
  };
  Digest32 rootDigest = toDigest(majority);
  Digest32 leafDigest = toDigest(peer.leafHash);
  auto rootIt = witnesses.find(rootDigest);
  if (rootIt == witnesses.end()) {
    std::cerr << "missing witness for majority root " << majority << "\n";
    return kExitIncomplete;
  }
  ChainReport report = verifyChain(rootIt->second, witnesses, leafDigest);
  switch (report.result) {
    case ChainResult::Verified:
      std::cout << "verified: peer " << peerIndex << " leaf " << peer.leafHash
                << " is included in root " << majority << " (" << best << "/" << t.peers.size()
                << " peers)\n";
      return kExitOk;
    case ChainResult::Incomplete:
      std::cerr << "incomplete: missing witnesses:\n";
      for (const Digest32& h : report.missing) std::cerr << "  " << toHex(h) << "\n";
      return kExitIncomplete;
    case ChainResult::Failed:
      std::cerr << "verification failed";
      if (!report.corrupt.empty()) {
        std::cerr << "; corrupt witnesses:";
        for (const Digest32& h : report.corrupt) std::cerr << " " << toHex(h);
      }
      std::cerr << "\n";
      return kExitVerifyFailed;
  }
  return kExitVerifyFailed;
}

int cmdReport(const std::string& transcriptPath) {
  Transcript t = Transcript::load(transcriptPath);
  ScenarioConfig cfg = ScenarioConfig::fromJson(t.config);
  MetricsReport rep;
  rep.n = uint32_t(t.peers.size());
  rep.seed = cfg.seed;
  rep.aborted = t.aborted;
  rep.majorityRoot = t.majorityRoot;
  std::set<std::string> culprits;
  uint64_t lookups = 0, cycles = 0, pulls = 0;
  for (const PeerRecord& p : t.peers) {
    rep.leaked.push_back(p.leakedInformation);
    rep.received.push_back(p.receivedInformation);
    rep.relLeaked.push_back(p.relativeLeak);
    rep.relReceived.push_back(p.relativeReceived);
    rep.inbox.push_back(p.inbox);
    rep.outbox.push_back(p.outbox);
    if (!p.rootHash.empty()) rep.rootTally[p.rootHash]++;
    if (p.completed) rep.completedPeers++;
    rep.anyFlaggedIncomplete = rep.anyFlaggedIncomplete || p.flaggedIncomplete;
    for (const std::string& c : p.detected) culprits.insert(c);
    lookups += p.lookups;
    cycles += p.lookupCycles;
    pulls += p.pulls;
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
  };
  auto sd = [](const std::vector<double>& v, double mu) {
    if (v.size() < 2) return 0.0;
    double s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / double(v.size()));
  };
  rep.meanLeaked = mean(rep.leaked);
  rep.meanReceived = mean(rep.received);
  rep.meanRelLeaked = mean(rep.relLeaked);
  rep.meanRelReceived = mean(rep.relReceived);
  rep.stddevRelLeaked = sd(rep.relLeaked, rep.meanRelLeaked);
  rep.stddevRelReceived = sd(rep.relReceived, rep.meanRelReceived);
  rep.meanLookupCycles = lookups ? double(cycles) / double(lookups) : 0.0;
  rep.meanContainerRequests = rep.n ? double(pulls) / double(rep.n) : 0.0;
  rep.culprits.assign(culprits.begin(), culprits.end());
  if (!t.majorityRoot.empty()) {
    WitnessMap witnesses = t.decodeWitnesses();
    Digest32 d{};
    Bytes raw = fromHex(t.majorityRoot);
    std::copy(raw.begin(), raw.end(), d.begin());
    auto it = witnesses.find(d);
    if (it != witnesses.end()) {
      rep.outcome = outcome(it->second.a, cfg.algebra);
      rep.outcomeValid = true;
    }
  }
  std::cout << summaryText(rep, cfg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"advokat: confidential tree aggregation over a Kademlia overlay"};
  app.require_subcommand(1);

  std::string configPath, outDir = "out", transcriptPath;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::optional<int> repeats;
  int threads = 0;
  int peerIndex = -1;
  std::string nsSpec = "16,64,256,1024";

  auto* run = app.add_subcommand("run", "run a scenario and write CSVs + transcript");
  run->add_option("--config", configPath, "scenario config (JSON)")->required();
  run->add_option("--out", outDir, "output directory");
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--repeats", repeats, "override the repeat count");
  run->add_option("--threads", threads, "worker threads (0 = auto)");
  run->add_option("overrides", overrides, "config overrides, dotted key=value");

  auto* sweep = app.add_subcommand("sweep", "complexity sweep over peer counts");
  sweep->add_option("--config", configPath, "scenario config (JSON)")->required();
  sweep->add_option("--ns", nsSpec, "comma-separated peer counts");
  sweep->add_option("--out", outDir, "output directory");
  sweep->add_option("--seed", seed, "override the master seed");
  sweep->add_option("--repeats", repeats, "override the repeat count");
  sweep->add_option("--threads", threads, "worker threads (0 = auto)");
  sweep->add_option("overrides", overrides, "config overrides, dotted key=value");

  auto* verify = app.add_subcommand("verify", "verify a peer's chain inclusion in a transcript");
  verify->add_option("--transcript", transcriptPath, "transcript file (jsonl)")->required();
  verify->add_option("--peer", peerIndex, "peer index")->required();

  auto* report = app.add_subcommand("report", "print the key=value summary of a transcript");
  report->add_option("--transcript", transcriptPath, "transcript file (jsonl)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitBadConfig;
  }

  try {
    if (run->parsed()) {
      std::vector<size_t> unused;
      return cmdRun(configPath, outDir, overrides, seed, repeats, threads);
    }
    if (sweep->parsed()) {
      std::vector<size_t> ns;
      std::stringstream ss(nsSpec);
      for (std::string part; std::getline(ss, part, ',');)
        if (!part.empty()) ns.push_back(std::stoull(part));
      return cmdSweep(configPath, outDir, overrides, ns, seed, repeats, threads);
    }
    if (verify->parsed()) return cmdVerify(transcriptPath, peerIndex);
    if (report->parsed()) return cmdReport(transcriptPath);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadConfig;
  }
  return kExitBadConfig;
}
