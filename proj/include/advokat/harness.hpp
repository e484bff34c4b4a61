#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "advokat/adversary.hpp"
#include "advokat/algebra.hpp"
#include "advokat/protocol.hpp"

namespace advokat {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Scenario description; serializes to/from the JSON config files consumed
/// by the CLI. Unknown keys are rejected, overrides are type-checked.
struct ScenarioConfig {
  uint32_t n = 1;
  int k = 20;
  int kidBits = 160;  // key "B"
  AlgebraSpec algebra{AlgebraKind::Plurality, 3, false};
  KidMode kidMode = KidMode::SimulationPk;
  AdversaryConfig adversary;
  uint64_t seed = 1;
  bool strict = false;  // key "mode": "strict" | "degrade"
  int repeats = 10;
  bool robustAccounting = false;
  int rsaBits = 2048;
  int retryBudget = 3;
  std::string voteMode = "random";  // "random" or "fixed:<option>"
  bool logMessages = false;
  std::vector<std::string> forcedKids;  // explicit kid bit strings (tests)

  void validate() const;
  nlohmann::json toJson() const;
  static ScenarioConfig fromJson(const nlohmann::json& j);
  static ScenarioConfig fromFile(const std::filesystem::path& path);
  void applyOverride(const std::string& dottedKey, const std::string& value);
};

/// Seed for repeat r of a scenario, derived from the master seed.
uint64_t runSeed(uint64_t master, int runIndex);

// ---------------------------------------------------------------------------

struct PeerRecord {
  uint32_t index = 0;
  std::string kid;
  bool dishonest = false;
  std::string leafHash;
  std::string rootHash;
  uint32_t rootCounter = 0;
  double leakedInformation = 0;    // L_i
  double receivedInformation = 0;  // R_i
  double relativeLeak = 0;         // l_i
  double relativeReceived = 0;     // r_i
  std::vector<uint32_t> leakedCounters;
  std::vector<uint32_t> receivedCounters;
  uint64_t inbox = 0;
  uint64_t outbox = 0;
  uint64_t pulls = 0;
  uint64_t confirms = 0;
  uint64_t lookups = 0;
  uint64_t lookupCycles = 0;
  uint64_t deniedGiven = 0;
  uint64_t overreachDenied = 0;
  uint64_t securityEvents = 0;
  uint64_t compensations = 0;
  uint64_t conflicts = 0;
  std::vector<std::string> detected;
  bool completed = false;
  bool flaggedIncomplete = false;
  bool inclusionVerified = false;
};

struct ProofRecord {
  std::string culprit;  // kid hex
  Bytes bytes;
};

struct Transcript {
  nlohmann::json config;
  int kidBits = 160;
  std::vector<PeerRecord> peers;
  std::map<std::string, Bytes> witnesses;  // hash hex -> container body bytes
  std::vector<ProofRecord> proofs;
  std::vector<std::pair<uint32_t, uint32_t>> messages;  // (from, to), requests only
  std::string majorityRoot;
  bool aborted = false;

  void write(const std::filesystem::path& path) const;
  static Transcript load(const std::filesystem::path& path);

  /// Witness map for chain verification; undecodable entries are dropped
  /// (their hashes then show up as missing links).
  WitnessMap decodeWitnesses() const;
};

struct MetricsReport {
  uint32_t n = 0;
  uint64_t seed = 0;
  std::vector<double> leaked, received, relLeaked, relReceived;
  double meanLeaked = 0, meanReceived = 0;
  double meanRelLeaked = 0, meanRelReceived = 0;
  double stddevRelLeaked = 0, stddevRelReceived = 0;
  std::vector<uint64_t> inbox, outbox;
  double meanLookupCycles = 0;
  double meanContainerRequests = 0;
  std::map<std::string, int> rootTally;
  std::string majorityRoot;
  bool outcomeValid = false;
  OutcomeReport outcome;
  std::vector<std::string> culprits;
  bool aborted = false;
  uint32_t completedPeers = 0;
  bool anyFlaggedIncomplete = false;
};

struct RunResult {
  MetricsReport report;
  Transcript transcript;
};

/// Exact rational sum of 1/c over a counter list (balanced-tree checks).
Rational exactInverseSum(const std::vector<uint32_t>& counters);

// ---------------------------------------------------------------------------

/// One deterministic discrete-event run: administration, sequential joins
/// via the tracker, table refresh, freeze, epoch-wise aggregation, metrics.
class Simulator {
 public:
  explicit Simulator(ScenarioConfig cfg);
  ~Simulator();

  RunResult run();

  // Post-run introspection (tests and audits).
  const std::vector<std::unique_ptr<Peer>>& peers() const { return peers_; }
  const std::vector<Kid>& kids() const { return kids_; }
  const std::vector<Aggregate>& votes() const { return votes_; }
  const std::set<size_t>& dishonestSet() const { return dishonest_; }
  const AdminPublicKey& adminPublicKey() const { return admin_->publicKey(); }
  Transport& transport() { return *net_; }

  /// Ground-truth fold of all initial aggregates.
  Aggregate foldVotes() const;

 private:
  void setupIdentities();
  void driveJoin(size_t i);
  void driveRefresh(size_t i);
  void collect(RunResult& out);

  ScenarioConfig cfg_;
  EventLoop loop_;
  std::unique_ptr<Transport> net_;
  std::unique_ptr<Administrator> admin_;
  std::vector<std::unique_ptr<Peer>> peers_;
  std::vector<Kid> kids_;
  std::vector<Aggregate> votes_;
  std::set<size_t> dishonest_;
  std::vector<std::pair<uint32_t, uint32_t>> messageLog_;
  size_t lifecycleDone_ = 0;
  uint32_t completedPeers_ = 0;
  bool aborted_ = false;
  bool ran_ = false;
};

/// Repeated runs of one scenario (seeds derived per repeat), optionally
/// fanned out over worker threads. Results come back in repeat order.
std::vector<RunResult> runRepeats(const ScenarioConfig& base, int repeats, int threads = 0);

struct ComplexityRow {
  size_t n = 0;
  double mean = 0;
  double stddev = 0;
};

/// Mean container requests per peer for each n, `repeats` seeds each.
std::vector<ComplexityRow> complexityCurve(const std::vector<size_t>& ns,
                                           const ScenarioConfig& base, int threads = 0);

/// Least-squares fit quality of mean = a + b*log2(n).
double logFitR2(const std::vector<ComplexityRow>& rows);

// ---------------------------------------------------------------------------
// File exports: <n>-<run>-leakedInformation.csv etc. (one value per line),
// a key=value run summary, the transcript, and complexity.csv.

void writeRunArtifacts(const std::filesystem::path& outDir, const RunResult& result,
                       int runIndex);
void writeComplexityCsv(const std::filesystem::path& outDir,
                        const std::vector<ComplexityRow>& rows);
std::string summaryText(const MetricsReport& report, const ScenarioConfig& cfg);

}  // namespace advokat
