#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe {

class ScoreCache;

/// Summed natural-log probability of a continuation and its token count.
struct LogProbScore {
  double logprob_sum = 0.0;
  int token_count = 1;

  bool operator==(const LogProbScore&) const = default;
};

struct ScoreRequest {
  std::string prefix;
  std::string continuation;
  std::string model_id;

  bool operator==(const ScoreRequest&) const = default;
};

/// Scores continuations given a prefix. Implementations must be safe to call
/// from several threads at once.
class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;

  virtual LogProbScore score(const ScoreRequest& request) = 0;

  /// Identifies the scoring function; part of every cache key.
  virtual std::string version() const = 0;

  /// False when scores are not log-probabilities of a normalized model.
  virtual bool proper_probabilities() const { return true; }
  virtual bool remote() const { return false; }

  std::uint64_t calls() const { return calls_.load(); }

 protected:
  void count_call() { calls_.fetch_add(1); }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

/// Deterministic pseudo-scores derived from a keyed digest of the request.
/// Each whitespace-separated word of the continuation is one token.
class MockBackend : public ScoringBackend {
 public:
  explicit MockBackend(std::uint64_t seed = 42, std::set<std::string> models = {"mock-lm"});

  LogProbScore score(const ScoreRequest& request) override;
  std::string version() const override;
  bool proper_probabilities() const override { return true; }

 private:
  std::uint64_t seed_;
  std::set<std::string> models_;
};

/// Lookup table keyed on (sha256(prefix), sha256(continuation)), bound to one
/// model id. File rows: prefix_digest,continuation_digest,logprob_sum,token_count.
class TableBackend : public ScoringBackend {
 public:
  TableBackend(std::string model_id, std::map<std::pair<std::string, std::string>, LogProbScore> entries);

  static std::unique_ptr<TableBackend> read(const std::filesystem::path& path, std::string model_id);

  struct Entry {
    std::string prefix;
    std::string continuation;
    LogProbScore score;
  };
  static void write(const std::filesystem::path& path, std::span<const Entry> entries);

  LogProbScore score(const ScoreRequest& request) override;
  std::string version() const override;
  bool proper_probabilities() const override { return false; }

  std::size_t size() const { return entries_.size(); }

 private:
  std::string model_id_;
  std::map<std::pair<std::string, std::string>, LogProbScore> entries_;
  std::string content_digest_;
};

/// Wraps a callable. Mostly useful for tests and scripted backends.
class FunctionBackend : public ScoringBackend {
 public:
  using Fn = std::function<LogProbScore(const ScoreRequest&)>;
  FunctionBackend(Fn fn, std::string version, bool proper = false);

  LogProbScore score(const ScoreRequest& request) override;
  std::string version() const override { return version_; }
  bool proper_probabilities() const override { return proper_; }

 private:
  Fn fn_;
  std::string version_;
  bool proper_;
};

struct ScoreOutcome {
  std::optional<LogProbScore> score;
  std::string error;
  bool retryable = false;

  bool ok() const { return score.has_value(); }
};

struct ServiceOptions {
  std::size_t max_in_flight = 8;
};

struct ServiceStats {
  std::uint64_t requests = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t backend_calls = 0;
  std::uint64_t deduplicated = 0;
};

/// Front door to a backend: consults the cache, deduplicates concurrent
/// identical requests and bounds concurrency for batches.
class ScoringService {
 public:
  ScoringService(ScoringBackend& backend, ScoreCache* cache = nullptr, ServiceOptions options = {});
  ~ScoringService();

  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  /// Cache hit returns the stored score without calling the backend; a miss
  /// scores and persists.
  LogProbScore score(const ScoreRequest& request);

  /// Order-preserving; failures are reported per item and never abort the
  /// batch.
  std::vector<ScoreOutcome> score_batch(std::span<const ScoreRequest> requests);

  ScoringBackend& backend() { return backend_; }
  ServiceStats stats() const;

 private:
  ScoringBackend& backend_;
  ScoreCache* cache_;
  ServiceOptions options_;
  struct State;
  std::unique_ptr<State> state_;
};

/// Validates a score against the backend contract (token_count >= 1, finite).
void check_score(const LogProbScore& s, const ScoringBackend& backend);

}  // namespace moralprobe
