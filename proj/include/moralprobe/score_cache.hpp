#pragma once

#include "moralprobe/scoring.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace moralprobe {

/// Persistent score store: an append-only text file of
/// `key <TAB> logprob_sum <TAB> token_count <TAB> created_at <TAB> check`
/// records. Corrupt records are dropped at load time (and later rescored).
/// Concurrent readers, serialized appends.
class ScoreCache {
 public:
  /// In-memory only.
  ScoreCache() = default;
  explicit ScoreCache(std::filesystem::path file);

  static std::string key(const ScoreRequest& request, std::string_view backend_version);

  std::optional<LogProbScore> get(const std::string& key) const;
  /// First write wins; later puts for an existing key are ignored.
  void put(const std::string& key, const LogProbScore& score);
  void clear();

  std::size_t size() const;
  std::vector<std::string> warnings() const;
  const std::filesystem::path& file() const { return file_; }

 private:
  void load();

  std::filesystem::path file_;
  std::ofstream out_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, LogProbScore> entries_;
  std::vector<std::string> warnings_;
};

}  // namespace moralprobe
