#pragma once

#include "moralprobe/cluster.hpp"
#include "moralprobe/model_matrix.hpp"
#include "moralprobe/remote_backend.hpp"
#include "moralprobe/stats.hpp"
#include "moralprobe/survey_ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace moralprobe {

struct SurveyConfig {
  std::string id;  // "wvs", "pew", ...
  SurveySource source = SurveySource::WVS;
  std::filesystem::path path;
  std::filesystem::path country_map;
  SurveyLayout layout;
  NonResponsePolicy nonresponse = NonResponsePolicy::ZeroReplace;
  PewCoding pew;
};

enum class BackendKind { Mock, Table, Remote };

std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::string model_id = "mock-lm";
  std::vector<std::string> mock_models{"mock-lm"};
  std::filesystem::path table_path;
  std::string endpoint;
  RemoteBackend::Protocol protocol = RemoteBackend::Protocol::Score;
  std::string auth_env = "MORALPROBE_API_TOKEN";
  int timeout_ms = 60000;
  int max_attempts = 3;
  int initial_backoff_ms = 1000;
  std::size_t max_in_flight = 8;
  std::filesystem::path cache_path;  // empty: <out>/cache/scores.tsv
  bool cache = true;
};

/// Every gap the published procedure leaves open has an explicit value here.
struct RunConfig {
  std::vector<SurveyConfig> surveys;
  BackendConfig backend;
  std::uint64_t seed = 42;  // comparative-probing sampling
  std::uint64_t kmeans_seed = 42;
  Normalization normalization = Normalization::Sum;
  ScoringGranularity granularity = ScoringGranularity::Continuation;
  VarianceDivisor variance_divisor = VarianceDivisor::Population;
  int silhouette_k_min = 2;
  int silhouette_k_max = 10;
  int elbow_k_min = 1;
  int elbow_k_max = 10;
  std::size_t k_topics = 3;
  std::size_t k_rank = 3;
  int trials = 50;
  int kmeans_restarts = 10;
  int kmeans_max_iterations = 300;
  Linkage linkage = Linkage::Ward;
  bool chi2_correction = false;
  bool terminal_period = true;
  double max_missing_fraction = 0.10;
  std::filesystem::path phrases;  // optional phrase override file
  std::filesystem::path out = "out";

  /// Paths in the file are resolved relative to the file's directory.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json_text(std::string_view text, const std::filesystem::path& base_dir);

  /// Throws ValidationError naming the first problem found.
  void validate(bool require_survey_inputs) const;

  std::filesystem::path cache_file() const;
  std::string to_json() const;
};

}  // namespace moralprobe
