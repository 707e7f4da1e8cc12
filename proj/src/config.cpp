#include "moralprobe/config.hpp"

#include "moralprobe/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace moralprobe {

using nlohmann::json;

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Mock: return "mock";
    case BackendKind::Table: return "table";
    case BackendKind::Remote: return "remote";
  }
  return "mock";
}

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "mock") return BackendKind::Mock;
  if (s == "table") return BackendKind::Table;
  if (s == "remote") return BackendKind::Remote;
  throw ValidationError(fmt::format("unknown backend '{}' (mock, table, remote)", s));
}

namespace {

std::string_view to_string(RemoteBackend::Protocol p) {
  return p == RemoteBackend::Protocol::Score ? "score" : "openai";
}

void reject_unknown_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw ValidationError(fmt::format("config: {} must be an object", where));
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError(fmt::format("config: unknown key '{}' in {}", key, where));
    }
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("config: bad value for '{}': {}", key, e.what()));
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::filesystem::path read_path(const json& obj, const char* key, const std::filesystem::path& base) {
  std::string s;
  read_opt(obj, key, s);
  return resolve(base, s);
}

void read_range(const json& obj, const char* key, int& lo, int& hi) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    throw ValidationError(fmt::format("config: '{}' must be [min, max]", key));
  }
  lo = v[0].get<int>();
  hi = v[1].get<int>();
}

char read_delimiter(const json& obj) {
  std::string d = ",";
  read_opt(obj, "delimiter", d);
  if (d == "\\t" || d == "tab") d = "\t";
  if (d.size() != 1) throw ValidationError(fmt::format("config: delimiter must be one character, got '{}'", d));
  return d[0];
}

SurveyConfig parse_survey(const json& j, const std::filesystem::path& base) {
  reject_unknown_keys(j, "survey entry",
                      {"id", "source", "path", "country_map", "country_column", "country_column_has_names",
                       "questions", "delimiter", "nonresponse", "pew_coding"});
  SurveyConfig s;
  std::string source = "wvs";
  read_opt(j, "source", source);
  s.source = survey_source_from_string(source);
  s.id = std::string(to_string(s.source));
  read_opt(j, "id", s.id);
  s.path = read_path(j, "path", base);
  s.country_map = read_path(j, "country_map", base);
  s.layout = s.source == SurveySource::WVS ? SurveyLayout::wvs_wave7() : SurveyLayout::pew_2013();
  read_opt(j, "country_column", s.layout.country_column);
  read_opt(j, "country_column_has_names", s.layout.country_column_has_names);
  if (j.contains("delimiter")) s.layout.delimiter = read_delimiter(j);
  if (j.contains("questions")) {
    const auto& q = j.at("questions");
    s.layout.questions.clear();
    if (q.is_object()) {
      for (const auto& [col, label] : q.items()) s.layout.questions.emplace_back(col, label.get<std::string>());
    } else if (q.is_array()) {
      for (const auto& e : q) {
        if (!e.is_array() || e.size() != 2) throw ValidationError("config: questions entries must be [column, topic]");
        s.layout.questions.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
      }
    } else {
      throw ValidationError("config: questions must be an object or an array of pairs");
    }
  }
  std::string nr = std::string(to_string(s.nonresponse));
  read_opt(j, "nonresponse", nr);
  s.nonresponse = nonresponse_policy_from_string(nr);
  if (j.contains("pew_coding")) {
    const auto& pc = j.at("pew_coding");
    reject_unknown_keys(pc, "pew_coding", {"substantive", "nonresponse"});
    if (pc.contains("substantive")) {
      s.pew.substantive.clear();
      for (const auto& [code, value] : pc.at("substantive").items()) {
        s.pew.substantive[std::stoi(code)] = value.get<int>();
      }
    }
    if (pc.contains("nonresponse")) s.pew.nonresponse = pc.at("nonresponse").get<std::set<int>>();
  }
  return s;
}

BackendConfig parse_backend(const json& j, const std::filesystem::path& base) {
  reject_unknown_keys(j, "backend",
                      {"kind", "model_id", "mock_models", "table_path", "endpoint", "protocol", "auth_env",
                       "timeout_ms", "max_attempts", "initial_backoff_ms", "max_in_flight", "cache", "cache_path"});
  BackendConfig b;
  std::string kind = "mock";
  read_opt(j, "kind", kind);
  b.kind = backend_kind_from_string(kind);
  read_opt(j, "model_id", b.model_id);
  read_opt(j, "mock_models", b.mock_models);
  b.table_path = read_path(j, "table_path", base);
  read_opt(j, "endpoint", b.endpoint);
  std::string protocol = "score";
  read_opt(j, "protocol", protocol);
  b.protocol = remote_protocol_from_string(protocol);
  read_opt(j, "auth_env", b.auth_env);
  read_opt(j, "timeout_ms", b.timeout_ms);
  read_opt(j, "max_attempts", b.max_attempts);
  read_opt(j, "initial_backoff_ms", b.initial_backoff_ms);
  read_opt(j, "max_in_flight", b.max_in_flight);
  read_opt(j, "cache", b.cache);
  b.cache_path = read_path(j, "cache_path", base);
  return b;
}

}  // namespace

RunConfig RunConfig::from_json_text(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  reject_unknown_keys(j, "config",
                      {"surveys", "backend", "seed", "kmeans_seed", "normalization", "granularity", "variance_divisor",
                       "silhouette_k", "elbow_k", "k_topics", "k_rank", "trials", "kmeans_restarts",
                       "kmeans_max_iterations", "linkage", "chi2_correction", "terminal_period",
                       "max_missing_fraction", "phrases", "out"});
  RunConfig c;
  if (j.contains("surveys")) {
    if (!j.at("surveys").is_array()) throw ValidationError("config: surveys must be an array");
    for (const auto& s : j.at("surveys")) c.surveys.push_back(parse_survey(s, base_dir));
  }
  if (j.contains("backend")) c.backend = parse_backend(j.at("backend"), base_dir);
  read_opt(j, "seed", c.seed);
  read_opt(j, "kmeans_seed", c.kmeans_seed);
  std::string s;
  if (j.contains("normalization")) {
    read_opt(j, "normalization", s);
    c.normalization = normalization_from_string(s);
  }
  if (j.contains("granularity")) {
    read_opt(j, "granularity", s);
    c.granularity = scoring_granularity_from_string(s);
  }
  if (j.contains("variance_divisor")) {
    read_opt(j, "variance_divisor", s);
    c.variance_divisor = variance_divisor_from_string(s);
  }
  if (j.contains("linkage")) {
    read_opt(j, "linkage", s);
    c.linkage = linkage_from_string(s);
  }
  read_range(j, "silhouette_k", c.silhouette_k_min, c.silhouette_k_max);
  read_range(j, "elbow_k", c.elbow_k_min, c.elbow_k_max);
  read_opt(j, "k_topics", c.k_topics);
  read_opt(j, "k_rank", c.k_rank);
  read_opt(j, "trials", c.trials);
  read_opt(j, "kmeans_restarts", c.kmeans_restarts);
  read_opt(j, "kmeans_max_iterations", c.kmeans_max_iterations);
  read_opt(j, "chi2_correction", c.chi2_correction);
  read_opt(j, "terminal_period", c.terminal_period);
  read_opt(j, "max_missing_fraction", c.max_missing_fraction);
  c.phrases = read_path(j, "phrases", base_dir);
  c.out = j.contains("out") ? read_path(j, "out", base_dir) : resolve(base_dir, c.out.string());
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), std::filesystem::absolute(path).parent_path());
}

void RunConfig::validate(bool require_survey_inputs) const {
  namespace fs = std::filesystem;
  if (surveys.empty()) throw ValidationError("config: no surveys configured");
  std::set<std::string> ids;
  for (const auto& s : surveys) {
    if (s.id.empty()) throw ValidationError("config: survey id is empty");
    if (s.id.find_first_of("/\\ ") != std::string::npos) {
      throw ValidationError(fmt::format("config: survey id '{}' must not contain separators or spaces", s.id));
    }
    if (!ids.insert(s.id).second) throw ValidationError(fmt::format("config: duplicate survey id '{}'", s.id));
    if (!require_survey_inputs) continue;
    if (s.path.empty() || !fs::is_regular_file(s.path)) {
      throw ValidationError(fmt::format("config: survey '{}': data file '{}' not found", s.id, s.path.string()));
    }
    if (!s.layout.country_column_has_names) {
      if (s.country_map.empty()) {
        throw ValidationError(fmt::format("config: survey '{}': country_map is required", s.id));
      }
      if (!fs::is_regular_file(s.country_map)) {
        throw ValidationError(
            fmt::format("config: survey '{}': country map '{}' not found", s.id, s.country_map.string()));
      }
    }
    if (s.layout.questions.empty()) throw ValidationError(fmt::format("config: survey '{}': no questions", s.id));
  }
  if (backend.model_id.empty()) throw ValidationError("config: backend.model_id is empty");
  if (backend.model_id.find_first_of("/\\ ") != std::string::npos && backend.kind != BackendKind::Remote) {
    throw ValidationError("config: backend.model_id must not contain separators");
  }
  if (backend.kind == BackendKind::Table && !fs::is_regular_file(backend.table_path)) {
    throw ValidationError(fmt::format("config: score table '{}' not found", backend.table_path.string()));
  }
  if (backend.kind == BackendKind::Remote && backend.endpoint.empty()) {
    throw ValidationError("config: remote backend needs an endpoint");
  }
  if (backend.max_attempts < 1) throw ValidationError("config: backend.max_attempts must be >= 1");
  if (backend.timeout_ms < 1) throw ValidationError("config: backend.timeout_ms must be >= 1");
  if (backend.initial_backoff_ms < 0) throw ValidationError("config: backend.initial_backoff_ms must be >= 0");
  if (backend.max_in_flight < 1) throw ValidationError("config: backend.max_in_flight must be >= 1");
  if (silhouette_k_min > silhouette_k_max || silhouette_k_max < 2) {
    throw ValidationError("config: silhouette_k range is empty");
  }
  if (elbow_k_min < 1 || elbow_k_min > elbow_k_max) throw ValidationError("config: elbow_k range is invalid");
  if (k_topics < 2) throw ValidationError("config: k_topics must be >= 2");
  if (k_rank < 1) throw ValidationError("config: k_rank must be >= 1");
  if (trials < 1) throw ValidationError("config: trials must be >= 1");
  if (kmeans_restarts < 1 || kmeans_max_iterations < 1) throw ValidationError("config: k-means limits must be >= 1");
  if (!(max_missing_fraction >= 0.0 && max_missing_fraction <= 1.0)) {
    throw ValidationError("config: max_missing_fraction must lie in [0, 1]");
  }
  if (!phrases.empty() && !fs::is_regular_file(phrases)) {
    throw ValidationError(fmt::format("config: phrase file '{}' not found", phrases.string()));
  }
  if (out.empty()) throw ValidationError("config: out is empty");
}

std::filesystem::path RunConfig::cache_file() const {
  if (!backend.cache_path.empty()) return backend.cache_path;
  return out / "cache" / "scores.tsv";
}

std::string RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["kmeans_seed"] = kmeans_seed;
  j["normalization"] = std::string(moralprobe::to_string(normalization));
  j["granularity"] = std::string(moralprobe::to_string(granularity));
  j["variance_divisor"] = std::string(moralprobe::to_string(variance_divisor));
  j["silhouette_k"] = {silhouette_k_min, silhouette_k_max};
  j["elbow_k"] = {elbow_k_min, elbow_k_max};
  j["k_topics"] = k_topics;
  j["k_rank"] = k_rank;
  j["trials"] = trials;
  j["kmeans_restarts"] = kmeans_restarts;
  j["kmeans_max_iterations"] = kmeans_max_iterations;
  j["kmeans_init"] = "k-means++";
  j["linkage"] = std::string(moralprobe::to_string(linkage));
  j["elbow_rule"] = "max-distance-to-chord";
  j["ami_normalization"] = "arithmetic";
  j["positive_class"] = "SIMILAR";
  j["trial_design"] = "2+2 sampling, 2 intra + 2 inter pairs per trial, pooled across topics";
  j["chi2_correction"] = chi2_correction;
  j["terminal_period"] = terminal_period;
  j["max_missing_fraction"] = max_missing_fraction;
  // Paths are omitted so bundles do not depend on where they were produced.
  json surveys = json::array();
  for (const auto& s : this->surveys) {
    json e;
    e["id"] = s.id;
    e["source"] = std::string(moralprobe::to_string(s.source));
    e["nonresponse"] = std::string(moralprobe::to_string(s.nonresponse));
    e["questions"] = s.layout.questions;
    surveys.push_back(e);
  }
  j["surveys"] = surveys;
  json b;
  b["kind"] = std::string(moralprobe::to_string(backend.kind));
  b["model_id"] = backend.model_id;
  if (backend.kind == BackendKind::Remote) {
    b["protocol"] = std::string(to_string(backend.protocol));
    b["max_attempts"] = backend.max_attempts;
    b["timeout_ms"] = backend.timeout_ms;
  }
  j["backend"] = b;
  return j.dump(2);
}

}  // namespace moralprobe
