#include "moralprobe/remote_backend.hpp"

#include "moralprobe/error.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

namespace moralprobe {

namespace {

using nlohmann::json;

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

std::string error_text(const httplib::Result& res) {
  try {
    const auto j = json::parse(res->body);
    if (j.contains("error")) {
      const auto& e = j["error"];
      if (e.is_string()) return e.get<std::string>();
      if (e.is_object() && e.contains("message")) return e["message"].get<std::string>();
      return e.dump();
    }
  } catch (const json::exception&) {
  }
  return res->body.substr(0, 200);
}

LogProbScore parse_openai(const json& body, const ScoreRequest& request) {
  const std::size_t prefix_len = request.prefix.size();
  const std::size_t prompt_len = prefix_len + request.continuation.size();
  const auto& lp = body.at("choices").at(0).at("logprobs");
  const auto& tokens = lp.at("tokens");
  const auto& token_logprobs = lp.at("token_logprobs");
  const auto& offsets = lp.at("text_offset");
  LogProbScore out{0.0, 0};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto start = offsets.at(i).get<std::size_t>();
    if (start >= prompt_len) break;  // generated tokens
    const std::size_t end =
        i + 1 < offsets.size() ? offsets.at(i + 1).get<std::size_t>() : start + tokens.at(i).get<std::string>().size();
    if (end <= prefix_len) continue;
    if (token_logprobs.at(i).is_null()) {
      throw BackendError("server returned no log-probability for a continuation token", false);
    }
    out.logprob_sum += token_logprobs.at(i).get<double>();
    ++out.token_count;
  }
  if (out.token_count == 0) throw BackendError("continuation tokenizes to zero tokens", false);
  return out;
}

}  // namespace

RemoteBackend::Protocol remote_protocol_from_string(std::string_view s) {
  if (s == "score") return RemoteBackend::Protocol::Score;
  if (s == "openai") return RemoteBackend::Protocol::OpenAICompletions;
  throw ValidationError(fmt::format("unknown remote protocol '{}' (expected score|openai)", s));
}

RemoteBackend::RemoteBackend(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) throw ValidationError("remote backend needs an endpoint URL");
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

std::string RemoteBackend::version() const {
  return fmt::format("remote/1 {} {}", options_.endpoint,
                     options_.protocol == Protocol::Score ? "score" : "openai");
}

LogProbScore RemoteBackend::attempt(const ScoreRequest& request) {
  httplib::Client client(options_.endpoint);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  if (!options_.auth_token.empty()) client.set_bearer_token_auth(options_.auth_token);

  json body;
  std::string path;
  if (options_.protocol == Protocol::Score) {
    path = "/v1/score";
    body = {{"model", request.model_id}, {"prefix", request.prefix}, {"continuation", request.continuation}};
  } else {
    path = "/v1/completions";
    body = {{"model", request.model_id}, {"prompt", request.prefix + request.continuation},
            {"max_tokens", 1},           {"echo", true},
            {"logprobs", 0},             {"temperature", 0}};
  }

  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    throw BackendError(fmt::format("{}{}: {}", options_.endpoint, path, httplib::to_string(res.error())), true);
  }
  if (res->status == 404) throw UnknownModelError(request.model_id);
  if (res->status != 200) {
    throw BackendError(fmt::format("{}{}: HTTP {}: {}", options_.endpoint, path, res->status, error_text(res)),
                       retryable_status(res->status));
  }
  try {
    const auto j = json::parse(res->body);
    if (options_.protocol == Protocol::OpenAICompletions) return parse_openai(j, request);
    LogProbScore out;
    out.logprob_sum = j.at("logprob_sum").get<double>();
    out.token_count = j.at("token_count").get<int>();
    return out;
  } catch (const json::exception& e) {
    throw BackendError(fmt::format("{}{}: malformed response: {}", options_.endpoint, path, e.what()), false);
  }
}

LogProbScore RemoteBackend::score(const ScoreRequest& request) {
  count_call();
  if (request.continuation.empty()) throw BackendError("continuation tokenizes to zero tokens", false);
  auto delay = options_.initial_backoff;
  for (int attempt_no = 1;; ++attempt_no) {
    try {
      return attempt(request);
    } catch (const BackendError& e) {
      if (!e.retryable()) throw;
      if (attempt_no >= options_.max_attempts) {
        throw BackendError(fmt::format("{} (after {} attempts)", e.what(), attempt_no), true, attempt_no);
      }
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace moralprobe
