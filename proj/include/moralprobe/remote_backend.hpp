#pragma once

#include "moralprobe/scoring.hpp"

#include <chrono>
#include <string>

namespace moralprobe {

/// HTTP scoring client.
///
/// Protocol::Score speaks the native contract:
///   POST /v1/score {"model", "prefix", "continuation"}
///     -> 200 {"logprob_sum": number, "token_count": integer}
///     -> 4xx/5xx {"error": text}; 404 means unknown model.
///
/// Protocol::OpenAICompletions adapts OpenAI-style completion servers that
/// echo prompt log-probabilities (`echo: true, max_tokens: 1, logprobs: 0`).
/// Tokens whose text ends past the prefix boundary count as continuation
/// tokens, so a leading space merged into the first judgment token is scored
/// with the continuation.
class RemoteBackend : public ScoringBackend {
 public:
  enum class Protocol { Score, OpenAICompletions };

  struct Options {
    std::string endpoint;  // scheme://host[:port]
    Protocol protocol = Protocol::Score;
    std::string auth_token;
    std::chrono::milliseconds timeout{60000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
  };

  explicit RemoteBackend(Options options);

  LogProbScore score(const ScoreRequest& request) override;
  std::string version() const override;
  bool remote() const override { return true; }

  const Options& options() const { return options_; }

 private:
  LogProbScore attempt(const ScoreRequest& request);

  Options options_;
};

RemoteBackend::Protocol remote_protocol_from_string(std::string_view s);

}  // namespace moralprobe
