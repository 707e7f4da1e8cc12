#include "moralprobe/scoring.hpp"

#include "moralprobe/csv.hpp"
#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/score_cache.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace moralprobe {

void check_score(const LogProbScore& s, const ScoringBackend& backend) {
  if (s.token_count < 1) throw BackendError("backend returned token_count < 1", false);
  if (!std::isfinite(s.logprob_sum)) throw BackendError("backend returned a non-finite log-probability", false);
  if (backend.proper_probabilities() && s.logprob_sum > 1e-9) {
    throw BackendError(fmt::format("backend returned positive log-probability {}", s.logprob_sum), false);
  }
}

// ---------------------------------------------------------------------------

MockBackend::MockBackend(std::uint64_t seed, std::set<std::string> models)
    : seed_(seed), models_(std::move(models)) {}

LogProbScore MockBackend::score(const ScoreRequest& request) {
  count_call();
  if (!models_.contains(request.model_id)) throw UnknownModelError(request.model_id);

  std::istringstream words(request.continuation);
  std::string word;
  std::string context = request.prefix;
  LogProbScore out{0.0, 0};
  while (words >> word) {
    const std::uint64_t h =
        digest64(fmt::format("{}\x1f{}\x1f{}\x1f{}", seed_, request.model_id, context, word));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    out.logprob_sum -= 0.05 + 9.95 * u;
    ++out.token_count;
    context += ' ';
    context += word;
  }
  if (out.token_count == 0) throw BackendError("continuation tokenizes to zero tokens", false);
  return out;
}

std::string MockBackend::version() const { return fmt::format("mock/1 seed={}", seed_); }

// ---------------------------------------------------------------------------

TableBackend::TableBackend(std::string model_id, std::map<std::pair<std::string, std::string>, LogProbScore> entries)
    : model_id_(std::move(model_id)), entries_(std::move(entries)) {
  std::string all;
  for (const auto& [k, v] : entries_) {
    all += fmt::format("{},{},{},{}\n", k.first, k.second, v.logprob_sum, v.token_count);
  }
  content_digest_ = sha256_hex(all).substr(0, 16);
}

std::unique_ptr<TableBackend> TableBackend::read(const std::filesystem::path& path, std::string model_id) {
  const auto table = csv::read(path);
  const auto pc = table.column("prefix_digest");
  const auto cc = table.column("continuation_digest");
  const auto lc = table.column("logprob_sum");
  const auto tc = table.column("token_count");
  if (pc < 0 || cc < 0 || lc < 0 || tc < 0) {
    throw ValidationError(path.string() +
                          ": score table needs prefix_digest,continuation_digest,logprob_sum,token_count");
  }
  std::map<std::pair<std::string, std::string>, LogProbScore> entries;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    LogProbScore s;
    try {
      s.logprob_sum = std::stod(row[lc]);
      s.token_count = std::stoi(row[tc]);
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("{}:{}: bad score row", path.string(), table.line_numbers[r]));
    }
    if (s.token_count < 1) {
      throw ValidationError(fmt::format("{}:{}: token_count must be >= 1", path.string(), table.line_numbers[r]));
    }
    entries[{row[pc], row[cc]}] = s;
  }
  return std::make_unique<TableBackend>(std::move(model_id), std::move(entries));
}

void TableBackend::write(const std::filesystem::path& path, std::span<const Entry> entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "prefix_digest,continuation_digest,logprob_sum,token_count\n";
  for (const auto& e : entries) {
    out << fmt::format("{},{},{},{}\n", sha256_hex(e.prefix), sha256_hex(e.continuation), e.score.logprob_sum,
                       e.score.token_count);
  }
}

LogProbScore TableBackend::score(const ScoreRequest& request) {
  count_call();
  if (request.model_id != model_id_) throw UnknownModelError(request.model_id);
  if (request.continuation.empty()) throw BackendError("continuation tokenizes to zero tokens", false);
  auto it = entries_.find({sha256_hex(request.prefix), sha256_hex(request.continuation)});
  if (it == entries_.end()) {
    throw BackendError(fmt::format("no table entry for '{}' + '{}'", request.prefix, request.continuation), false);
  }
  return it->second;
}

std::string TableBackend::version() const { return fmt::format("table/1 {}", content_digest_); }

// ---------------------------------------------------------------------------

FunctionBackend::FunctionBackend(Fn fn, std::string version, bool proper)
    : fn_(std::move(fn)), version_(std::move(version)), proper_(proper) {}

LogProbScore FunctionBackend::score(const ScoreRequest& request) {
  count_call();
  return fn_(request);
}

// ---------------------------------------------------------------------------

struct ScoringService::State {
  std::string backend_version;
  std::mutex mutex;
  std::unordered_map<std::string, std::shared_future<LogProbScore>> in_flight;
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> cache_hits{0};
  std::atomic<std::uint64_t> backend_calls{0};
  std::atomic<std::uint64_t> deduplicated{0};
};

ScoringService::ScoringService(ScoringBackend& backend, ScoreCache* cache, ServiceOptions options)
    : backend_(backend), cache_(cache), options_(options), state_(std::make_unique<State>()) {
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  state_->backend_version = backend_.version();
}

ScoringService::~ScoringService() = default;

LogProbScore ScoringService::score(const ScoreRequest& request) {
  State& st = *state_;
  ++st.requests;
  const std::string key = ScoreCache::key(request, st.backend_version);
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++st.cache_hits;
      return *hit;
    }
  }

  std::promise<LogProbScore> promise;
  {
    std::unique_lock lock(st.mutex);
    if (auto it = st.in_flight.find(key); it != st.in_flight.end()) {
      auto fut = it->second;
      lock.unlock();
      ++st.deduplicated;
      return fut.get();
    }
    // A concurrent caller may have finished between the first lookup and now.
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        ++st.cache_hits;
        return *hit;
      }
    }
    st.in_flight.emplace(key, promise.get_future().share());
  }

  auto finish = [&] {
    std::lock_guard lock(st.mutex);
    st.in_flight.erase(key);
  };
  try {
    ++st.backend_calls;
    LogProbScore s = backend_.score(request);
    check_score(s, backend_);
    if (cache_) cache_->put(key, s);
    promise.set_value(s);
    finish();
    return s;
  } catch (...) {
    promise.set_exception(std::current_exception());
    finish();
    throw;
  }
}

std::vector<ScoreOutcome> ScoringService::score_batch(std::span<const ScoreRequest> requests) {
  std::vector<ScoreOutcome> out(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < requests.size(); i = next++) {
      try {
        out[i].score = score(requests[i]);
      } catch (const BackendError& e) {
        out[i].error = e.what();
        out[i].retryable = e.retryable();
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  const std::size_t n_workers = std::min(options_.max_in_flight, requests.size());
  if (n_workers <= 1) {
    worker();
    return out;
  }
  {
    std::vector<std::jthread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) workers.emplace_back(worker);
  }
  return out;
}

ServiceStats ScoringService::stats() const {
  return {state_->requests.load(), state_->cache_hits.load(), state_->backend_calls.load(),
          state_->deduplicated.load()};
}

}  // namespace moralprobe
