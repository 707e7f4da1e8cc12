#include "moralprobe/score_cache.hpp"

#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"

#include <fmt/format.h>

#include <chrono>
#include <sstream>

namespace moralprobe {

namespace {

std::string record_body(const std::string& key, const LogProbScore& s, long long created_at) {
  return fmt::format("{}\t{}\t{}\t{}", key, s.logprob_sum, s.token_count, created_at);
}

std::string check_of(std::string_view body) { return sha256_hex(body).substr(0, 16); }

}  // namespace

ScoreCache::ScoreCache(std::filesystem::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
  load();
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) throw ValidationError("cannot open score cache " + file_.string());
}

std::string ScoreCache::key(const ScoreRequest& request, std::string_view backend_version) {
  return sha256_hex(
      fmt::format("{}\x1f{}\x1f{}\x1f{}", request.model_id, request.prefix, request.continuation, backend_version));
}

void ScoreCache::load() {
  std::ifstream in(file_, std::ios::binary);
  if (!in) return;
  const std::string text(std::istreambuf_iterator<char>(in), {});
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    const bool terminated = end != std::string::npos;
    if (!terminated) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;

    bool ok = terminated;
    std::string key;
    LogProbScore s;
    if (ok) {
      const auto last_tab = line.rfind('\t');
      ok = last_tab != std::string::npos && check_of(std::string_view(line).substr(0, last_tab)) ==
                                                std::string_view(line).substr(last_tab + 1);
      if (ok) {
        std::istringstream fields(line.substr(0, last_tab));
        std::string lp, tc, created;
        ok = std::getline(fields, key, '\t') && std::getline(fields, lp, '\t') && std::getline(fields, tc, '\t') &&
             std::getline(fields, created, '\t');
        if (ok) {
          try {
            s.logprob_sum = std::stod(lp);
            s.token_count = std::stoi(tc);
          } catch (const std::exception&) {
            ok = false;
          }
        }
        ok = ok && key.size() == 64 && s.token_count >= 1;
      }
    }
    if (!ok) {
      warnings_.push_back(fmt::format("{}:{}: corrupt cache entry dropped", file_.string(), line_no));
      continue;
    }
    entries_.try_emplace(key, s);
  }
  if (!text.empty() && text.back() != '\n') {
    // Terminate a torn final record so the next append starts a fresh line.
    std::ofstream fix(file_, std::ios::binary | std::ios::app);
    fix << '\n';
  }
}

std::optional<LogProbScore> ScoreCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::put(const std::string& key, const LogProbScore& score) {
  std::unique_lock lock(mutex_);
  if (!entries_.try_emplace(key, score).second) return;
  if (!out_.is_open()) return;
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  const std::string body = record_body(key, score, now);
  out_ << body << '\t' << check_of(body) << '\n';
  out_.flush();
}

void ScoreCache::clear() {
  std::unique_lock lock(mutex_);
  entries_.clear();
  if (out_.is_open()) {
    out_.close();
    out_.open(file_, std::ios::binary | std::ios::trunc);
    out_.close();
    out_.open(file_, std::ios::binary | std::ios::app);
  }
}

std::size_t ScoreCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::vector<std::string> ScoreCache::warnings() const {
  std::shared_lock lock(mutex_);
  return warnings_;
}

}  // namespace moralprobe
