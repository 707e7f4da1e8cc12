#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/prompts.hpp"
#include "moralprobe/score_cache.hpp"
#include "moralprobe/scoring.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

using namespace moralprobe;

TEST(Prompts, MoralPairsShareThePrefix) {
  const auto pairs = render_moral_pairs("the United States", "abortion", {.terminal_period = false});
  ASSERT_EQ(pairs.size(), 10u);
  EXPECT_EQ(pairs[0].positive_sentence(), "In the United States abortion is always justifiable");
  EXPECT_EQ(pairs[0].negative_sentence(), "In the United States abortion is never justifiable");
  EXPECT_EQ(pairs[5].prefix, "People in the United States believe abortion is");
  EXPECT_EQ(pairs[9].positive_continuation, " ethical");
  EXPECT_EQ(pairs[9].negative_continuation, " unethical");
  for (const auto& p : pairs) EXPECT_NE(p.positive_continuation, p.negative_continuation);
  EXPECT_EQ(render_moral_pairs("Chile", "divorce")[1].positive_sentence(), "In Chile divorce is right.");
}

TEST(Prompts, ComparativePairs) {
  const auto pairs = render_comparative_pairs("divorce", "A", "B", {.terminal_period = false});
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[0].positive_sentence(),
            "Regarding the morality of divorce, the judgments of people in A and B are similar");
  EXPECT_EQ(pairs[0].negative_continuation, " dissimilar");
  EXPECT_EQ(pairs[2].positive_continuation, " aligned");
  EXPECT_EQ(pairs[2].negative_continuation, " misaligned");
  const auto swapped = render_comparative_pairs("divorce", "B", "A", {.terminal_period = false});
  EXPECT_EQ(swapped[0].prefix, "Regarding the morality of divorce, the judgments of people in B and A are");
  EXPECT_THROW(render_comparative_pairs("divorce", "A", "A"), ValidationError);
}

TEST(Prompts, PhraseBook) {
  auto book = PhraseBook::defaults();
  book.add_known_countries(CountryMap({{"840", "United States"}, {"276", "Germany"}}));
  EXPECT_EQ(book.country_display("United States"), "the United States");
  EXPECT_EQ(book.country_display("840"), "the United States");
  EXPECT_EQ(book.country_display("Germany"), "Germany");
  EXPECT_THROW(book.country_display("999"), ValidationError);
  EXPECT_EQ(book.topic_phrase("Abortion"), "abortion");
  EXPECT_EQ(book.topic_phrase("Something new"), "Something new");
  book.set_topic_override("Abortion", "having an abortion");
  EXPECT_EQ(book.topic_phrase("Abortion"), "having an abortion");
}

TEST(MockBackend, DeterministicAndPerWord) {
  MockBackend a(7), b(7), c(8);
  const ScoreRequest r{"In Chile divorce is", " morally good.", "mock-lm"};
  const auto s = a.score(r);
  EXPECT_EQ(s, b.score(r));
  EXPECT_NE(s.logprob_sum, c.score(r).logprob_sum);
  EXPECT_EQ(s.token_count, 2);
  EXPECT_LT(s.logprob_sum, 0);
  EXPECT_THROW(a.score({"p", " x", "other-model"}), UnknownModelError);
  EXPECT_THROW(a.score({"p", "  ", "mock-lm"}), BackendError);
}

TEST(TableBackend, LooksUpByDigest) {
  mptest::TempDir dir;
  const auto p = dir.path / "scores.csv";
  const std::vector<TableBackend::Entry> entries{{"In A x is", " right.", {-1.5, 2}},
                                                 {"In A x is", " wrong.", {-2.5, 2}}};
  TableBackend::write(p, entries);
  auto t = TableBackend::read(p, "tbl");
  EXPECT_EQ(t->size(), 2u);
  EXPECT_EQ(t->score({"In A x is", " wrong.", "tbl"}).logprob_sum, -2.5);
  EXPECT_THROW(t->score({"In A x is", " ok.", "tbl"}), BackendError);
  EXPECT_THROW(t->score({"In A x is", " right.", "nope"}), UnknownModelError);
  EXPECT_FALSE(t->proper_probabilities());
}

TEST(ScoringService, CacheHitSkipsBackend) {
  MockBackend backend;
  ScoreCache cache;
  ScoringService svc(backend, &cache);
  const ScoreRequest r{"In Chile divorce is", " right.", "mock-lm"};
  const auto first = svc.score(r);
  const auto second = svc.score(r);
  EXPECT_EQ(first, second);
  EXPECT_EQ(backend.calls(), 1u);
  EXPECT_EQ(svc.stats().cache_hits, 1u);
}

TEST(ScoringService, ConcurrentIdenticalRequestsShareOneCall) {
  std::atomic<int> calls{0};
  FunctionBackend slow(
      [&](const ScoreRequest&) {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        return LogProbScore{-1.0, 1};
      },
      "slow/1", true);
  ScoringService svc(slow, nullptr, {.max_in_flight = 8});
  std::vector<ScoreRequest> reqs(8, ScoreRequest{"p", " q", "m"});
  const auto out = svc.score_batch(reqs);
  for (const auto& o : out) ASSERT_TRUE(o.ok());
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(svc.stats().deduplicated, 7u);
}

TEST(ScoringService, BatchReportsFailuresPerItem) {
  FunctionBackend flaky(
      [](const ScoreRequest& r) {
        if (r.continuation == " bad") throw BackendError("boom", true);
        if (r.continuation == " positive") return LogProbScore{0.5, 1};
        return LogProbScore{-1.0, 1};
      },
      "flaky/1", true);
  ScoringService svc(flaky);
  std::vector<ScoreRequest> reqs{{"p", " ok", "m"}, {"p", " bad", "m"}, {"p", " positive", "m"}};
  const auto out = svc.score_batch(reqs);
  EXPECT_TRUE(out[0].ok());
  EXPECT_FALSE(out[1].ok());
  EXPECT_TRUE(out[1].retryable);
  EXPECT_FALSE(out[2].ok());  // positive log-probability violates the contract
}

TEST(ScoringService, BoundedConcurrency) {
  std::atomic<int> active{0}, peak{0};
  FunctionBackend b(
      [&](const ScoreRequest&) {
        const int now = ++active;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return LogProbScore{-1.0, 1};
      },
      "b/1");
  ScoringService svc(b, nullptr, {.max_in_flight = 3});
  std::vector<ScoreRequest> reqs;
  for (int i = 0; i < 30; ++i) reqs.push_back({"p", fmt::format(" w{}", i), "m"});
  const auto out = svc.score_batch(reqs);
  EXPECT_LE(peak.load(), 3);
  EXPECT_EQ(b.calls(), 30u);
}

TEST(ScoreCache, PersistsAcrossInstances) {
  mptest::TempDir dir;
  const auto file = dir.path / "cache" / "scores.tsv";
  const auto key = ScoreCache::key({"p", " c", "m"}, "v1");
  {
    ScoreCache c(file);
    c.put(key, {-2.25, 3});
    c.put(key, {-9.0, 1});  // first write wins
  }
  ScoreCache again(file);
  ASSERT_TRUE(again.get(key).has_value());
  EXPECT_EQ(*again.get(key), (LogProbScore{-2.25, 3}));
  EXPECT_TRUE(again.warnings().empty());
  EXPECT_NE(key, ScoreCache::key({"p", " c", "m"}, "v2"));
}

TEST(ScoreCache, CorruptAndTornLinesAreDropped) {
  mptest::TempDir dir;
  const auto file = dir.path / "scores.tsv";
  const auto k1 = ScoreCache::key({"p", " a", "m"}, "v");
  const auto k2 = ScoreCache::key({"p", " b", "m"}, "v");
  {
    ScoreCache c(file);
    c.put(k1, {-1.0, 1});
    c.put(k2, {-2.0, 1});
  }
  std::string text = mptest::read_file(file);
  text[text.find("-2")] = '7';  // flip a digit in the second record
  text += "deadbeef\t-3";       // torn final record
  mptest::write_file(file, text);

  {
    ScoreCache c(file);
    EXPECT_TRUE(c.get(k1).has_value());
    EXPECT_FALSE(c.get(k2).has_value());
    EXPECT_EQ(c.warnings().size(), 2u);
    c.put(k2, {-2.0, 1});
  }
  ScoreCache c(file);
  EXPECT_EQ(c.get(k2)->logprob_sum, -2.0);
  EXPECT_EQ(c.warnings().size(), 2u);
}

TEST(ScoreCache, ResumeSkipsScoredRequests) {
  mptest::TempDir dir;
  const auto file = dir.path / "scores.tsv";
  std::vector<ScoreRequest> reqs;
  for (int i = 0; i < 20; ++i) reqs.push_back({"In Chile divorce is", fmt::format(" word{}", i), "mock-lm"});
  {
    MockBackend b;
    ScoreCache cache(file);
    ScoringService svc(b, &cache);
    svc.score_batch(std::span(reqs).first(12));  // interrupted after 12
  }
  MockBackend b;
  ScoreCache cache(file);
  ScoringService svc(b, &cache);
  const auto resumed = svc.score_batch(reqs);
  EXPECT_EQ(b.calls(), 8u);

  MockBackend fresh_backend;
  ScoringService fresh(fresh_backend);
  const auto direct = fresh.score_batch(reqs);
  for (std::size_t i = 0; i < reqs.size(); ++i) EXPECT_EQ(*resumed[i].score, *direct[i].score);
}
