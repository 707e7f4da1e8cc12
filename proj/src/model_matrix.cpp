#include "moralprobe/model_matrix.hpp"

#include "moralprobe/csv.hpp"
#include "moralprobe/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace moralprobe {

namespace {

constexpr int kRequestsPerCell = 20;

std::string cell_value(double v) { return std::isnan(v) ? "NA" : fmt::format("{}", v); }

}  // namespace

std::string_view to_string(Normalization n) { return n == Normalization::Sum ? "sum" : "per_token_mean"; }

Normalization normalization_from_string(std::string_view s) {
  if (s == "sum") return Normalization::Sum;
  if (s == "per_token_mean" || s == "mean") return Normalization::PerTokenMean;
  throw ValidationError(fmt::format("unknown normalization '{}'", s));
}

std::string_view to_string(ScoringGranularity g) {
  return g == ScoringGranularity::Continuation ? "continuation" : "whole_sentence";
}

ScoringGranularity scoring_granularity_from_string(std::string_view s) {
  if (s == "continuation") return ScoringGranularity::Continuation;
  if (s == "whole_sentence") return ScoringGranularity::WholeSentence;
  throw ValidationError(fmt::format("unknown scoring granularity '{}'", s));
}

NormalizedScore normalize(const LogProbScore& s, Normalization mode) {
  if (s.token_count < 1) throw ValidationError("score with no tokens");
  return {mode == Normalization::Sum ? s.logprob_sum : s.logprob_sum / s.token_count, mode};
}

double pair_score(const NormalizedScore& pos, const NormalizedScore& neg) {
  if (pos.mode != neg.mode) throw ValidationError("pair scores normalized with different modes");
  return pos.value - neg.value;
}

ScoreRequest positive_request(const ContrastPair& pair, const std::string& model_id,
                              ScoringGranularity granularity) {
  if (granularity == ScoringGranularity::WholeSentence) return {"", pair.positive_sentence(), model_id};
  return {pair.prefix, pair.positive_continuation, model_id};
}

ScoreRequest negative_request(const ContrastPair& pair, const std::string& model_id,
                              ScoringGranularity granularity) {
  if (granularity == ScoringGranularity::WholeSentence) return {"", pair.negative_sentence(), model_id};
  return {pair.prefix, pair.negative_continuation, model_id};
}

void finalize_breakdown(PairScoreBreakdown& b) {
  b.template_means = b.differences.rowwise().mean();
  b.final_score = b.template_means.mean();
  if (!std::isfinite(b.final_score) && !b.missing_cause) b.missing_cause = "non-finite score";
}

namespace {

std::vector<ScoreRequest> cell_requests(const std::vector<ContrastPair>& pairs, const ProbeOptions& options) {
  std::vector<ScoreRequest> out;
  out.reserve(kRequestsPerCell);
  for (const auto& p : pairs) {
    out.push_back(positive_request(p, options.model_id, options.granularity));
    out.push_back(negative_request(p, options.model_id, options.granularity));
  }
  return out;
}

// outcomes: 20 entries in cell_requests order.
void fill_breakdown(PairScoreBreakdown& b, std::span<const ScoreOutcome> outcomes, const ProbeOptions& options) {
  for (int idx = 0; idx < 10; ++idx) {
    const int t = idx / 5;
    const int p = idx % 5;
    const auto& pos = outcomes[2 * idx];
    const auto& neg = outcomes[2 * idx + 1];
    if (!pos.ok() || !neg.ok()) {
      if (!b.missing_cause) b.missing_cause = pos.ok() ? neg.error : pos.error;
      continue;
    }
    const auto np = normalize(*pos.score, options.normalization);
    const auto nn = normalize(*neg.score, options.normalization);
    b.positive(t, p) = np.value;
    b.negative(t, p) = nn.value;
    b.differences(t, p) = pair_score(np, nn);
  }
  if (!b.missing_cause) finalize_breakdown(b);
}

}  // namespace

PairScoreBreakdown country_topic_score(const std::string& country, const std::string& topic,
                                       ScoringService& service, const PhraseBook& phrases,
                                       const ProbeOptions& options) {
  PairScoreBreakdown b;
  b.country = country;
  b.topic = topic;
  std::vector<ContrastPair> pairs;
  try {
    pairs = render_moral_pairs(phrases.country_display(country), phrases.topic_phrase(topic), options.prompt);
  } catch (const ValidationError& e) {
    b.missing_cause = e.what();
    return b;
  }
  const auto requests = cell_requests(pairs, options);
  std::vector<ScoreOutcome> outcomes;
  outcomes.reserve(requests.size());
  for (const auto& r : requests) {
    ScoreOutcome o;
    try {
      o.score = service.score(r);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    outcomes.push_back(std::move(o));
  }
  fill_breakdown(b, outcomes, options);
  return b;
}

ModelMatrixResult build_model_matrix(const std::vector<std::string>& countries,
                                     const std::vector<std::string>& topics, ScoringService& service,
                                     const PhraseBook& phrases, const ProbeOptions& options) {
  if (countries.empty() || topics.empty()) throw ValidationError("model matrix needs countries and topics");

  const std::size_t n_cells = countries.size() * topics.size();
  std::vector<PairScoreBreakdown> breakdown(n_cells);
  std::vector<ScoreRequest> requests;
  std::vector<std::ptrdiff_t> first_request(n_cells, -1);
  requests.reserve(n_cells * kRequestsPerCell);

  for (std::size_t i = 0; i < countries.size(); ++i) {
    for (std::size_t j = 0; j < topics.size(); ++j) {
      auto& b = breakdown[i * topics.size() + j];
      b.country = countries[i];
      b.topic = topics[j];
      try {
        const auto pairs =
            render_moral_pairs(phrases.country_display(countries[i]), phrases.topic_phrase(topics[j]), options.prompt);
        first_request[i * topics.size() + j] = static_cast<std::ptrdiff_t>(requests.size());
        for (auto& r : cell_requests(pairs, options)) requests.push_back(std::move(r));
      } catch (const ValidationError& e) {
        b.missing_cause = e.what();
      }
    }
  }

  const auto outcomes = service.score_batch(requests);

  ModelMatrixResult result;
  MoralMatrix& m = result.matrix;
  m.countries = countries;
  m.topics = topics;
  m.source_tag = options.model_id;
  m.bounded = false;
  m.scores.resize(static_cast<Eigen::Index>(countries.size()), static_cast<Eigen::Index>(topics.size()));
  for (std::size_t c = 0; c < n_cells; ++c) {
    auto& b = breakdown[c];
    if (first_request[c] >= 0) {
      fill_breakdown(b, std::span(outcomes).subspan(static_cast<std::size_t>(first_request[c]), kRequestsPerCell),
                     options);
    }
    m.scores(static_cast<Eigen::Index>(c / topics.size()), static_cast<Eigen::Index>(c % topics.size())) =
        b.missing() ? NAN : b.final_score;
    if (b.missing()) ++result.missing_cells;
  }
  result.breakdown = std::move(breakdown);

  if (static_cast<double>(result.missing_cells) > options.max_missing_fraction * static_cast<double>(n_cells)) {
    std::string first_cause;
    for (const auto& b : result.breakdown) {
      if (b.missing()) {
        first_cause = fmt::format("{} / {}: {}", b.country, b.topic, *b.missing_cause);
        break;
      }
    }
    bool any_retryable = false;
    for (const auto& o : outcomes) any_retryable = any_retryable || o.retryable;
    throw BackendError(fmt::format("{} of {} cells could not be scored (limit {:.0f}%); first: {}",
                                   result.missing_cells, n_cells, options.max_missing_fraction * 100, first_cause),
                       any_retryable);
  }
  return result;
}

std::string breakdown_to_csv(const std::vector<PairScoreBreakdown>& breakdown) {
  std::string out = "country,topic,template,pair_id,pos,neg,diff\n";
  for (const auto& b : breakdown) {
    for (int t = 0; t < 2; ++t) {
      for (int p = 0; p < 5; ++p) {
        out += fmt::format("{},{},{},{},{},{},{}\n", csv::quote(b.country), csv::quote(b.topic),
                           t == 0 ? "in" : "people", p + 1, cell_value(b.positive(t, p)),
                           cell_value(b.negative(t, p)), cell_value(b.differences(t, p)));
      }
    }
  }
  return out;
}

}  // namespace moralprobe
