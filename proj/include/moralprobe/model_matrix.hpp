#pragma once

#include "moralprobe/moral_matrix.hpp"
#include "moralprobe/prompts.hpp"
#include "moralprobe/scoring.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace moralprobe {

/// How a LogProbScore collapses into the number that is differenced.
enum class Normalization {
  Sum,           // raw summed log-probability
  PerTokenMean,  // logprob_sum / token_count
};

std::string_view to_string(Normalization n);
Normalization normalization_from_string(std::string_view s);

/// What the backend is asked to score.
enum class ScoringGranularity {
  Continuation,   // continuation given the shared prefix
  WholeSentence,  // prefix + continuation from an empty context
};

std::string_view to_string(ScoringGranularity g);
ScoringGranularity scoring_granularity_from_string(std::string_view s);

struct NormalizedScore {
  double value = 0.0;
  Normalization mode = Normalization::Sum;
};

NormalizedScore normalize(const LogProbScore& s, Normalization mode);

/// pos - neg. Throws ValidationError when the two were normalized differently.
double pair_score(const NormalizedScore& pos, const NormalizedScore& neg);

/// Both sides of a contrast pair as backend requests.
ScoreRequest positive_request(const ContrastPair& pair, const std::string& model_id,
                              ScoringGranularity granularity);
ScoreRequest negative_request(const ContrastPair& pair, const std::string& model_id,
                              ScoringGranularity granularity);

struct ProbeOptions {
  std::string model_id;
  Normalization normalization = Normalization::Sum;
  ScoringGranularity granularity = ScoringGranularity::Continuation;
  PromptOptions prompt;
  double max_missing_fraction = 0.10;
};

/// Per-cell audit: rows are templates (In, People), columns token pairs 1..5.
struct PairScoreBreakdown {
  std::string country;
  std::string topic;
  Eigen::Matrix<double, 2, 5> positive = Eigen::Matrix<double, 2, 5>::Constant(NAN);
  Eigen::Matrix<double, 2, 5> negative = Eigen::Matrix<double, 2, 5>::Constant(NAN);
  Eigen::Matrix<double, 2, 5> differences = Eigen::Matrix<double, 2, 5>::Constant(NAN);
  Eigen::Vector2d template_means = Eigen::Vector2d::Constant(NAN);
  double final_score = NAN;
  std::optional<std::string> missing_cause;

  bool missing() const { return missing_cause.has_value(); }
};

/// Averages a filled 2x5 difference table: per template, then across the two
/// templates.
void finalize_breakdown(PairScoreBreakdown& b);

/// Scores the 10 contrast pairs of one cell. Any unscoreable pair marks the
/// cell missing with its cause.
PairScoreBreakdown country_topic_score(const std::string& country, const std::string& topic,
                                       ScoringService& service, const PhraseBook& phrases,
                                       const ProbeOptions& options);

struct ModelMatrixResult {
  MoralMatrix matrix;  // unbounded, source_tag = model id
  std::vector<PairScoreBreakdown> breakdown;  // row-major over (country, topic)
  std::size_t missing_cells = 0;
};

/// Scores every (country, topic) cell through the service, batching all
/// requests. Throws BackendError when more than `max_missing_fraction` of the
/// cells could not be scored.
ModelMatrixResult build_model_matrix(const std::vector<std::string>& countries,
                                     const std::vector<std::string>& topics,
                                     ScoringService& service, const PhraseBook& phrases,
                                     const ProbeOptions& options);

/// One row per contrast pair: country,topic,template,pair_id,pos,neg,diff.
std::string breakdown_to_csv(const std::vector<PairScoreBreakdown>& breakdown);

}  // namespace moralprobe
