#pragma once

#include "moralprobe/cluster.hpp"
#include "moralprobe/model_matrix.hpp"
#include "moralprobe/moral_matrix.hpp"
#include "moralprobe/prompts.hpp"
#include "moralprobe/scoring.hpp"
#include "moralprobe/stats.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace moralprobe {

// ---------------------------------------------------------------------------
// Variance comparison

struct TopicVarianceRow {
  std::string topic;
  double survey_variance = 0.0;
  double survey_mean = 0.0;
  double model_variance = 0.0;
  double model_mean = 0.0;
  double variance_difference = 0.0;  // survey - model
};

struct Method1Options {
  VarianceDivisor divisor = VarianceDivisor::Population;
  std::size_t k_rank = 3;
};

struct Method1Report {
  std::string model_id;
  std::string survey_id;
  CorrelationResult correlation;
  MeanProfile survey_profile;
  MeanProfile model_profile;
  std::vector<TopicVarianceRow> per_topic;  // variance_difference descending
  std::vector<TopicVarianceProfile> survey_controversial;
  std::vector<TopicVarianceProfile> survey_agreed;
  std::vector<TopicVarianceProfile> model_controversial;
  std::vector<TopicVarianceProfile> model_agreed;
  std::vector<std::string> dropped_countries;
};

/// Correlates per-topic cross-country variances of the two sources over
/// their common countries and topics.
Method1Report run_method1(const MoralMatrix& survey, const MoralMatrix& model,
                          const Method1Options& options = {});

// ---------------------------------------------------------------------------
// Cluster alignment

enum class TopicSubset { All, Controversial, Agreed };

std::string_view to_string(TopicSubset s);
TopicSubset topic_subset_from_string(std::string_view s);

struct Method2Options {
  std::size_t k_topics = 3;
  int k_min = 2;
  int k_max = 10;
  KMeansOptions kmeans;
  VarianceDivisor divisor = VarianceDivisor::Population;
};

struct Method2Report {
  std::string model_id;
  std::string survey_id;
  TopicSubset subset = TopicSubset::All;
  std::vector<std::string> topics;
  int k_used = 0;
  bool k_range_flagged = false;
  std::vector<std::pair<int, double>> silhouette_curve;
  double ari = 0.0;
  double ami = 0.0;
  double cas = 0.0;
  bool ami_flagged = false;
  ClusterAssignment survey_clusters;
  ClusterAssignment model_clusters;
  std::vector<std::string> dropped_countries;
};

/// Topics for a subset, chosen by survey variance ranking.
std::vector<std::string> subset_topics(const MoralMatrix& survey, TopicSubset subset,
                                       std::size_t k_topics, VarianceDivisor divisor);

/// K is picked by silhouette on the survey clustering and reused for the
/// model clustering.
Method2Report run_method2(const MoralMatrix& survey, const MoralMatrix& model, TopicSubset subset,
                          const Method2Options& options = {});

// ---------------------------------------------------------------------------
// Direct comparative probing

enum class PairLabel { Similar, Different };

std::string_view to_string(PairLabel l);

struct ProbeTrialRecord {
  std::string topic;
  std::string country_a;
  std::string country_b;
  PairLabel empirical = PairLabel::Similar;
  PairLabel model = PairLabel::Different;
  double mean_logprob_similar = 0.0;
  double mean_logprob_different = 0.0;
  std::array<double, 3> similar_logprobs{};
  std::array<double, 3> different_logprobs{};
  int trial_index = 0;
  std::uint64_t seed = 0;
  bool tie = false;
};

struct TopicProbeSummary {
  std::string topic;
  int k = 0;
  bool elbow_flagged = false;
  int cluster_a = -1;
  int cluster_b = -1;
  std::vector<std::string> members_a;
  std::vector<std::string> members_b;
  std::uint64_t seed = 0;
  std::size_t intra_pairs = 0;
  std::size_t inter_pairs = 0;
  bool skipped = false;
  std::string skip_reason;
};

struct Method3Options {
  int trials = 50;
  std::uint64_t seed = 42;
  int k_min = 1;
  int k_max = 10;
  Linkage linkage = Linkage::Ward;
  Normalization normalization = Normalization::Sum;
  ScoringGranularity granularity = ScoringGranularity::Continuation;
  PromptOptions prompt;
  bool chi2_correction = false;
};

struct Method3Report {
  std::string model_id;
  std::string survey_id;
  ConfusionCounts confusion;  // positive class SIMILAR
  ConfusionMetrics metrics;
  std::optional<Chi2Result> chi2;
  std::string chi2_note;
  std::vector<TopicProbeSummary> topics;
  std::vector<ProbeTrialRecord> trials;
  std::size_t tie_count = 0;
  std::size_t failed_pairs = 0;
};

/// Seed of one topic's sampling stream.
std::uint64_t topic_seed(std::uint64_t master_seed, std::string_view topic);

/// Per topic: agglomerative clustering of the survey column with elbow K, the
/// two most differing clusters, then `trials` draws of 2 + 2 countries giving
/// 2 intra- and 2 inter-cluster pairs each. All pairs are pooled into one
/// confusion matrix and one chi-square test.
Method3Report run_method3(const MoralMatrix& survey, ScoringService& service,
                          const PhraseBook& phrases, const std::string& model_id,
                          const Method3Options& options = {});

}  // namespace moralprobe
