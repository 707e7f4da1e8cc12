#pragma once

#include "moralprobe/moral_matrix.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe {

enum class VarianceDivisor {
  Population,  // divide by n
  Sample,      // divide by n - 1
};

std::string_view to_string(VarianceDivisor d);
VarianceDivisor variance_divisor_from_string(std::string_view s);

template <typename Derived>
double mean(const Eigen::DenseBase<Derived>& x) {
  return static_cast<double>(x.derived().mean());
}

/// Two-pass variance of a vector expression.
template <typename Derived>
double variance(const Eigen::DenseBase<Derived>& x, VarianceDivisor divisor) {
  const auto n = x.size();
  const double m = static_cast<double>(x.derived().mean());
  const double ss = (x.derived().array().template cast<double>() - m).square().sum();
  return ss / static_cast<double>(divisor == VarianceDivisor::Population ? n : n - 1);
}

struct TopicVarianceProfile {
  std::string topic;
  double variance = 0.0;
  double mean = 0.0;
  int n_countries = 0;
};

/// Variance across countries for one topic. Needs >= 2 finite values.
TopicVarianceProfile topic_variance(std::string topic, const Eigen::Ref<const Eigen::VectorXd>& column,
                                    VarianceDivisor divisor = VarianceDivisor::Population);

/// One profile per topic, in matrix order; missing cells are skipped.
std::vector<TopicVarianceProfile> topic_profiles(const MoralMatrix& m,
                                                 VarianceDivisor divisor = VarianceDivisor::Population);

struct MeanProfile {
  double mean_score = 0.0;
  double mean_variance = 0.0;
};

/// Grand mean over present cells, and the mean of per-topic variances.
MeanProfile mean_profile(const MoralMatrix& m, VarianceDivisor divisor = VarianceDivisor::Population);

struct CorrelationResult {
  double r = 0.0;
  double p = 1.0;
  int n = 0;
};

/// Sample Pearson correlation with a two-sided Student-t p-value (n - 2 df).
CorrelationResult pearson(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y);

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
  std::string positive_class;

  std::int64_t total() const { return tp + fp + fn + tn; }
};

/// Standard definitions; a ratio with a zero denominator is 0 and flagged.
struct ConfusionMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

ConfusionMetrics confusion_metrics(const ConfusionCounts& c);

using Table2x2 = Eigen::Matrix<std::int64_t, 2, 2>;

struct Chi2Result {
  double statistic = 0.0;
  double p = 1.0;
  int df = 1;
  bool correction_applied = false;
};

/// Pearson chi-square test of association on a 2x2 table. Throws
/// ValidationError when a row or column total is zero.
Chi2Result chi2_2x2(const Table2x2& table, bool continuity_correction = false);

enum class RankDirection { MostControversial, MostAgreed };

/// Top-k topics by variance; ties broken by topic name.
std::vector<TopicVarianceProfile> rank_topics(std::span<const TopicVarianceProfile> profiles,
                                              std::size_t k, RankDirection direction);

}  // namespace moralprobe
