#include "moralprobe/stats.hpp"

#include "moralprobe/error.hpp"
#include "moralprobe/special_functions.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace moralprobe {

std::string_view to_string(VarianceDivisor d) { return d == VarianceDivisor::Population ? "population" : "sample"; }

VarianceDivisor variance_divisor_from_string(std::string_view s) {
  if (s == "population" || s == "n") return VarianceDivisor::Population;
  if (s == "sample" || s == "n-1") return VarianceDivisor::Sample;
  throw ValidationError(fmt::format("unknown variance divisor '{}'", s));
}

TopicVarianceProfile topic_variance(std::string topic, const Eigen::Ref<const Eigen::VectorXd>& column,
                                    VarianceDivisor divisor) {
  if (column.size() < 2) {
    throw ValidationError(fmt::format("topic '{}': variance needs at least 2 values, got {}", topic, column.size()));
  }
  if (!column.allFinite()) throw ValidationError(fmt::format("topic '{}': non-finite value", topic));
  TopicVarianceProfile p;
  p.topic = std::move(topic);
  p.mean = mean(column);
  p.variance = variance(column, divisor);
  p.n_countries = static_cast<int>(column.size());
  return p;
}

namespace {

Eigen::VectorXd present_values(const Eigen::Ref<const Eigen::VectorXd>& column) {
  Eigen::VectorXd out(column.size());
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    if (!std::isnan(column[i])) out[n++] = column[i];
  }
  out.conservativeResize(n);
  return out;
}

}  // namespace

std::vector<TopicVarianceProfile> topic_profiles(const MoralMatrix& m, VarianceDivisor divisor) {
  std::vector<TopicVarianceProfile> out;
  out.reserve(m.topics.size());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    out.push_back(topic_variance(m.topics[j], present_values(m.scores.col(j)), divisor));
  }
  return out;
}

MeanProfile mean_profile(const MoralMatrix& m, VarianceDivisor divisor) {
  if (m.empty()) throw ValidationError("mean profile of an empty matrix");
  const auto present = (!m.scores.array().isNaN()).cast<double>();
  const double n = present.sum();
  if (n == 0.0) throw ValidationError("mean profile of a matrix with no present cells");
  MeanProfile p;
  p.mean_score = m.scores.array().isNaN().select(0.0, m.scores.array()).sum() / n;
  const auto profiles = topic_profiles(m, divisor);
  double sum = 0.0;
  for (const auto& t : profiles) sum += t.variance;
  p.mean_variance = sum / static_cast<double>(profiles.size());
  return p;
}

CorrelationResult pearson(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw ValidationError("pearson: vectors differ in length");
  const auto n = x.size();
  if (n < 3) throw ValidationError("pearson: needs at least 3 pairs");
  if (!x.allFinite() || !y.allFinite()) throw ValidationError("pearson: non-finite input");
  const Eigen::VectorXd dx = x.array() - x.mean();
  const Eigen::VectorXd dy = y.array() - y.mean();
  const double sxx = dx.squaredNorm();
  const double syy = dy.squaredNorm();
  if (sxx == 0.0 || syy == 0.0) throw ValidationError("pearson: zero variance, correlation undefined");

  CorrelationResult res;
  res.n = static_cast<int>(n);
  res.r = std::clamp(dx.dot(dy) / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  if (std::fabs(res.r) == 1.0) {
    res.p = 0.0;
  } else {
    const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
    res.p = special::student_t_two_sided_p(t, df);
  }
  return res;
}

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0) throw ValidationError("negative confusion count");
  if (c.total() == 0) throw ValidationError("empty confusion matrix");
  ConfusionMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_undefined = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

Chi2Result chi2_2x2(const Table2x2& table, bool continuity_correction) {
  if ((table.array() < 0).any()) throw ValidationError("chi2: negative count");
  const double n = static_cast<double>(table.sum());
  if (n == 0.0) throw ValidationError("chi2: empty table");
  const Eigen::Vector2d rows = table.rowwise().sum().cast<double>();
  const Eigen::RowVector2d cols = table.colwise().sum().cast<double>();
  if ((rows.array() == 0.0).any() || (cols.array() == 0.0).any()) {
    throw ValidationError("chi2: a row or column total is zero, expected counts undefined");
  }
  Chi2Result res;
  res.correction_applied = continuity_correction;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / n;
      double dev = std::fabs(static_cast<double>(table(i, j)) - expected);
      if (continuity_correction) dev = std::max(0.0, dev - 0.5);
      res.statistic += dev * dev / expected;
    }
  }
  res.p = special::chi2_sf_df1(res.statistic);
  return res;
}

std::vector<TopicVarianceProfile> rank_topics(std::span<const TopicVarianceProfile> profiles, std::size_t k,
                                              RankDirection direction) {
  if (k > profiles.size()) {
    throw ValidationError(fmt::format("rank_topics: k = {} exceeds {} topics", k, profiles.size()));
  }
  std::vector<TopicVarianceProfile> sorted(profiles.begin(), profiles.end());
  std::stable_sort(sorted.begin(), sorted.end(), [direction](const auto& a, const auto& b) {
    if (a.variance != b.variance) {
      return direction == RankDirection::MostControversial ? a.variance > b.variance : a.variance < b.variance;
    }
    return a.topic < b.topic;
  });
  sorted.resize(k);
  return sorted;
}

}  // namespace moralprobe
