#include "moralprobe/methods.hpp"

#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

namespace moralprobe {

// ---------------------------------------------------------------------------
// Variance comparison

namespace {

std::vector<TopicVarianceProfile> profiles_or_throw(const MoralMatrix& m, VarianceDivisor divisor) {
  auto profiles = topic_profiles(m, divisor);
  const bool all_zero = std::all_of(profiles.begin(), profiles.end(),
                                    [](const TopicVarianceProfile& p) { return p.variance == 0.0; });
  if (all_zero) {
    throw ValidationError(fmt::format("'{}' has zero variance on every topic", m.source_tag));
  }
  return profiles;
}

}  // namespace

Method1Report run_method1(const MoralMatrix& survey, const MoralMatrix& model, const Method1Options& options) {
  const auto topics = common_topics(survey, model);
  if (topics.size() < 3) {
    throw ValidationError(fmt::format("variance comparison needs >= 3 common topics, found {}", topics.size()));
  }
  auto aligned = align_matrices(survey, model, topics);
  if (aligned.survey.rows() < 2) {
    throw ValidationError("variance comparison needs >= 2 countries scored by both sources");
  }

  Method1Report rep;
  rep.model_id = model.source_tag;
  rep.survey_id = survey.source_tag;
  rep.dropped_countries = aligned.dropped_countries;

  const auto sp = profiles_or_throw(aligned.survey, options.divisor);
  const auto mp = profiles_or_throw(aligned.model, options.divisor);
  Eigen::VectorXd sv(static_cast<Eigen::Index>(sp.size()));
  Eigen::VectorXd mv(sv.size());
  for (std::size_t t = 0; t < sp.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    sv[i] = sp[t].variance;
    mv[i] = mp[t].variance;
    rep.per_topic.push_back({sp[t].topic, sp[t].variance, sp[t].mean, mp[t].variance, mp[t].mean,
                             sp[t].variance - mp[t].variance});
  }
  rep.correlation = pearson(sv, mv);
  std::stable_sort(rep.per_topic.begin(), rep.per_topic.end(), [](const auto& a, const auto& b) {
    if (a.variance_difference != b.variance_difference) return a.variance_difference > b.variance_difference;
    return a.topic < b.topic;
  });

  rep.survey_profile = mean_profile(aligned.survey, options.divisor);
  rep.model_profile = mean_profile(aligned.model, options.divisor);
  rep.survey_controversial = rank_topics(sp, options.k_rank, RankDirection::MostControversial);
  rep.survey_agreed = rank_topics(sp, options.k_rank, RankDirection::MostAgreed);
  rep.model_controversial = rank_topics(mp, options.k_rank, RankDirection::MostControversial);
  rep.model_agreed = rank_topics(mp, options.k_rank, RankDirection::MostAgreed);
  return rep;
}

// ---------------------------------------------------------------------------
// Cluster alignment

std::string_view to_string(TopicSubset s) {
  switch (s) {
    case TopicSubset::All: return "all";
    case TopicSubset::Controversial: return "controversial";
    case TopicSubset::Agreed: return "agreed";
  }
  return "all";
}

TopicSubset topic_subset_from_string(std::string_view s) {
  if (s == "all") return TopicSubset::All;
  if (s == "controversial") return TopicSubset::Controversial;
  if (s == "agreed") return TopicSubset::Agreed;
  throw ValidationError(fmt::format("unknown topic subset '{}'", s));
}

std::vector<std::string> subset_topics(const MoralMatrix& survey, TopicSubset subset, std::size_t k_topics,
                                       VarianceDivisor divisor) {
  if (subset == TopicSubset::All) return survey.topics;
  const auto profiles = topic_profiles(survey, divisor);
  const auto ranked = rank_topics(profiles, k_topics,
                                  subset == TopicSubset::Controversial ? RankDirection::MostControversial
                                                                       : RankDirection::MostAgreed);
  std::vector<std::string> out;
  for (const auto& p : ranked) out.push_back(p.topic);
  return out;
}

Method2Report run_method2(const MoralMatrix& survey, const MoralMatrix& model, TopicSubset subset,
                          const Method2Options& options) {
  const auto countries = common_countries(survey, model);
  if (countries.size() < 4) {
    throw ValidationError(fmt::format("cluster alignment needs >= 4 common countries, found {}", countries.size()));
  }
  // Topics are ranked on the survey restricted to the shared countries and topics.
  const auto shared = restrict_to(survey, countries, common_topics(survey, model));
  auto topics = subset_topics(shared, subset, options.k_topics, options.divisor);
  if (topics.size() < 2) {
    throw ValidationError(fmt::format("topic subset '{}' leaves {} topics, need >= 2", to_string(subset),
                                      topics.size()));
  }
  auto aligned = align_matrices(survey, model, topics);
  if (aligned.survey.rows() < 4) {
    throw ValidationError("cluster alignment needs >= 4 countries scored by both sources");
  }

  Method2Report rep;
  rep.model_id = model.source_tag;
  rep.survey_id = survey.source_tag;
  rep.subset = subset;
  rep.topics = std::move(topics);
  rep.dropped_countries = aligned.dropped_countries;

  const auto sel = select_k_silhouette(aligned.survey.scores, options.k_min, options.k_max, options.kmeans);
  rep.k_used = sel.k;
  rep.k_range_flagged = sel.flagged;
  rep.silhouette_curve = sel.curve;
  rep.survey_clusters = kmeans(aligned.survey.scores, sel.k, options.kmeans, aligned.survey.countries);
  rep.model_clusters = kmeans(aligned.model.scores, sel.k, options.kmeans, aligned.model.countries);
  rep.ari = ari(rep.survey_clusters, rep.model_clusters);
  const auto a = ami(rep.survey_clusters, rep.model_clusters);
  rep.ami = a.value;
  rep.ami_flagged = a.flagged;
  rep.cas = cas(rep.ari, rep.ami);
  return rep;
}

// ---------------------------------------------------------------------------
// Direct comparative probing

std::string_view to_string(PairLabel l) { return l == PairLabel::Similar ? "SIMILAR" : "DIFFERENT"; }

std::uint64_t topic_seed(std::uint64_t master_seed, std::string_view topic) {
  return splitmix64(master_seed ^ digest64(topic));
}

namespace {

struct PendingPair {
  ProbeTrialRecord record;
  std::size_t first_request = 0;  // 3 similar requests, then 3 different ones
};

// Two distinct members, by partial Fisher-Yates.
std::pair<std::size_t, std::size_t> draw_two(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  return {idx[0], idx[1]};
}

}  // namespace

Method3Report run_method3(const MoralMatrix& survey, ScoringService& service, const PhraseBook& phrases,
                          const std::string& model_id, const Method3Options& options) {
  survey.validate();
  if (options.trials < 1) throw ValidationError("method 3 needs at least one trial");

  PhraseBook book = phrases;
  book.add_known_countries(survey.countries);

  Method3Report rep;
  rep.model_id = model_id;
  rep.survey_id = survey.source_tag;
  rep.confusion.positive_class = std::string(to_string(PairLabel::Similar));

  std::vector<PendingPair> pending;
  std::vector<ScoreRequest> requests;

  for (Eigen::Index t = 0; t < survey.cols(); ++t) {
    const std::string& topic = survey.topics[static_cast<std::size_t>(t)];
    TopicProbeSummary summary;
    summary.topic = topic;
    summary.seed = topic_seed(options.seed, topic);

    std::vector<std::string> items;
    std::vector<double> vals;
    for (Eigen::Index c = 0; c < survey.rows(); ++c) {
      if (survey.is_missing(c, t)) continue;
      items.push_back(survey.countries[static_cast<std::size_t>(c)]);
      vals.push_back(survey.scores(c, t));
    }
    const Eigen::Map<const Eigen::VectorXd> values(vals.data(), static_cast<Eigen::Index>(vals.size()));

    auto skip = [&](std::string reason) {
      summary.skipped = true;
      summary.skip_reason = std::move(reason);
      rep.topics.push_back(summary);
    };
    if (items.size() < 4) {
      skip(fmt::format("only {} countries with scores", items.size()));
      continue;
    }
    KSelection sel;
    try {
      sel = elbow_k(values, options.k_min, options.k_max, options.linkage);
    } catch (const ValidationError& e) {
      skip(e.what());
      continue;
    }
    summary.k = sel.k;
    summary.elbow_flagged = sel.flagged;
    if (sel.k < 2) {
      skip("elbow selected a single cluster");
      continue;
    }
    const auto assignment = agglomerative_1d(values, sel.k, options.linkage, items);
    const auto pair = most_differing_pair(assignment, values);
    summary.cluster_a = pair.first;
    summary.cluster_b = pair.second;
    for (Eigen::Index i = 0; i < assignment.labels.size(); ++i) {
      if (assignment.labels[i] == pair.first) summary.members_a.push_back(items[static_cast<std::size_t>(i)]);
      if (assignment.labels[i] == pair.second) summary.members_b.push_back(items[static_cast<std::size_t>(i)]);
    }
    if (summary.members_a.size() < 2 || summary.members_b.size() < 2) {
      skip("a selected cluster has fewer than 2 countries");
      continue;
    }

    const std::string topic_text = book.topic_phrase(topic);
    std::mt19937_64 rng(summary.seed);
    for (int trial = 0; trial < options.trials; ++trial) {
      const auto [a1, a2] = draw_two(rng, summary.members_a.size());
      const auto [b1, b2] = draw_two(rng, summary.members_b.size());
      const auto& A = summary.members_a;
      const auto& B = summary.members_b;
      const std::array<std::tuple<std::string, std::string, PairLabel>, 4> pairs{{
          {A[a1], A[a2], PairLabel::Similar},
          {B[b1], B[b2], PairLabel::Similar},
          {A[a1], B[b1], PairLabel::Different},
          {A[a2], B[b2], PairLabel::Different},
      }};
      for (const auto& [x, y, label] : pairs) {
        PendingPair p;
        p.record.topic = topic;
        p.record.country_a = x;
        p.record.country_b = y;
        p.record.empirical = label;
        p.record.trial_index = trial;
        p.record.seed = summary.seed;
        p.first_request = requests.size();
        const auto rendered =
            render_comparative_pairs(topic_text, book.country_display(x), book.country_display(y), options.prompt);
        for (const auto& cp : rendered) requests.push_back(positive_request(cp, model_id, options.granularity));
        for (const auto& cp : rendered) requests.push_back(negative_request(cp, model_id, options.granularity));
        pending.push_back(std::move(p));
        if (label == PairLabel::Similar) {
          ++summary.intra_pairs;
        } else {
          ++summary.inter_pairs;
        }
      }
    }
    rep.topics.push_back(std::move(summary));
  }

  if (pending.empty()) throw ValidationError("comparative probing skipped every topic");

  const auto outcomes = service.score_batch(requests);
  std::string first_error;
  for (auto& p : pending) {
    bool ok = true;
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& o = outcomes[p.first_request + i];
      if (!o.ok()) {
        ok = false;
        if (first_error.empty()) first_error = o.error;
      }
    }
    if (!ok) {
      ++rep.failed_pairs;
      continue;
    }
    auto& r = p.record;
    for (std::size_t i = 0; i < 3; ++i) {
      r.similar_logprobs[i] = normalize(*outcomes[p.first_request + i].score, options.normalization).value;
      r.different_logprobs[i] = normalize(*outcomes[p.first_request + 3 + i].score, options.normalization).value;
    }
    r.mean_logprob_similar = (r.similar_logprobs[0] + r.similar_logprobs[1] + r.similar_logprobs[2]) / 3.0;
    r.mean_logprob_different = (r.different_logprobs[0] + r.different_logprobs[1] + r.different_logprobs[2]) / 3.0;
    r.tie = r.mean_logprob_similar == r.mean_logprob_different;
    r.model = r.mean_logprob_similar > r.mean_logprob_different ? PairLabel::Similar : PairLabel::Different;
    if (r.tie) ++rep.tie_count;

    const bool emp_sim = r.empirical == PairLabel::Similar;
    const bool mod_sim = r.model == PairLabel::Similar;
    if (emp_sim && mod_sim) ++rep.confusion.tp;
    if (!emp_sim && mod_sim) ++rep.confusion.fp;
    if (emp_sim && !mod_sim) ++rep.confusion.fn;
    if (!emp_sim && !mod_sim) ++rep.confusion.tn;
    rep.trials.push_back(std::move(r));
  }

  if (static_cast<double>(rep.failed_pairs) > 0.10 * static_cast<double>(pending.size())) {
    throw BackendError(fmt::format("{} of {} country pairs could not be scored: {}", rep.failed_pairs,
                                   pending.size(), first_error),
                       false);
  }

  rep.metrics = confusion_metrics(rep.confusion);
  Table2x2 table;
  table << rep.confusion.tp, rep.confusion.fn, rep.confusion.fp, rep.confusion.tn;
  const bool empty_margin = (table.rowwise().sum().array() == 0).any() || (table.colwise().sum().array() == 0).any();
  if (empty_margin) {
    rep.chi2_note = "chi-square omitted: a row or column of the table is empty";
  } else {
    rep.chi2 = chi2_2x2(table, options.chi2_correction);
  }
  return rep;
}

}  // namespace moralprobe
