#include "moralprobe/bundle.hpp"

#include "moralprobe/csv.hpp"
#include "moralprobe/digest.hpp"
#include "moralprobe/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace moralprobe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json profile_json(const TopicVarianceProfile& p) {
  return {{"topic", p.topic}, {"variance", number(p.variance)}, {"mean", number(p.mean)},
          {"n_countries", p.n_countries}};
}

json profiles_json(const std::vector<TopicVarianceProfile>& ps) {
  json a = json::array();
  for (const auto& p : ps) a.push_back(profile_json(p));
  return a;
}

json assignment_json(const ClusterAssignment& a) {
  json rows = json::array();
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    rows.push_back({{"country", a.items[i]}, {"label", a.labels[static_cast<Eigen::Index>(i)]}});
  }
  return {{"algorithm", std::string(to_string(a.algorithm))},
          {"k", a.k},
          {"seed", a.seed},
          {"inertia", number(a.inertia)},
          {"labels", rows}};
}

std::string f3(double v) { return std::isfinite(v) ? fmt::format("{:.3f}", v) : "n/a"; }
std::string f4(double v) { return std::isfinite(v) ? fmt::format("{:.4f}", v) : "n/a"; }

double num(const json& j) { return j.is_number() ? j.get<double>() : NAN; }

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string to_json(const Method1Report& r) {
  json j;
  j["schema"] = kReportSchema;
  j["method"] = "variance_comparison";
  j["model_id"] = r.model_id;
  j["survey_id"] = r.survey_id;
  j["correlation"] = {{"r", number(r.correlation.r)}, {"p", number(r.correlation.p)}, {"n", r.correlation.n}};
  j["survey_profile"] = {{"mean_score", number(r.survey_profile.mean_score)},
                         {"mean_variance", number(r.survey_profile.mean_variance)}};
  j["model_profile"] = {{"mean_score", number(r.model_profile.mean_score)},
                        {"mean_variance", number(r.model_profile.mean_variance)}};
  json rows = json::array();
  for (const auto& t : r.per_topic) {
    rows.push_back({{"topic", t.topic},
                    {"survey_variance", number(t.survey_variance)},
                    {"survey_mean", number(t.survey_mean)},
                    {"model_variance", number(t.model_variance)},
                    {"model_mean", number(t.model_mean)},
                    {"variance_difference", number(t.variance_difference)}});
  }
  j["per_topic"] = rows;
  j["rankings"] = {{"survey", {{"controversial", profiles_json(r.survey_controversial)},
                               {"agreed", profiles_json(r.survey_agreed)}}},
                   {"model", {{"controversial", profiles_json(r.model_controversial)},
                              {"agreed", profiles_json(r.model_agreed)}}}};
  j["dropped_countries"] = r.dropped_countries;
  return j.dump(2) + "\n";
}

std::string to_json(const Method2Report& r) {
  json j;
  j["schema"] = kReportSchema;
  j["method"] = "cluster_alignment";
  j["model_id"] = r.model_id;
  j["survey_id"] = r.survey_id;
  j["subset"] = std::string(to_string(r.subset));
  j["topics"] = r.topics;
  j["k_used"] = r.k_used;
  j["k_range_flagged"] = r.k_range_flagged;
  json curve = json::array();
  for (const auto& [k, s] : r.silhouette_curve) curve.push_back({{"k", k}, {"silhouette", number(s)}});
  j["silhouette_curve"] = curve;
  j["ari"] = number(r.ari);
  j["ami"] = number(r.ami);
  j["cas"] = number(r.cas);
  j["ami_flagged"] = r.ami_flagged;
  j["survey_clusters"] = assignment_json(r.survey_clusters);
  j["model_clusters"] = assignment_json(r.model_clusters);
  j["dropped_countries"] = r.dropped_countries;
  return j.dump(2) + "\n";
}

std::string to_json(const Method3Report& r) {
  json j;
  j["schema"] = kReportSchema;
  j["method"] = "comparative_probing";
  j["model_id"] = r.model_id;
  j["survey_id"] = r.survey_id;
  j["positive_class"] = r.confusion.positive_class;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  j["metrics"] = {{"accuracy", number(r.metrics.accuracy)},
                  {"precision", number(r.metrics.precision)},
                  {"recall", number(r.metrics.recall)},
                  {"f1", number(r.metrics.f1)},
                  {"precision_undefined", r.metrics.precision_undefined},
                  {"recall_undefined", r.metrics.recall_undefined},
                  {"f1_undefined", r.metrics.f1_undefined}};
  if (r.chi2) {
    j["chi2"] = {{"statistic", number(r.chi2->statistic)},
                 {"p", number(r.chi2->p)},
                 {"df", r.chi2->df},
                 {"correction_applied", r.chi2->correction_applied}};
  } else {
    j["chi2"] = nullptr;
  }
  j["chi2_note"] = r.chi2_note;
  j["tie_count"] = r.tie_count;
  j["failed_pairs"] = r.failed_pairs;
  json topics = json::array();
  for (const auto& t : r.topics) {
    topics.push_back({{"topic", t.topic},
                      {"k", t.k},
                      {"elbow_flagged", t.elbow_flagged},
                      {"cluster_a", t.cluster_a},
                      {"cluster_b", t.cluster_b},
                      {"members_a", t.members_a},
                      {"members_b", t.members_b},
                      {"seed", t.seed},
                      {"intra_pairs", t.intra_pairs},
                      {"inter_pairs", t.inter_pairs},
                      {"skipped", t.skipped},
                      {"skip_reason", t.skip_reason}});
  }
  j["topics"] = topics;
  json trials = json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"topic", t.topic},
                      {"trial_index", t.trial_index},
                      {"country_a", t.country_a},
                      {"country_b", t.country_b},
                      {"empirical_label", std::string(to_string(t.empirical))},
                      {"model_label", std::string(to_string(t.model))},
                      {"mean_logprob_similar", number(t.mean_logprob_similar)},
                      {"mean_logprob_different", number(t.mean_logprob_different)},
                      {"seed", t.seed},
                      {"tie", t.tie}});
  }
  j["trials"] = trials;
  return j.dump(2) + "\n";
}

std::string to_json(const IngestMetadata& m) {
  json j;
  j["schema"] = kReportSchema;
  j["kind"] = "ingest";
  j["source_tag"] = m.source_tag;
  j["source"] = std::string(to_string(m.source));
  j["nonresponse"] = std::string(to_string(m.nonresponse));
  j["input_rows"] = m.input_rows;
  j["used_rows"] = m.used_rows;
  j["clamped_cells"] = m.clamped_cells;
  j["missing_cells"] = m.missing_cells;
  j["rows_per_country"] = m.rows_per_country;
  j["dropped_topics"] = m.dropped_topics;
  j["warnings"] = m.warnings;
  return j.dump(2) + "\n";
}

std::string distribution_csv(const MoralMatrix& m, int bins) {
  if (bins < 1) throw ValidationError("distribution needs at least one bin");
  std::vector<double> vals;
  for (Eigen::Index i = 0; i < m.scores.size(); ++i) {
    if (!std::isnan(m.scores.data()[i])) vals.push_back(m.scores.data()[i]);
  }
  double lo = -1.0, hi = 1.0;
  if (!m.bounded && !vals.empty()) {
    lo = *std::min_element(vals.begin(), vals.end());
    hi = *std::max_element(vals.begin(), vals.end());
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  const double width = (hi - lo) / bins;
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (double v : vals) {
    auto b = static_cast<long>(std::floor((v - lo) / width));
    b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  std::string out = "bin_lo,bin_hi,count\n";
  for (int b = 0; b < bins; ++b) {
    out += fmt::format("{:.4f},{:.4f},{}\n", lo + b * width, lo + (b + 1) * width, counts[static_cast<std::size_t>(b)]);
  }
  return out;
}

std::string spread_csv(const MoralMatrix& m) {
  std::string out = "topic,n,mean,variance,min,q1,median,q3,max\n";
  for (Eigen::Index t = 0; t < m.cols(); ++t) {
    std::vector<double> v;
    for (Eigen::Index c = 0; c < m.rows(); ++c) {
      if (!m.is_missing(c, t)) v.push_back(m.scores(c, t));
    }
    const auto& topic = m.topics[static_cast<std::size_t>(t)];
    if (v.empty()) {
      out += csv::quote(topic) + ",0,,,,,,,\n";
      continue;
    }
    std::sort(v.begin(), v.end());
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv::quote(topic), v.size(), mean(x),
                       variance(x, VarianceDivisor::Population), v.front(), quantile(v, 0.25), quantile(v, 0.5),
                       quantile(v, 0.75), v.back());
  }
  return out;
}

std::string variance_scatter_csv(const Method1Report& r) {
  std::string out = "topic,survey_variance,model_variance\n";
  for (const auto& t : r.per_topic) {
    out += fmt::format("{},{},{}\n", csv::quote(t.topic), t.survey_variance, t.model_variance);
  }
  return out;
}

std::string trials_csv(const Method3Report& r) {
  std::string out =
      "topic,trial_index,country_a,country_b,empirical_label,model_label,mean_logprob_similar,"
      "mean_logprob_different,tie,seed\n";
  for (const auto& t : r.trials) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", csv::quote(t.topic), t.trial_index, csv::quote(t.country_a),
                       csv::quote(t.country_b), to_string(t.empirical), to_string(t.model), t.mean_logprob_similar,
                       t.mean_logprob_different, t.tie ? 1 : 0, t.seed);
  }
  return out;
}

std::string assignment_csv(const ClusterAssignment& a) {
  std::string out = "country,label\n";
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    out += fmt::format("{},{}\n", csv::quote(a.items[i]), a.labels[static_cast<Eigen::Index>(i)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::string Manifest::to_json() const {
  json j;
  j["schema"] = kManifestSchema;
  j["files"] = files;
  j["volatile"] = volatile_files;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(std::string_view text) {
  Manifest m;
  try {
    const auto j = json::parse(text);
    if (j.value("schema", "") != kManifestSchema) throw CorruptStateError("manifest has an unknown schema");
    m.files = j.at("files").get<std::map<std::string, std::string>>();
    m.volatile_files = j.value("volatile", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw CorruptStateError(fmt::format("manifest is unreadable: {}", e.what()));
  }
  return m;
}

std::vector<std::string> Manifest::verify(const fs::path& root) const {
  std::vector<std::string> bad;
  for (const auto& [rel, digest] : files) {
    const auto p = root / rel;
    if (!fs::is_regular_file(p) || sha256_file(p) != digest) bad.push_back(rel);
  }
  return bad;
}

Manifest build_manifest(const fs::path& root, const std::vector<std::string>& volatile_files) {
  Manifest m;
  m.volatile_files = volatile_files;
  std::sort(m.volatile_files.begin(), m.volatile_files.end());
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root).generic_string();
    if (rel == "manifest.json" || rel == "summary.md" || rel == ".lock" || rel.starts_with("cache/")) continue;
    if (std::find(volatile_files.begin(), volatile_files.end(), rel) != volatile_files.end()) continue;
    m.files[rel] = sha256_file(entry.path());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Summary

namespace {

void summarize_method1(std::string& out, const json& j) {
  out += fmt::format("### Variance comparison: {} vs {}\n\n", j.at("survey_id").get<std::string>(),
                     j.at("model_id").get<std::string>());
  const auto& c = j.at("correlation");
  out += fmt::format("Pearson r={} (p={}, n={} topics)\n\n", f3(num(c.at("r"))), f3(num(c.at("p"))),
                     c.at("n").get<int>());
  out += "| source | mean score | mean variance |\n|---|---|---|\n";
  out += fmt::format("| {} | {} | {} |\n", j.at("survey_id").get<std::string>(),
                     f4(num(j.at("survey_profile").at("mean_score"))),
                     f4(num(j.at("survey_profile").at("mean_variance"))));
  out += fmt::format("| {} | {} | {} |\n\n", j.at("model_id").get<std::string>(),
                     f4(num(j.at("model_profile").at("mean_score"))), f4(num(j.at("model_profile").at("mean_variance"))));
  out += "| topic | survey variance | model variance | difference |\n|---|---|---|---|\n";
  for (const auto& t : j.at("per_topic")) {
    out += fmt::format("| {} | {} | {} | {} |\n", t.at("topic").get<std::string>(), f3(num(t.at("survey_variance"))),
                       f3(num(t.at("model_variance"))), f3(num(t.at("variance_difference"))));
  }
  out += "\n";
  for (const char* source : {"survey", "model"}) {
    for (const char* dir : {"controversial", "agreed"}) {
      out += fmt::format("Most {} ({}): ", dir, source);
      std::vector<std::string> parts;
      for (const auto& p : j.at("rankings").at(source).at(dir)) {
        parts.push_back(fmt::format("{} ({})", p.at("topic").get<std::string>(), f3(num(p.at("variance")))));
      }
      out += fmt::format("{}\n\n", fmt::join(parts, "; "));
    }
  }
}

void summarize_method2(std::string& out, const json& j) {
  out += fmt::format("### Cluster alignment ({} topics): {} vs {}\n\n", j.at("subset").get<std::string>(),
                     j.at("survey_id").get<std::string>(), j.at("model_id").get<std::string>());
  out += fmt::format("Topics: {}\n\n", fmt::join(j.at("topics").get<std::vector<std::string>>(), "; "));
  out += "| K | ARI | AMI | CAS |\n|---|---|---|---|\n";
  out += fmt::format("| {}{} | {} | {}{} | {} |\n\n", j.at("k_used").get<int>(),
                     j.at("k_range_flagged").get<bool>() ? " (range clipped)" : "", f3(num(j.at("ari"))),
                     f3(num(j.at("ami"))), j.at("ami_flagged").get<bool>() ? " (degenerate)" : "",
                     f3(num(j.at("cas"))));
}

void summarize_method3(std::string& out, const json& j) {
  out += fmt::format("### Comparative probing: {} vs {}\n\n", j.at("survey_id").get<std::string>(),
                     j.at("model_id").get<std::string>());
  const auto& c = j.at("confusion");
  const auto& m = j.at("metrics");
  out += fmt::format("Positive class: {}\n\n", j.at("positive_class").get<std::string>());
  out += "| | model SIMILAR | model DIFFERENT |\n|---|---|---|\n";
  out += fmt::format("| empirical SIMILAR | {} | {} |\n", c.at("tp").get<long>(), c.at("fn").get<long>());
  out += fmt::format("| empirical DIFFERENT | {} | {} |\n\n", c.at("fp").get<long>(), c.at("tn").get<long>());
  out += "| accuracy | precision | recall | F1 |\n|---|---|---|---|\n";
  out += fmt::format("| {} | {} | {} | {} |\n\n", f3(num(m.at("accuracy"))), f3(num(m.at("precision"))),
                     f3(num(m.at("recall"))), f3(num(m.at("f1"))));
  if (j.at("chi2").is_null()) {
    out += fmt::format("Chi-square: {}\n\n", j.at("chi2_note").get<std::string>());
  } else {
    out += fmt::format("Chi-square: {} (p={}, df={})\n\n", f3(num(j.at("chi2").at("statistic"))),
                       f3(num(j.at("chi2").at("p"))), j.at("chi2").at("df").get<int>());
  }
  std::size_t skipped = 0;
  for (const auto& t : j.at("topics")) skipped += t.at("skipped").get<bool>() ? 1 : 0;
  out += fmt::format("Trials: {} pair judgments, {} ties, {} topics skipped, {} failed pairs\n\n",
                     j.at("trials").size(), j.at("tie_count").get<std::size_t>(), skipped,
                     j.at("failed_pairs").get<std::size_t>());
}

}  // namespace

std::string render_summary(const fs::path& root, const Manifest& manifest) {
  std::string out = "# moralprobe summary\n\n";
  std::size_t reports = 0;
  for (const auto& [rel, digest] : manifest.files) {
    if (!rel.starts_with("reports/") || !rel.ends_with(".json")) continue;
    json j;
    try {
      j = json::parse(read_text(root / rel));
    } catch (const json::exception& e) {
      throw CorruptStateError(fmt::format("report '{}' is unreadable: {}", rel, e.what()));
    }
    if (j.value("schema", "") != kReportSchema) throw CorruptStateError(fmt::format("'{}': unknown schema", rel));
    const auto method = j.value("method", "");
    out += fmt::format("<!-- source: {} -->\n", rel);
    if (method == "variance_comparison") {
      summarize_method1(out, j);
    } else if (method == "cluster_alignment") {
      summarize_method2(out, j);
    } else if (method == "comparative_probing") {
      summarize_method3(out, j);
    } else {
      throw CorruptStateError(fmt::format("'{}': unknown method '{}'", rel, method));
    }
    ++reports;
  }
  if (reports == 0) throw ValidationError("bundle contains no reports");
  return out;
}

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError(fmt::format("write to '{}' failed", path.string()));
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot read '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace moralprobe
