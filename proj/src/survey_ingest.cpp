#include "moralprobe/survey_ingest.hpp"

#include "moralprobe/csv.hpp"
#include "moralprobe/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

namespace moralprobe {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  // Exports sometimes carry "7.0".
  if (s.size() > 2 && s.substr(s.size() - 2) == ".0") s.remove_suffix(2);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// Label text -> PEW code, for exports that carry value labels.
std::optional<int> pew_label_code(std::string_view label) {
  const std::string l = lower(trim(label));
  if (l == "morally acceptable") return 1;
  if (l == "morally unacceptable") return 2;
  if (l == "not a moral issue") return 3;
  if (l.rfind("depends", 0) == 0) return 4;
  if (l == "don't know" || l == "dk" || l == "don't know/refused" || l == "dk/refused") return 8;
  if (l == "refused") return 9;
  return std::nullopt;
}

}  // namespace

std::string_view to_string(SurveySource s) { return s == SurveySource::WVS ? "wvs" : "pew"; }

SurveySource survey_source_from_string(std::string_view s) {
  const auto l = lower(s);
  if (l == "wvs") return SurveySource::WVS;
  if (l == "pew") return SurveySource::PEW;
  throw ValidationError(fmt::format("unknown survey source '{}'", s));
}

std::string_view to_string(NonResponsePolicy p) {
  return p == NonResponsePolicy::ZeroReplace ? "zero_replace" : "exclude";
}

NonResponsePolicy nonresponse_policy_from_string(std::string_view s) {
  if (s == "zero_replace") return NonResponsePolicy::ZeroReplace;
  if (s == "exclude") return NonResponsePolicy::Exclude;
  throw ValidationError(fmt::format("unknown non-response policy '{}'", s));
}

CountryMap::CountryMap(std::map<std::string, std::string> entries) {
  for (auto& [code, name] : entries) {
    if (code.empty() || name.empty()) throw ValidationError("country map entries must be non-empty");
    names_.insert(name);
    entries_.emplace(code, name);
  }
}

CountryMap CountryMap::read(const std::filesystem::path& path, char delim, std::string_view code_column,
                            std::string_view name_column) {
  const auto table = csv::read(path, delim);
  const auto ci = table.column(code_column);
  const auto ni = table.column(name_column);
  if (ci < 0 || ni < 0) {
    throw ValidationError(fmt::format("{}: needs columns '{}' and '{}'", path.string(), code_column, name_column));
  }
  std::map<std::string, std::string> entries;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto code = trim(table.rows[r][ci]);
    auto name = trim(table.rows[r][ni]);
    if (code.empty() || name.empty()) {
      throw ValidationError(fmt::format("{}:{}: empty code or name", path.string(), table.line_numbers[r]));
    }
    if (!entries.emplace(code, name).second) {
      throw ValidationError(fmt::format("{}:{}: duplicate code {}", path.string(), table.line_numbers[r], code));
    }
  }
  return CountryMap(std::move(entries));
}

bool CountryMap::contains_code(std::string_view code) const { return entries_.find(code) != entries_.end(); }
bool CountryMap::contains_name(std::string_view name) const { return names_.find(name) != names_.end(); }

const std::string& CountryMap::name(std::string_view code) const {
  auto it = entries_.find(code);
  if (it == entries_.end()) throw ValidationError(fmt::format("unknown country code '{}'", code));
  return it->second;
}

SurveyLayout SurveyLayout::wvs_wave7() {
  SurveyLayout l;
  l.country_column = "B_COUNTRY";
  l.questions = {
      {"Q177", "Claiming government benefits to which you are not entitled"},
      {"Q178", "Avoiding a fare on public transport"},
      {"Q179", "Stealing property"},
      {"Q180", "Cheating on taxes if you have a chance"},
      {"Q181", "Someone accepting a bribe in the course of their duties"},
      {"Q182", "Homosexuality"},
      {"Q183", "Prostitution"},
      {"Q184", "Abortion"},
      {"Q185", "Divorce"},
      {"Q186", "Sex before marriage"},
      {"Q187", "Suicide"},
      {"Q188", "Euthanasia"},
      {"Q189", "For a man to beat his wife"},
      {"Q190", "Parents beating children"},
      {"Q191", "Violence against other people"},
      {"Q192", "Terrorism as a political, ideological or religious mean"},
      {"Q193", "Having casual sex"},
      {"Q194", "Political violence"},
      {"Q195", "Death penalty"},
  };
  return l;
}

SurveyLayout SurveyLayout::pew_2013() {
  SurveyLayout l;
  l.country_column = "COUNTRY";
  l.country_column_has_names = true;
  l.questions = {
      {"Q84A", "Using contraceptives"},
      {"Q84B", "Getting a divorce"},
      {"Q84C", "Having an abortion"},
      {"Q84D", "Homosexuality"},
      {"Q84E", "Drinking alcohol"},
      {"Q84F", "Married people having an affair"},
      {"Q84G", "Gambling"},
      {"Q84H", "Sex between unmarried adults"},
  };
  return l;
}

bool is_wvs_nonresponse(int answer) { return answer == -1 || answer == -2 || answer == -4 || answer == -5; }

bool is_valid_wvs_answer(int answer) { return is_wvs_nonresponse(answer) || (answer >= 1 && answer <= 10); }

RawResponseTable parse_responses(std::string_view text, const SurveyLayout& layout, SurveySource source,
                                 const PewCoding& pew) {
  const auto table = csv::parse(text, layout.delimiter);
  const auto country_col = table.column(layout.country_column);
  if (country_col < 0) throw ValidationError(fmt::format("missing country column '{}'", layout.country_column));
  std::vector<std::pair<std::ptrdiff_t, std::string>> cols;
  for (const auto& [qid, topic] : layout.questions) {
    const auto c = table.column(qid);
    if (c < 0) throw ValidationError(fmt::format("missing question column '{}'", qid));
    cols.emplace_back(c, qid);
  }

  RawResponseTable out;
  out.source = source;
  out.rows.reserve(table.rows.size() * cols.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    std::string country = trim(row[country_col]);
    if (auto code = parse_int(country); code && !layout.country_column_has_names) country = std::to_string(*code);
    if (country.empty()) throw ValidationError(fmt::format("line {}: empty country", line));
    for (const auto& [c, qid] : cols) {
      const std::string cell = trim(row[c]);
      std::optional<int> answer = parse_int(cell);
      if (!answer && source == SurveySource::PEW) answer = pew_label_code(cell);
      if (!answer) {
        throw ValidationError(fmt::format("line {}: column {}: cannot read answer '{}'", line, qid, cell));
      }
      if (source == SurveySource::PEW && !pew.substantive.contains(*answer) && !pew.nonresponse.contains(*answer)) {
        throw ValidationError(fmt::format("line {}: column {}: unknown PEW option code {}", line, qid, *answer));
      }
      out.rows.push_back({country, qid, *answer, line});
    }
  }
  return out;
}

RawResponseTable read_responses(const std::filesystem::path& path, const SurveyLayout& layout, SurveySource source,
                                const PewCoding& pew) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  const std::string table_text(std::istreambuf_iterator<char>(in), {});
  try {
    return parse_responses(table_text, layout, source, pew);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

RawResponseTable clean_nonresponses(const RawResponseTable& table) {
  if (table.source != SurveySource::WVS) throw ValidationError("clean_nonresponses applies to WVS tables only");
  RawResponseTable out = table;
  for (auto& row : out.rows) {
    if (!is_valid_wvs_answer(row.answer)) {
      throw ValidationError(fmt::format("line {}: country {} question {}: answer {} outside the WVS code set",
                                        row.line, row.country_code, row.question_id, row.answer));
    }
    if (is_wvs_nonresponse(row.answer)) row.answer = 0;
  }
  return out;
}

Aggregates aggregate_by_country(const RawResponseTable& table) {
  std::set<std::string> countries, questions;
  std::map<CellKey, std::pair<double, std::size_t>> sums;
  for (const auto& row : table.rows) {
    if (row.country_code.empty() || row.question_id.empty()) {
      throw ValidationError(fmt::format("line {}: empty country or question id", row.line));
    }
    countries.insert(row.country_code);
    questions.insert(row.question_id);
    auto& [sum, n] = sums[CellKey{row.country_code, row.question_id}];
    sum += row.answer;
    ++n;
  }
  Aggregates out;
  for (const auto& c : countries) {
    for (const auto& q : questions) {
      CellKey key{c, q};
      auto it = sums.find(key);
      if (it == sums.end()) {
        out.emplace(std::move(key), CellAggregate{NAN, 0});
      } else {
        out.emplace(std::move(key), CellAggregate{it->second.first / static_cast<double>(it->second.second),
                                                  it->second.second});
      }
    }
  }
  return out;
}

double normalize_wvs(double mean, bool* clamped) {
  if (!std::isfinite(mean)) throw ValidationError("cannot normalize a non-finite WVS mean");
  const double raw = (mean - 5.5) / 4.5;
  const double v = std::clamp(raw, -1.0, 1.0);
  if (clamped) *clamped = (v != raw);
  return round4(v);
}

std::optional<int> normalize_pew(int code, const PewCoding& coding) {
  if (auto it = coding.substantive.find(code); it != coding.substantive.end()) return it->second;
  if (coding.nonresponse.contains(code)) return std::nullopt;
  throw ValidationError(fmt::format("unknown PEW option code {}", code));
}

std::optional<int> normalize_pew(std::string_view label) {
  const auto code = pew_label_code(label);
  if (!code) throw ValidationError(fmt::format("unknown PEW option '{}'", label));
  return normalize_pew(*code);
}

IngestResult build_matrix(const Aggregates& normalized, const CountryMap& countries,
                          const std::vector<std::pair<std::string, std::string>>& topic_labels,
                          std::string source_tag) {
  if (normalized.empty()) throw ValidationError("no survey cells to build a matrix from");

  std::map<std::string, std::string> question_topic;
  for (const auto& [qid, topic] : topic_labels) question_topic[qid] = topic;

  // (country name, topic) -> value
  std::map<std::string, std::map<std::string, double>> cells;
  std::set<std::string> all_topics;
  for (const auto& [key, agg] : normalized) {
    const std::string& name = countries.name(key.country_code);
    auto qt = question_topic.find(key.question_id);
    const std::string topic = qt == question_topic.end() ? key.question_id : qt->second;
    all_topics.insert(topic);
    auto& row = cells[name];
    if (row.contains(topic)) {
      throw ValidationError(fmt::format("country '{}' topic '{}' appears twice (codes mapping to one name?)", name, topic));
    }
    row[topic] = agg.missing() ? NAN : agg.mean;
  }

  IngestResult result;
  result.meta.source_tag = source_tag;

  std::vector<std::string> topics;
  for (const auto& t : all_topics) {
    std::size_t present = 0;
    for (const auto& [c, row] : cells) {
      auto it = row.find(t);
      if (it != row.end() && !std::isnan(it->second)) ++present;
    }
    if (present < 2) {
      result.meta.dropped_topics.push_back(t);
      result.meta.warnings.push_back(fmt::format("topic '{}' observed for {} countries; dropped", t, present));
    } else {
      topics.push_back(t);
    }
  }
  if (topics.empty()) throw ValidationError("no topic is observed for at least two countries");

  MoralMatrix& m = result.matrix;
  m.source_tag = std::move(source_tag);
  m.bounded = true;
  m.topics = topics;
  for (const auto& [c, row] : cells) m.countries.push_back(c);  // std::map: lexicographic
  m.scores.resize(static_cast<Eigen::Index>(m.countries.size()), static_cast<Eigen::Index>(topics.size()));
  for (std::size_t i = 0; i < m.countries.size(); ++i) {
    const auto& row = cells[m.countries[i]];
    for (std::size_t j = 0; j < topics.size(); ++j) {
      auto it = row.find(topics[j]);
      const double v = it == row.end() ? NAN : it->second;
      m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::isnan(v) ? NAN : round4(v);
    }
  }
  result.meta.missing_cells = static_cast<std::size_t>(m.missing_count());
  if (result.meta.missing_cells > 0) {
    result.meta.warnings.push_back(fmt::format("{} missing cells", result.meta.missing_cells));
  }
  m.validate();
  return result;
}

IngestResult ingest_survey(const RawResponseTable& table, const CountryMap& countries, const SurveyLayout& layout,
                           const IngestOptions& options) {
  if (table.rows.empty()) throw ValidationError("survey table has no rows");
  if (table.source != options.source) throw ValidationError("survey table source does not match ingest options");

  CountryMap map = countries;
  if (layout.country_column_has_names) {
    std::map<std::string, std::string> identity;
    for (const auto& row : table.rows) identity.emplace(row.country_code, row.country_code);
    map = CountryMap(std::move(identity));
  } else {
    std::set<std::string> unknown;
    for (const auto& row : table.rows) {
      if (!map.contains_code(row.country_code)) unknown.insert(row.country_code);
    }
    if (!unknown.empty()) {
      std::string list;
      for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
      throw ValidationError("country codes missing from the country map: " + list);
    }
  }

  RawResponseTable used;
  used.source = table.source;
  std::size_t clamped = 0;
  Aggregates normalized;

  if (options.source == SurveySource::WVS) {
    if (options.nonresponse == NonResponsePolicy::ZeroReplace) {
      used = clean_nonresponses(table);
    } else {
      for (const auto& row : table.rows) {
        if (!is_valid_wvs_answer(row.answer)) {
          throw ValidationError(fmt::format("line {}: country {} question {}: answer {} outside the WVS code set",
                                            row.line, row.country_code, row.question_id, row.answer));
        }
        if (!is_wvs_nonresponse(row.answer)) used.rows.push_back(row);
      }
    }
    normalized = aggregate_by_country(used);
    // Countries or questions whose rows were all excluded still get cells.
    for (const auto& row : table.rows) normalized.try_emplace(CellKey{row.country_code, row.question_id}, CellAggregate{NAN, 0});
    for (auto& [key, agg] : normalized) {
      if (agg.missing()) continue;
      bool c = false;
      agg.mean = normalize_wvs(agg.mean, &c);
      if (c) ++clamped;
    }
  } else {
    for (const auto& row : table.rows) {
      std::optional<int> v;
      try {
        v = normalize_pew(row.answer, options.pew);
      } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("line {}: country {} question {}: {}", row.line, row.country_code,
                                          row.question_id, e.what()));
      }
      if (v) {
        ResponseRow r = row;
        r.answer = *v;
        used.rows.push_back(std::move(r));
      }
    }
    normalized = aggregate_by_country(used);
    for (const auto& row : table.rows) normalized.try_emplace(CellKey{row.country_code, row.question_id}, CellAggregate{NAN, 0});
    for (auto& [key, agg] : normalized) {
      if (!agg.missing()) agg.mean = round4(agg.mean);
    }
  }

  const std::string tag = options.source_tag.empty() ? std::string(to_string(options.source)) : options.source_tag;
  IngestResult result = build_matrix(normalized, map, layout.questions, tag);
  result.meta.source = options.source;
  result.meta.nonresponse = options.nonresponse;
  result.meta.input_rows = table.rows.size();
  result.meta.used_rows = used.rows.size();
  result.meta.clamped_cells = clamped;
  if (clamped > 0) {
    result.meta.warnings.push_back(fmt::format("{} cells clamped to [-1, 1] after normalization", clamped));
  }
  for (const auto& row : used.rows) ++result.meta.rows_per_country[map.name(row.country_code)];
  return result;
}

}  // namespace moralprobe
