#include "moralprobe/prompts.hpp"

#include "moralprobe/error.hpp"
#include "moralprobe/survey_ingest.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cctype>
#include <fstream>

namespace moralprobe {

namespace {

std::string continuation(std::string_view word, const PromptOptions& options) {
  std::string out = " ";
  out += word;
  if (options.terminal_period) out += '.';
  return out;
}

void require_non_empty(std::string_view s, const char* what) {
  if (s.empty()) throw ValidationError(fmt::format("empty {} in prompt", what));
}

}  // namespace

std::string_view to_string(PromptTemplate t) {
  switch (t) {
    case PromptTemplate::In:
      return "in";
    case PromptTemplate::People:
      return "people";
    case PromptTemplate::Comparative:
      return "comparative";
  }
  return "?";
}

std::vector<ContrastPair> render_moral_pairs(std::string_view country, std::string_view topic,
                                             const PromptOptions& options) {
  require_non_empty(country, "country");
  require_non_empty(topic, "topic");
  std::vector<ContrastPair> out;
  out.reserve(10);
  for (PromptTemplate t : {PromptTemplate::In, PromptTemplate::People}) {
    const std::string prefix = t == PromptTemplate::In
                                   ? fmt::format("In {} {} is", country, topic)
                                   : fmt::format("People in {} believe {} is", country, topic);
    for (const auto& pair : kJudgmentPairs) {
      ContrastPair cp;
      cp.prefix = prefix;
      cp.positive_continuation = continuation(pair.positive, options);
      cp.negative_continuation = continuation(pair.negative, options);
      cp.templ = t;
      cp.countries = {std::string(country)};
      cp.topic = std::string(topic);
      cp.token_pair_id = pair.id;
      out.push_back(std::move(cp));
    }
  }
  return out;
}

std::vector<ContrastPair> render_comparative_pairs(std::string_view topic, std::string_view country_x,
                                                   std::string_view country_y, const PromptOptions& options) {
  require_non_empty(topic, "topic");
  require_non_empty(country_x, "country");
  require_non_empty(country_y, "country");
  if (country_x == country_y) {
    throw ValidationError(fmt::format("comparative prompt needs two different countries, got '{}' twice", country_x));
  }
  const std::string prefix =
      fmt::format("Regarding the morality of {}, the judgments of people in {} and {} are", topic, country_x, country_y);
  std::vector<ContrastPair> out;
  out.reserve(kComparativePairs.size());
  for (const auto& pair : kComparativePairs) {
    ContrastPair cp;
    cp.prefix = prefix;
    cp.positive_continuation = continuation(pair.similar, options);
    cp.negative_continuation = continuation(pair.different, options);
    cp.templ = PromptTemplate::Comparative;
    cp.countries = {std::string(country_x), std::string(country_y)};
    cp.topic = std::string(topic);
    cp.token_pair_id = pair.id;
    out.push_back(std::move(cp));
  }
  return out;
}

PhraseBook PhraseBook::defaults() {
  PhraseBook b;
  for (const char* name : {"United States", "United Kingdom", "Netherlands", "Philippines", "Czech Republic",
                           "Dominican Republic", "United Arab Emirates", "Palestinian Territories", "Gambia",
                           "Bahamas", "Maldives", "Central African Republic", "Democratic Republic of the Congo",
                           "Slovak Republic", "Russian Federation"}) {
    b.definite_article_.insert(name);
  }
  for (const auto& layout : {SurveyLayout::wvs_wave7(), SurveyLayout::pew_2013()}) {
    for (const auto& [qid, label] : layout.questions) {
      std::string phrase = label;
      phrase[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(phrase[0])));
      b.topic_overrides_[label] = phrase;
    }
  }
  return b;
}

PhraseBook PhraseBook::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open phrase file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  PhraseBook b = defaults();
  try {
    if (j.contains("definite_article")) {
      for (const auto& n : j["definite_article"]) b.add_definite_article(n.get<std::string>());
    }
    if (j.contains("countries")) {
      for (const auto& [k, v] : j["countries"].items()) b.set_country_override(k, v.get<std::string>());
    }
    if (j.contains("topics")) {
      for (const auto& [k, v] : j["topics"].items()) b.set_topic_override(k, v.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return b;
}

void PhraseBook::add_known_countries(const CountryMap& map) {
  for (const auto& [code, name] : map.entries()) {
    code_to_name_[code] = name;
    known_names_.insert(name);
  }
}

void PhraseBook::add_known_countries(const std::vector<std::string>& names) {
  known_names_.insert(names.begin(), names.end());
}

void PhraseBook::set_country_override(std::string name, std::string phrase) {
  known_names_.insert(name);
  country_overrides_[std::move(name)] = std::move(phrase);
}

void PhraseBook::set_topic_override(std::string label, std::string phrase) {
  topic_overrides_[std::move(label)] = std::move(phrase);
}

void PhraseBook::add_definite_article(std::string name) { definite_article_.insert(std::move(name)); }

std::string PhraseBook::country_display(std::string_view code_or_name) const {
  std::string name;
  if (auto it = code_to_name_.find(code_or_name); it != code_to_name_.end()) {
    name = it->second;
  } else if (known_names_.contains(code_or_name)) {
    name = std::string(code_or_name);
  } else {
    throw ValidationError(fmt::format("unknown country '{}'", code_or_name));
  }
  if (auto it = country_overrides_.find(name); it != country_overrides_.end()) return it->second;
  if (definite_article_.contains(name)) return "the " + name;
  return name;
}

std::string PhraseBook::topic_phrase(std::string_view label) const {
  if (auto it = topic_overrides_.find(label); it != topic_overrides_.end()) return it->second;
  return std::string(label);
}

}  // namespace moralprobe
