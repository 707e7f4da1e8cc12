#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe {

class CountryMap;

enum class PromptTemplate { In, People, Comparative };

std::string_view to_string(PromptTemplate t);

struct JudgmentTokenPair {
  int id;
  std::string_view positive;
  std::string_view negative;
};

struct ComparativeTokenPair {
  int id;
  std::string_view similar;
  std::string_view different;
};

inline constexpr std::array<JudgmentTokenPair, 5> kJudgmentPairs{{
    {1, "always justifiable", "never justifiable"},
    {2, "right", "wrong"},
    {3, "morally good", "morally bad"},
    {4, "ethically right", "ethically wrong"},
    {5, "ethical", "unethical"},
}};

inline constexpr std::array<ComparativeTokenPair, 3> kComparativePairs{{
    {1, "similar", "dissimilar"},
    {2, "alike", "unalike"},
    {3, "aligned", "misaligned"},
}};

/// A prefix shared by two continuations that differ only in the judgment
/// word(s). `prefix + continuation` is the full sentence.
struct ContrastPair {
  std::string prefix;
  std::string positive_continuation;
  std::string negative_continuation;
  PromptTemplate templ = PromptTemplate::In;
  std::vector<std::string> countries;
  std::string topic;
  int token_pair_id = 0;

  std::string positive_sentence() const { return prefix + positive_continuation; }
  std::string negative_sentence() const { return prefix + negative_continuation; }
};

struct PromptOptions {
  bool terminal_period = true;
};

/// 2 templates x 5 token pairs, In-template first, pairs in id order.
/// `country` and `topic` are already in prompt form (see PhraseBook).
std::vector<ContrastPair> render_moral_pairs(std::string_view country, std::string_view topic,
                                             const PromptOptions& options = {});

/// 3 comparative pairs for one (topic, country x, country y). Throws
/// ValidationError when the countries are identical.
std::vector<ContrastPair> render_comparative_pairs(std::string_view topic,
                                                   std::string_view country_x,
                                                   std::string_view country_y,
                                                   const PromptOptions& options = {});

/// Explicit lookup tables turning matrix labels into prompt phrases:
/// country names gain a definite article where listed ("the United States"),
/// topics may be rephrased ("For a man to beat his wife" -> "for a man to
/// beat his wife"). Nothing is inferred.
class PhraseBook {
 public:
  /// Built-in article list, no known countries, no topic overrides.
  static PhraseBook defaults();

  /// JSON object with optional keys `definite_article` (array of names),
  /// `countries` (name -> prompt form) and `topics` (label -> prompt form).
  static PhraseBook from_json_file(const std::filesystem::path& path);

  void add_known_countries(const CountryMap& map);
  void add_known_countries(const std::vector<std::string>& names);
  void set_country_override(std::string name, std::string phrase);
  void set_topic_override(std::string label, std::string phrase);
  void add_definite_article(std::string name);

  /// Accepts a survey country code or a known display name. Throws
  /// ValidationError when neither is known.
  std::string country_display(std::string_view code_or_name) const;
  std::string topic_phrase(std::string_view label) const;

 private:
  std::map<std::string, std::string, std::less<>> code_to_name_;
  std::set<std::string, std::less<>> known_names_;
  std::set<std::string, std::less<>> definite_article_;
  std::map<std::string, std::string, std::less<>> country_overrides_;
  std::map<std::string, std::string, std::less<>> topic_overrides_;
};

}  // namespace moralprobe
