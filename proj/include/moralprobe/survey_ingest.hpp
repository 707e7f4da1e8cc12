#pragma once

#include "moralprobe/moral_matrix.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moralprobe {

enum class SurveySource { WVS, PEW };

std::string_view to_string(SurveySource s);
SurveySource survey_source_from_string(std::string_view s);

/// How WVS non-response codes (-1, -2, -4, -5) enter the cell mean.
enum class NonResponsePolicy {
  ZeroReplace,  // replaced by 0 and averaged (reproduces the published pipeline)
  Exclude,      // dropped before averaging
};

std::string_view to_string(NonResponsePolicy p);
NonResponsePolicy nonresponse_policy_from_string(std::string_view s);

struct ResponseRow {
  std::string country_code;
  std::string question_id;
  int answer = 0;
  std::size_t line = 0;  // source line, for diagnostics
};

struct RawResponseTable {
  std::vector<ResponseRow> rows;
  SurveySource source = SurveySource::WVS;
};

/// Numeric survey country code -> display name ("United States").
class CountryMap {
 public:
  CountryMap() = default;
  explicit CountryMap(std::map<std::string, std::string> entries);

  /// Delimited file with header; columns `code` and `name` (configurable).
  static CountryMap read(const std::filesystem::path& path, char delim = ',',
                         std::string_view code_column = "code",
                         std::string_view name_column = "name");

  bool contains_code(std::string_view code) const;
  bool contains_name(std::string_view name) const;
  const std::string& name(std::string_view code) const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::set<std::string, std::less<>> names_;
};

/// Which columns of a wide survey export are read, and the topic label each
/// question column becomes.
struct SurveyLayout {
  std::string country_column;
  std::vector<std::pair<std::string, std::string>> questions;  // column -> topic
  char delimiter = ',';
  /// When true the country column already holds display names.
  bool country_column_has_names = false;

  static SurveyLayout wvs_wave7();
  static SurveyLayout pew_2013();
};

/// PEW option coding. Substantive options map onto {-1, 0, +1}; non-response
/// codes are dropped before averaging.
struct PewCoding {
  std::map<int, int> substantive{{1, 1}, {2, -1}, {3, 0}};
  std::set<int> nonresponse{4, 8, 9};
};

bool is_wvs_nonresponse(int answer);
bool is_valid_wvs_answer(int answer);

/// Reads a wide export into long (country, question, answer) form. Answers
/// are validated against the instrument's code set; PEW answers may also be
/// given as option labels ("Morally acceptable", ...).
RawResponseTable read_responses(const std::filesystem::path& path, const SurveyLayout& layout,
                                SurveySource source, const PewCoding& pew = {});
RawResponseTable parse_responses(std::string_view text, const SurveyLayout& layout,
                                 SurveySource source, const PewCoding& pew = {});

/// WVS only: every non-response answer becomes 0.
RawResponseTable clean_nonresponses(const RawResponseTable& table);

struct CellKey {
  std::string country_code;
  std::string question_id;
  auto operator<=>(const CellKey&) const = default;
};

struct CellAggregate {
  double mean = 0.0;  // NaN when count == 0
  std::size_t count = 0;
  bool missing() const { return count == 0; }
};

using Aggregates = std::map<CellKey, CellAggregate>;

/// Mean answer per (country, question). Every combination of a seen country
/// and a seen question gets an entry; combinations without rows are missing.
Aggregates aggregate_by_country(const RawResponseTable& table);

/// Maps a WVS mean on the 1..10 scale to [-1, 1]: clamp((mean - 5.5) / 4.5),
/// rounded to 4 decimals. `clamped` is set when the clamp was active.
double normalize_wvs(double mean, bool* clamped = nullptr);

/// +1 acceptable, 0 not a moral issue, -1 unacceptable; nullopt for
/// non-responses. Throws on unknown codes.
std::optional<int> normalize_pew(int code, const PewCoding& coding = {});
/// Label form of the same mapping ("morally acceptable" -> +1).
std::optional<int> normalize_pew(std::string_view label);

struct IngestMetadata {
  std::string source_tag;
  SurveySource source = SurveySource::WVS;
  NonResponsePolicy nonresponse = NonResponsePolicy::ZeroReplace;
  std::size_t input_rows = 0;
  std::size_t used_rows = 0;
  std::size_t clamped_cells = 0;
  std::size_t missing_cells = 0;
  std::map<std::string, std::size_t> rows_per_country;
  std::vector<std::string> dropped_topics;
  std::vector<std::string> warnings;
};

struct IngestResult {
  MoralMatrix matrix;
  IngestMetadata meta;
};

/// Assembles already-normalized cell values into a matrix with lexicographic
/// country and topic order. Topics observed for fewer than 2 countries are
/// dropped with a warning. Throws ValidationError on empty input.
IngestResult build_matrix(const Aggregates& normalized, const CountryMap& countries,
                          const std::vector<std::pair<std::string, std::string>>& topic_labels,
                          std::string source_tag);

struct IngestOptions {
  SurveySource source = SurveySource::WVS;
  NonResponsePolicy nonresponse = NonResponsePolicy::ZeroReplace;
  PewCoding pew;
  std::string source_tag;
};

/// Full pipeline: clean, aggregate, normalize, build.
IngestResult ingest_survey(const RawResponseTable& table, const CountryMap& countries,
                           const SurveyLayout& layout, const IngestOptions& options);

}  // namespace moralprobe
