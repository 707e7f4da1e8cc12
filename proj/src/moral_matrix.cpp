#include "moralprobe/moral_matrix.hpp"

#include "moralprobe/csv.hpp"
#include "moralprobe/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace moralprobe {

namespace {

std::optional<Eigen::Index> find_label(const std::vector<std::string>& labels, std::string_view name) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == name) return static_cast<Eigen::Index>(i);
  }
  return std::nullopt;
}

void check_unique(const std::vector<std::string>& labels, const char* what) {
  std::set<std::string_view> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw ValidationError(fmt::format("empty {} label", what));
    if (!seen.insert(l).second) throw ValidationError(fmt::format("duplicate {} label '{}'", what, l));
  }
}

std::string format_cell(double v, bool bounded) {
  if (std::isnan(v)) return "NA";
  if (bounded) {
    const double r = round4(v);
    return fmt::format("{:.4f}", r == 0.0 ? 0.0 : r);
  }
  return fmt::format("{}", v);
}

}  // namespace

double round4(double x) {
  const double r = std::round(x * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

std::optional<Eigen::Index> MoralMatrix::country_index(std::string_view name) const {
  return find_label(countries, name);
}

std::optional<Eigen::Index> MoralMatrix::topic_index(std::string_view name) const {
  return find_label(topics, name);
}

bool MoralMatrix::is_missing(Eigen::Index row, Eigen::Index col) const {
  return std::isnan(scores(row, col));
}

Eigen::Index MoralMatrix::missing_count() const {
  return scores.array().isNaN().count();
}

void MoralMatrix::validate() const {
  if (scores.rows() != static_cast<Eigen::Index>(countries.size()) ||
      scores.cols() != static_cast<Eigen::Index>(topics.size())) {
    throw ValidationError(fmt::format("matrix '{}' is {}x{} but has {} countries and {} topics", source_tag,
                                      scores.rows(), scores.cols(), countries.size(), topics.size()));
  }
  check_unique(countries, "country");
  check_unique(topics, "topic");
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      const double v = scores(i, j);
      if (std::isnan(v)) continue;
      if (!std::isfinite(v)) {
        throw ValidationError(fmt::format("non-finite score at ({}, {})", countries[i], topics[j]));
      }
      if (bounded && (v < -1.0 || v > 1.0)) {
        throw ValidationError(fmt::format("score {} at ({}, {}) outside [-1, 1]", v, countries[i], topics[j]));
      }
    }
  }
}

MoralMatrix restrict_to(const MoralMatrix& m, const std::vector<std::string>& countries,
                        const std::vector<std::string>& topics) {
  std::vector<Eigen::Index> rows, cols;
  for (const auto& c : countries) {
    auto i = m.country_index(c);
    if (!i) throw ValidationError(fmt::format("country '{}' not in matrix '{}'", c, m.source_tag));
    rows.push_back(*i);
  }
  for (const auto& t : topics) {
    auto j = m.topic_index(t);
    if (!j) throw ValidationError(fmt::format("topic '{}' not in matrix '{}'", t, m.source_tag));
    cols.push_back(*j);
  }
  MoralMatrix out;
  out.countries = countries;
  out.topics = topics;
  out.source_tag = m.source_tag;
  out.bounded = m.bounded;
  out.scores = m.scores(rows, cols);
  return out;
}

std::vector<std::string> common_countries(const MoralMatrix& a, const MoralMatrix& b) {
  std::vector<std::string> out;
  for (const auto& c : a.countries) {
    if (b.country_index(c)) out.push_back(c);
  }
  return out;
}

std::vector<std::string> common_topics(const MoralMatrix& a, const MoralMatrix& b) {
  std::vector<std::string> out;
  for (const auto& t : a.topics) {
    if (b.topic_index(t)) out.push_back(t);
  }
  return out;
}

AlignedPair align_matrices(const MoralMatrix& survey, const MoralMatrix& model,
                           const std::vector<std::string>& topics) {
  const auto countries = common_countries(survey, model);
  const auto use_topics = topics.empty() ? common_topics(survey, model) : topics;
  MoralMatrix s = restrict_to(survey, countries, use_topics);
  MoralMatrix m = restrict_to(model, countries, use_topics);

  AlignedPair out;
  std::vector<std::string> keep;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const bool missing = s.scores.row(i).array().isNaN().any() || m.scores.row(i).array().isNaN().any();
    if (missing) {
      out.dropped_countries.push_back(countries[i]);
    } else {
      keep.push_back(countries[i]);
    }
  }
  out.survey = restrict_to(s, keep, use_topics);
  out.model = restrict_to(m, keep, use_topics);
  return out;
}

std::string to_csv(const MoralMatrix& m) {
  std::string out = "country";
  for (const auto& t : m.topics) {
    out += ',';
    out += csv::quote(t);
  }
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += csv::quote(m.countries[i]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out += ',';
      out += format_cell(m.scores(i, j), m.bounded);
    }
    out += '\n';
  }
  return out;
}

MoralMatrix matrix_from_csv(std::string_view text, std::string source_tag, bool bounded) {
  const auto table = csv::parse(text);
  if (table.header.empty() || table.header[0] != "country") {
    throw ValidationError("matrix file must start with a 'country' column");
  }
  MoralMatrix m;
  m.source_tag = std::move(source_tag);
  m.bounded = bounded;
  m.topics.assign(table.header.begin() + 1, table.header.end());
  m.scores.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(m.topics.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    m.countries.push_back(row[0]);
    for (std::size_t j = 1; j < row.size(); ++j) {
      double v = NAN;
      if (row[j] != "NA" && !row[j].empty()) {
        try {
          std::size_t used = 0;
          v = std::stod(row[j], &used);
          if (used != row[j].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw ValidationError(fmt::format("line {}: bad score '{}'", table.line_numbers[i], row[j]));
        }
      }
      m.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = v;
    }
  }
  m.validate();
  return m;
}

void write_matrix(const std::filesystem::path& path, const MoralMatrix& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_csv(m);
}

MoralMatrix read_matrix(const std::filesystem::path& path, std::string source_tag, bool bounded) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return matrix_from_csv(ss.str(), std::move(source_tag), bounded);
}

}  // namespace moralprobe
