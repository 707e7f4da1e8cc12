#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace moralprobe {

/// Country x topic table of moral scores. Missing cells hold NaN.
///
/// Survey matrices are `bounded`: every present cell lies in [-1, 1] and is
/// rounded to 4 decimals. Model matrices keep raw log-probability
/// differences and are written at full precision.
struct MoralMatrix {
  std::vector<std::string> countries;
  std::vector<std::string> topics;
  Eigen::MatrixXd scores;
  std::string source_tag;
  bool bounded = true;

  Eigen::Index rows() const { return scores.rows(); }
  Eigen::Index cols() const { return scores.cols(); }
  bool empty() const { return scores.size() == 0; }

  std::optional<Eigen::Index> country_index(std::string_view name) const;
  std::optional<Eigen::Index> topic_index(std::string_view name) const;
  bool is_missing(Eigen::Index row, Eigen::Index col) const;
  Eigen::Index missing_count() const;

  /// Throws ValidationError when dimensions, labels or bounds are violated.
  void validate() const;
};

double round4(double x);

/// Sub-matrix with the given labels, in the given order. Labels must exist.
MoralMatrix restrict_to(const MoralMatrix& m, const std::vector<std::string>& countries,
                        const std::vector<std::string>& topics);

/// Labels present in both, in `a`'s order.
std::vector<std::string> common_countries(const MoralMatrix& a, const MoralMatrix& b);
std::vector<std::string> common_topics(const MoralMatrix& a, const MoralMatrix& b);

struct AlignedPair {
  MoralMatrix survey;
  MoralMatrix model;
  std::vector<std::string> dropped_countries;  // listwise deletion
};

/// Restricts both matrices to common countries and `topics` (or all common
/// topics when empty), then drops every country with a missing cell in
/// either source.
AlignedPair align_matrices(const MoralMatrix& survey, const MoralMatrix& model,
                           const std::vector<std::string>& topics = {});

// Canonical text form: header `country,<topic1>,...`, one row per country,
// `NA` for missing cells. Bounded matrices use 4-decimal fixed point,
// unbounded ones the shortest round-trip representation.
std::string to_csv(const MoralMatrix& m);
MoralMatrix matrix_from_csv(std::string_view text, std::string source_tag, bool bounded);
void write_matrix(const std::filesystem::path& path, const MoralMatrix& m);
MoralMatrix read_matrix(const std::filesystem::path& path, std::string source_tag, bool bounded);

}  // namespace moralprobe
