#pragma once

#include "moralprobe/methods.hpp"
#include "moralprobe/moral_matrix.hpp"
#include "moralprobe/survey_ingest.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace moralprobe {

inline constexpr const char* kReportSchema = "moralprobe.report/1";
inline constexpr const char* kManifestSchema = "moralprobe.manifest/1";

// Machine-readable reports. Field names are stable; numbers at full precision.
std::string to_json(const Method1Report& r);
std::string to_json(const Method2Report& r);
std::string to_json(const Method3Report& r);
std::string to_json(const IngestMetadata& m);

/// Histogram of present cell values over [-1, 1] in `bins` equal bins:
/// `bin_lo,bin_hi,count`.
std::string distribution_csv(const MoralMatrix& m, int bins = 20);
/// Per topic: n, mean, variance, min, q1, median, q3, max.
std::string spread_csv(const MoralMatrix& m);
/// `topic,survey_variance,model_variance` triples.
std::string variance_scatter_csv(const Method1Report& r);
/// Trial records, one per line.
std::string trials_csv(const Method3Report& r);
/// `country,label` table.
std::string assignment_csv(const ClusterAssignment& a);

/// Files of an output directory with SHA-256 digests, relative paths.
struct Manifest {
  std::map<std::string, std::string> files;  // path -> digest
  std::vector<std::string> volatile_files;   // listed, not digested

  std::string to_json() const;
  static Manifest from_json(std::string_view text);

  /// Relative paths whose digest does not match the file on disk.
  std::vector<std::string> verify(const std::filesystem::path& root) const;
};

/// Digests every regular file under `root` except the manifest itself,
/// the summary, the cache directory and volatile files.
Manifest build_manifest(const std::filesystem::path& root,
                        const std::vector<std::string>& volatile_files);

/// Human-readable markdown summary of every report in a bundle directory.
/// Pure function of the machine files.
std::string render_summary(const std::filesystem::path& root, const Manifest& manifest);

/// Writes `content` to `path` creating parent directories.
void write_text(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

}  // namespace moralprobe
