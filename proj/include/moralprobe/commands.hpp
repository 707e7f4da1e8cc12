#pragma once

#include "moralprobe/config.hpp"

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace moralprobe {

class ScoringBackend;

/// CLI exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitBackend = 2,
  kExitCorrupt = 3,
};

/// Exclusive lock on an output directory (`.lock` created with O_EXCL).
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path file_;
};

std::unique_ptr<ScoringBackend> make_backend(const BackendConfig& config);

// Layout of an output directory.
std::filesystem::path survey_matrix_path(const RunConfig& c, const std::string& survey_id);
std::filesystem::path model_matrix_path(const RunConfig& c, const std::string& survey_id);
std::filesystem::path audit_path(const RunConfig& c, const std::string& survey_id);

/// Reads survey exports and writes matrices, ingest metadata and plot data.
void cmd_ingest(const RunConfig& config, std::ostream& log);

/// Scores every cell of each survey matrix with the configured backend.
/// `backend` overrides the configured one when non-null.
void cmd_probe(const RunConfig& config, std::ostream& log, ScoringBackend* backend = nullptr);

/// Runs the three methods and writes reports, plot data, run metadata and the
/// manifest.
void cmd_analyze(const RunConfig& config, std::ostream& log, ScoringBackend* backend = nullptr);

/// Verifies the manifest and writes `summary.md`. Returns the summary.
std::string cmd_report(const std::filesystem::path& bundle_dir, std::ostream& log);

}  // namespace moralprobe
