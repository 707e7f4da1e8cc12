#include "moralprobe/commands.hpp"

#include "moralprobe/bundle.hpp"
#include "moralprobe/error.hpp"
#include "moralprobe/methods.hpp"
#include "moralprobe/remote_backend.hpp"
#include "moralprobe/score_cache.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>

namespace moralprobe {

namespace fs = std::filesystem;
using nlohmann::json;

OutputLock::OutputLock(const fs::path& dir) : file_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw ValidationError(fmt::format("'{}' is locked by another run; remove {} if that run is gone",
                                        dir.string(), file_.string()));
    }
    throw ValidationError(fmt::format("cannot lock '{}': {}", dir.string(), std::strerror(errno)));
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(file_, ec);
}

std::unique_ptr<ScoringBackend> make_backend(const BackendConfig& config) {
  switch (config.kind) {
    case BackendKind::Mock:
      return std::make_unique<MockBackend>(42, std::set<std::string>(config.mock_models.begin(),
                                                                     config.mock_models.end()));
    case BackendKind::Table:
      return TableBackend::read(config.table_path, config.model_id);
    case BackendKind::Remote: {
      RemoteBackend::Options o;
      o.endpoint = config.endpoint;
      o.protocol = config.protocol;
      if (const char* token = std::getenv(config.auth_env.c_str())) o.auth_token = token;
      o.timeout = std::chrono::milliseconds(config.timeout_ms);
      o.max_attempts = config.max_attempts;
      o.initial_backoff = std::chrono::milliseconds(config.initial_backoff_ms);
      return std::make_unique<RemoteBackend>(std::move(o));
    }
  }
  throw ValidationError("unknown backend kind");
}

namespace {

// Model ids may hold '/' or ':'; keep file names portable.
std::string file_token(std::string_view s) {
  std::string out;
  for (char ch : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    out += keep ? ch : '_';
  }
  return out;
}

std::string stem(const RunConfig& c, const std::string& survey_id) {
  return file_token(c.backend.model_id) + "__" + file_token(survey_id);
}

MoralMatrix load_survey_matrix(const RunConfig& c, const std::string& id) {
  const auto p = survey_matrix_path(c, id);
  if (!fs::is_regular_file(p)) {
    throw ValidationError(fmt::format("survey matrix '{}' is missing; run `moralprobe ingest` first", p.string()));
  }
  return read_matrix(p, id, true);
}

MoralMatrix load_model_matrix(const RunConfig& c, const std::string& id) {
  const auto p = model_matrix_path(c, id);
  if (!fs::is_regular_file(p)) {
    throw ValidationError(fmt::format("model matrix '{}' is missing; run `moralprobe probe` first", p.string()));
  }
  return read_matrix(p, c.backend.model_id, false);
}

PhraseBook load_phrases(const RunConfig& c) {
  return c.phrases.empty() ? PhraseBook::defaults() : PhraseBook::from_json_file(c.phrases);
}

std::unique_ptr<ScoreCache> open_cache(const RunConfig& c) {
  if (!c.backend.cache) return std::make_unique<ScoreCache>();
  const auto file = c.cache_file();
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  return std::make_unique<ScoreCache>(file);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

fs::path survey_matrix_path(const RunConfig& c, const std::string& survey_id) {
  return c.out / "matrices" / (file_token(survey_id) + ".csv");
}

fs::path model_matrix_path(const RunConfig& c, const std::string& survey_id) {
  return c.out / "model" / (stem(c, survey_id) + ".csv");
}

fs::path audit_path(const RunConfig& c, const std::string& survey_id) {
  return c.out / "model" / (stem(c, survey_id) + ".audit.csv");
}

void cmd_ingest(const RunConfig& config, std::ostream& log) {
  config.validate(true);
  OutputLock lock(config.out);
  for (const auto& s : config.surveys) {
    CountryMap map;
    if (!s.layout.country_column_has_names) map = CountryMap::read(s.country_map);
    log << fmt::format("ingest {}: reading {}\n", s.id, s.path.string());
    const auto table = read_responses(s.path, s.layout, s.source, s.pew);
    IngestOptions opts;
    opts.source = s.source;
    opts.nonresponse = s.nonresponse;
    opts.pew = s.pew;
    opts.source_tag = s.id;
    const auto result = ingest_survey(table, map, s.layout, opts);
    for (const auto& w : result.meta.warnings) log << fmt::format("ingest {}: warning: {}\n", s.id, w);

    const auto mpath = survey_matrix_path(config, s.id);
    fs::create_directories(mpath.parent_path());
    write_matrix(mpath, result.matrix);
    write_text(config.out / "matrices" / (file_token(s.id) + ".meta.json"), to_json(result.meta));
    write_text(config.out / "plots" / (file_token(s.id) + "_distribution.csv"), distribution_csv(result.matrix));
    write_text(config.out / "plots" / (file_token(s.id) + "_spread.csv"), spread_csv(result.matrix));
    log << fmt::format("ingest {}: {} countries x {} topics -> {}\n", s.id, result.matrix.rows(),
                       result.matrix.cols(), mpath.string());
  }
}

void cmd_probe(const RunConfig& config, std::ostream& log, ScoringBackend* backend) {
  config.validate(false);
  OutputLock lock(config.out);
  std::unique_ptr<ScoringBackend> owned;
  if (!backend) {
    owned = make_backend(config.backend);
    backend = owned.get();
  }
  auto cache = open_cache(config);
  for (const auto& w : cache->warnings()) log << "cache: warning: " << w << "\n";
  ScoringService service(*backend, cache.get(), ServiceOptions{config.backend.max_in_flight});
  const auto base_phrases = load_phrases(config);

  ProbeOptions opts;
  opts.model_id = config.backend.model_id;
  opts.normalization = config.normalization;
  opts.granularity = config.granularity;
  opts.prompt.terminal_period = config.terminal_period;
  opts.max_missing_fraction = 1.0;  // checked below, after the audit is written

  bool checked_model = false;
  for (const auto& s : config.surveys) {
    const auto survey = load_survey_matrix(config, s.id);
    auto phrases = base_phrases;
    phrases.add_known_countries(survey.countries);

    if (!checked_model) {
      // One request up front so an unknown model fails before the batch.
      const auto pairs = render_moral_pairs(phrases.country_display(survey.countries.front()),
                                            phrases.topic_phrase(survey.topics.front()), opts.prompt);
      service.score(positive_request(pairs.front(), opts.model_id, opts.granularity));
      checked_model = true;
    }

    log << fmt::format("probe {}: scoring {} cells with {}\n", s.id, survey.rows() * survey.cols(),
                       backend->version());
    const auto result = build_model_matrix(survey.countries, survey.topics, service, phrases, opts);
    write_text(audit_path(config, s.id), breakdown_to_csv(result.breakdown));
    const auto n_cells = static_cast<double>(survey.rows() * survey.cols());
    const auto st = service.stats();
    log << fmt::format("probe {}: {} missing cells; {} requests, {} cache hits, {} backend calls\n", s.id,
                       result.missing_cells, st.requests, st.cache_hits, st.backend_calls);
    if (static_cast<double>(result.missing_cells) > config.max_missing_fraction * n_cells) {
      std::string cause;
      for (const auto& b : result.breakdown) {
        if (b.missing()) {
          cause = fmt::format("{} / {}: {}", b.country, b.topic, *b.missing_cause);
          break;
        }
      }
      throw BackendError(fmt::format("{} of {} cells could not be scored; partial audit kept at {}; first: {}",
                                     result.missing_cells, n_cells, audit_path(config, s.id).string(), cause),
                         true);
    }
    write_matrix(model_matrix_path(config, s.id), result.matrix);
  }
}

void cmd_analyze(const RunConfig& config, std::ostream& log, ScoringBackend* backend) {
  config.validate(false);
  OutputLock lock(config.out);
  const auto started = std::chrono::steady_clock::now();

  // Check every prerequisite before doing any work.
  std::vector<std::pair<MoralMatrix, MoralMatrix>> inputs;
  for (const auto& s : config.surveys) inputs.emplace_back(load_survey_matrix(config, s.id), load_model_matrix(config, s.id));

  std::unique_ptr<ScoringBackend> owned;
  if (!backend) {
    owned = make_backend(config.backend);
    backend = owned.get();
  }
  auto cache = open_cache(config);
  ScoringService service(*backend, cache.get(), ServiceOptions{config.backend.max_in_flight});
  const auto base_phrases = load_phrases(config);

  Method1Options m1;
  m1.divisor = config.variance_divisor;
  m1.k_rank = config.k_rank;
  Method2Options m2;
  m2.k_topics = config.k_topics;
  m2.k_min = config.silhouette_k_min;
  m2.k_max = config.silhouette_k_max;
  m2.kmeans.seed = config.kmeans_seed;
  m2.kmeans.restarts = config.kmeans_restarts;
  m2.kmeans.max_iterations = config.kmeans_max_iterations;
  m2.divisor = config.variance_divisor;
  Method3Options m3;
  m3.trials = config.trials;
  m3.seed = config.seed;
  m3.k_min = config.elbow_k_min;
  m3.k_max = config.elbow_k_max;
  m3.linkage = config.linkage;
  m3.normalization = config.normalization;
  m3.granularity = config.granularity;
  m3.prompt.terminal_period = config.terminal_period;
  m3.chi2_correction = config.chi2_correction;

  json warnings = json::array();
  json timings = json::object();
  const auto& model_id = config.backend.model_id;
  for (std::size_t i = 0; i < config.surveys.size(); ++i) {
    const auto& id = config.surveys[i].id;
    const auto& [survey, model] = inputs[i];
    const auto name = stem(config, id);
    const auto t0 = std::chrono::steady_clock::now();

    const auto r1 = run_method1(survey, model, m1);
    write_text(config.out / "reports" / fmt::format("method1__{}.json", name), to_json(r1));
    write_text(config.out / "plots" / fmt::format("{}_variance_scatter.csv", name), variance_scatter_csv(r1));
    log << fmt::format("analyze {}: variance comparison r={:.3f} p={:.3f}\n", id, r1.correlation.r, r1.correlation.p);
    for (const auto& c : r1.dropped_countries) warnings.push_back(fmt::format("{}: dropped {} (missing cells)", id, c));

    for (auto subset : {TopicSubset::All, TopicSubset::Controversial, TopicSubset::Agreed}) {
      const auto r2 = run_method2(survey, model, subset, m2);
      const auto sub = std::string(to_string(subset));
      write_text(config.out / "reports" / fmt::format("method2__{}__{}.json", name, sub), to_json(r2));
      write_text(config.out / "plots" / fmt::format("{}_clusters_{}_survey.csv", name, sub),
                 assignment_csv(r2.survey_clusters));
      write_text(config.out / "plots" / fmt::format("{}_clusters_{}_model.csv", name, sub),
                 assignment_csv(r2.model_clusters));
      log << fmt::format("analyze {}: cluster alignment ({}) K={} ARI={:.3f} AMI={:.3f} CAS={:.3f}\n", id, sub,
                         r2.k_used, r2.ari, r2.ami, r2.cas);
      if (r2.k_range_flagged) warnings.push_back(fmt::format("{} {}: silhouette K range clipped", id, sub));
    }

    const auto r3 = run_method3(survey, service, base_phrases, model_id, m3);
    write_text(config.out / "reports" / fmt::format("method3__{}.json", name), to_json(r3));
    write_text(config.out / "plots" / fmt::format("{}_trials.csv", name), trials_csv(r3));
    log << fmt::format("analyze {}: comparative probing accuracy={:.3f} recall={:.3f} ties={}\n", id,
                       r3.metrics.accuracy, r3.metrics.recall, r3.tie_count);
    for (const auto& t : r3.topics) {
      if (t.skipped) warnings.push_back(fmt::format("{}: topic '{}' skipped: {}", id, t.topic, t.skip_reason));
    }
    if (!r3.chi2) warnings.push_back(fmt::format("{}: {}", id, r3.chi2_note));
    timings[id] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const auto st = service.stats();
  json meta;
  meta["created_at"] = utc_now();
  meta["config"] = json::parse(config.to_json());
  meta["backend_version"] = backend->version();
  meta["timings_seconds"] = timings;
  meta["total_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  meta["warnings"] = warnings;
  meta["cache"] = {{"requests", st.requests},
                   {"hits", st.cache_hits},
                   {"backend_calls", st.backend_calls},
                   {"hit_rate", st.requests ? static_cast<double>(st.cache_hits) / st.requests : 0.0}};
  write_text(config.out / "run_meta.json", meta.dump(2) + "\n");

  const auto manifest = build_manifest(config.out, {"run_meta.json"});
  write_text(config.out / "manifest.json", manifest.to_json());
  log << fmt::format("analyze: bundle of {} files in {}\n", manifest.files.size(), config.out.string());
}

std::string cmd_report(const fs::path& bundle_dir, std::ostream& log) {
  const auto mpath = bundle_dir / "manifest.json";
  if (!fs::is_regular_file(mpath)) {
    throw ValidationError(fmt::format("'{}' holds no bundle (manifest.json missing); run `moralprobe analyze` first",
                                      bundle_dir.string()));
  }
  OutputLock lock(bundle_dir);
  const auto manifest = Manifest::from_json(read_text(mpath));
  const auto bad = manifest.verify(bundle_dir);
  if (!bad.empty()) {
    std::string list;
    for (const auto& b : bad) list += "\n  " + b;
    throw CorruptStateError(fmt::format("bundle '{}' does not match its manifest:{}", bundle_dir.string(), list));
  }
  auto summary = render_summary(bundle_dir, manifest);
  write_text(bundle_dir / "summary.md", summary);
  log << fmt::format("report: wrote {}\n", (bundle_dir / "summary.md").string());
  return summary;
}

}  // namespace moralprobe
