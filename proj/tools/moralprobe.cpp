#include "moralprobe/commands.hpp"
#include "moralprobe/error.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>
#include <optional>

using namespace moralprobe;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "run configuration (JSON)");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "master seed for comparative-probing samples");
  cmd->add_option("--backend", o.backend, "scoring backend")->check(CLI::IsMember({"mock", "table", "remote"}));
  cmd->add_option("--out", o.out, "output directory");
}

RunConfig load(const Overrides& o) {
  auto c = RunConfig::load(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.backend) c.backend.kind = backend_kind_from_string(*o.backend);
  if (o.out) c.out = *o.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probe language models for cross-cultural moral judgments"};
  app.require_subcommand(1);
  Overrides o;

  auto* ingest = app.add_subcommand("ingest", "build survey moral-score matrices");
  auto* probe = app.add_subcommand("probe", "score model moral-score matrices");
  auto* analyze = app.add_subcommand("analyze", "run the three comparisons and write a report bundle");
  auto* report = app.add_subcommand("report", "verify a bundle and write summary.md");
  for (auto* cmd : {ingest, probe, analyze}) add_common(cmd, o, true);
  add_common(report, o, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      cmd_ingest(load(o), std::cerr);
    } else if (probe->parsed()) {
      cmd_probe(load(o), std::cerr);
    } else if (analyze->parsed()) {
      cmd_analyze(load(o), std::cerr);
    } else if (report->parsed()) {
      std::filesystem::path dir;
      if (o.out) {
        dir = *o.out;
      } else if (!o.config.empty()) {
        dir = load(o).out;
      } else {
        throw ValidationError("report needs --out <bundle dir> or --config");
      }
      std::cout << cmd_report(dir, std::cerr);
    }
  } catch (const CorruptStateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
