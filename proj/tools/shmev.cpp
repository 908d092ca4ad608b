// Command-line entry point.
//
//   shmev <simulate|fit|diagnose|predict|map|evaluate> --config run.json
//         [--seed N] [--threads N] [--out DIR] [--model shmev|hmev|gev]
//   shmev convert-ghcn --input STATION.dly --output events.csv [--rejects rejects.tsv]
//
// Exit codes: 0 success, 2 configuration, 3 data, 4 numeric, 1 internal.
// Failures print a single JSON object on stderr.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "shmev/config.hpp"
#include "shmev/error.hpp"
#include "shmev/ingest.hpp"
#include "shmev/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNumeric = 4 };

int report(int code, const std::string& category, const std::string& message, const std::string& command) {
  nlohmann::json j = {{"status", "error"}, {"exit_code", code}, {"category", category}, {"message", message}};
  if (!command.empty()) j["command"] = command;
  std::cerr << j.dump() << std::endl;
  return code;
}

template <class F>
int guarded(const std::string& command, F&& body) {
  try {
    body();
    return kOk;
  } catch (const shmev::ConfigError& e) {
    return report(kConfig, "config", e.what(), command);
  } catch (const shmev::DataError& e) {
    return report(kData, "data", e.what(), command);
  } catch (const shmev::IoError& e) {
    return report(kData, "io", e.what(), command);
  } catch (const shmev::StructuralError& e) {
    return report(kData, "structure", e.what(), command);
  } catch (const shmev::NumericError& e) {
    return report(kNumeric, "numeric", e.what(), command);
  } catch (const shmev::DomainError& e) {
    return report(kNumeric, "domain", e.what(), command);
  } catch (const nlohmann::json::exception& e) {
    return report(kData, "data", e.what(), command);
  } catch (const std::filesystem::filesystem_error& e) {
    return report(kData, "io", e.what(), command);
  } catch (const std::exception& e) {
    return report(kInternal, "internal", e.what(), command);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial hierarchical extreme value modeling of daily rainfall"};
  app.require_subcommand(1);
  app.set_version_flag("--version", shmev::pipeline::kVersion);

  struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
    std::string model;
  } opt;

  for (const auto& name : shmev::pipeline::commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "Run configuration (JSON)")->required();
    sub->add_option("--seed", opt.seed, "Seed overriding the configuration");
    sub->add_option("--threads", opt.threads, "Worker threads (0: available parallelism)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", opt.out, "Run directory overriding the configuration");
    if (name == "fit" || name == "diagnose") {
      sub->add_option("--model", opt.model, "Model overriding the configuration")
          ->check(CLI::IsMember({"shmev", "hmev", "gev"}));
    }
  }

  std::string ghcn_in, ghcn_out, ghcn_rejects;
  auto* ghcn = app.add_subcommand("convert-ghcn", "Convert a GHCN daily .dly file to canonical event rows");
  ghcn->add_option("--input", ghcn_in, "Fixed-width .dly file")->required()->check(CLI::ExistingFile);
  ghcn->add_option("--output", ghcn_out, "Event CSV to write")->required();
  ghcn->add_option("--rejects", ghcn_rejects, "Rejected-line report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kConfig, "usage", e.what(), "");
  }

  if (ghcn->parsed()) {
    return guarded("convert-ghcn", [&] {
      std::vector<shmev::ingest::Reject> rejects;
      const auto n = shmev::ingest::convert_ghcn_dly(ghcn_in, ghcn_out, rejects);
      if (!ghcn_rejects.empty()) shmev::ingest::write_rejects(rejects, ghcn_rejects);
      std::cout << nlohmann::json{{"status", "ok"}, {"rows", n}, {"rejects", rejects.size()}}.dump() << std::endl;
    });
  }

  const std::string command = app.get_subcommands().front()->get_name();
  return guarded(command, [&] {
    auto cfg = shmev::config::load(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.threads) cfg.threads = *opt.threads;
    if (!opt.model.empty()) cfg.model = opt.model;
    if (!opt.out.empty()) cfg.output = opt.out;
    shmev::pipeline::Context ctx(cfg, cfg.output, command);
    shmev::pipeline::run(ctx);
    std::cout << nlohmann::json{{"status", "ok"}, {"command", command}, {"out", cfg.output},
                                {"config_hash", ctx.config_hash()}}
                     .dump()
              << std::endl;
  });
}
