#include "rdbssl/config.hpp"
#include "rdbssl/errors.hpp"
#include "rdbssl/pipeline.hpp"
#include "rdbssl/selftest.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

namespace {

using namespace rdbssl;

enum ExitCode { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3, kSelfTest = 4 };

void setup_logging(const std::string& level, const std::filesystem::path* log_file) {
  std::vector<spdlog::sink_ptr> sinks{std::make_shared<spdlog::sinks::stderr_color_sink_mt>()};
  if (log_file) {
    std::filesystem::create_directories(log_file->parent_path());
    sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(log_file->string()));
  }
  auto logger = std::make_shared<spdlog::logger>("rdbssl", sinks.begin(), sinks.end());
  logger->set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(logger);
}

int run_selftest() {
  int failures = 0;
  for (const auto& c : selftest::run_selftest()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    failures += c.passed ? 0 : 1;
  }
  return failures == 0 ? kOk : kSelfTest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised pretraining and linear probing of GNN encoders on relational databases"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string output;
  std::optional<std::uint64_t> seed_override;
  std::string stage_name;
  std::string log_level = "info";
  app.add_option("--config", config_path, "Experiment config (YAML)")->check(CLI::ExistingFile);
  app.add_option("--output", output, "Output directory (overrides output.directory)");
  app.add_option("--seed-override", seed_override, "Run a single evaluation seed");
  app.add_option("--stage", stage_name, "Stage to execute when no subcommand is given");
  app.add_option("--log-level", log_level, "Log level")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  const std::vector<std::pair<std::string, std::string>> stages{
      {"ingest", "Load the CSV source (or synthesise the trap) into <output>/data"},
      {"synth", "Synthesise the configured trap into <output>/data"},
      {"pretrain", "Initialise and pretrain one encoder per (backbone, strategy, seed)"},
      {"probe", "Fit linear probes on frozen representations"},
      {"finetune", "Fine-tune encoder and head jointly (when enabled)"},
      {"report", "Assemble metrics.csv, report.json and the negative-transfer flags"},
      {"run", "All stages in order"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);
  auto* selftest_cmd = app.add_subcommand("selftest", "Run the built-in acceptance checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest_cmd->parsed()) {
      setup_logging(log_level, nullptr);
      return run_selftest();
    }
    const auto subs = app.get_subcommands();
    if (!subs.empty()) {
      if (!stage_name.empty() && stage_name != subs.front()->get_name()) {
        throw ConfigError("--stage " + stage_name + " conflicts with subcommand " + subs.front()->get_name());
      }
      stage_name = subs.front()->get_name();
    }
    const auto stage = pipeline::parse_stage(stage_name.empty() ? "run" : stage_name);
    if (config_path.empty()) throw ConfigError("--config is required");

    auto config = config::load_config(config_path);
    if (!output.empty()) config.output = output;
    if (seed_override) config.evaluation.seeds = {*seed_override};
    const auto log_file = config.output / "run.log";
    setup_logging(log_level, &log_file);
    spdlog::info("rdbssl {} config {} (hash {})", pipeline::kVersion, config_path, config.hash().substr(0, 12));

    pipeline::RunManifest manifest;
    manifest.config_hash = config.hash();
    manifest.output = config.output;
    pipeline::run_stage(config, stage, manifest);
    return kOk;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return kNumeric;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kData;
  } catch (const std::exception& e) {
    spdlog::error("error: {}", e.what());
    return kData;
  }
}
