#pragma once

#include "rdbssl/config.hpp"
#include "rdbssl/probe.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rdbssl::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

enum class Stage { ingest, synth, pretrain, probe, finetune, report, run };

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);  // throws ConfigError

// Output layout:
//   data/                 materialised dataset (schema.yaml, CSVs, metadata.json for traps)
//   checkpoints/<backbone>_<strategy>_seed<k>.ckpt (+ .history.jsonl when pretrained)
//   metrics/probe.jsonl, metrics/finetune.jsonl   per-stage records
//   metrics.csv, metrics.jsonl, report.json       assembled report
//   manifest.json, index.jsonl (one line appended per report)
//   FAILED                                        stage name and cause of the last failure

struct CheckpointRecord {
  std::string backbone;
  std::string strategy;
  std::uint64_t seed = 0;
  std::filesystem::path path;
  std::string hash;
  bool pretrained = false;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string version{kVersion};
  std::filesystem::path output;
  std::vector<CheckpointRecord> checkpoints;
  std::vector<std::filesystem::path> metrics;
  std::vector<std::filesystem::path> logs;
  std::vector<StageTiming> timings;

  std::string to_json() const;
};

// Executes one stage against the config's output directory. Stages after
// ingest/synth read the artifacts of the previous stages. On failure writes
// output/FAILED naming the stage and cause, then rethrows.
void run_stage(const config::ExperimentConfig& config, Stage stage, RunManifest& manifest);

// ingest or synth, pretrain, probe, finetune, report; writes manifest.json.
RunManifest run_pipeline(const config::ExperimentConfig& config);
RunManifest run_pipeline(const std::filesystem::path& config_file);

// Writes metrics.csv and metrics.jsonl under output_dir and appends one line
// to output_dir/index.jsonl. Returns the two written paths.
std::vector<std::filesystem::path> emit_metrics(std::span<const eval::MetricsRow> rows,
                                                const std::filesystem::path& output_dir,
                                                const std::string& config_hash);

// Worker count for evaluation cells: RDBSSL_WORKERS if set (>= 1), else the
// hardware concurrency.
int worker_count();

}  // namespace rdbssl::pipeline
