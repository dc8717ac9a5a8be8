#pragma once

#include "rdbssl/encoder.hpp"
#include "rdbssl/pretrain.hpp"
#include "rdbssl/probe.hpp"
#include "rdbssl/rdb_graph.hpp"
#include "rdbssl/synth.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rdbssl::config {

struct DataSource {
  std::optional<synth::TrapSpec> trap;
  std::filesystem::path csv_directory;  // used when trap is empty
  std::filesystem::path schema;
};

struct EvaluationConfig {
  std::vector<double> s_percent{100.0};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double test_percent = 20.0;
  std::uint64_t split_seed = 0;
  eval::ProbeOptions probe;
  bool finetune = false;
  eval::FineTuneOptions finetune_options;
};

struct ExperimentConfig {
  std::string name;  // dataset label in reports
  DataSource data;
  rdb::SampleOptions sampling;
  std::uint64_t sampling_seed = 0;
  gnn::EncoderConfig encoder;                // backbone field is replaced per grid cell
  std::vector<gnn::Backbone> backbones{gnn::Backbone::gcn};
  std::vector<train::Strategy> strategies{train::Strategy::untrained};
  train::PretrainOptions pretrain;           // strategy field is replaced per grid cell
  EvaluationConfig evaluation;
  std::filesystem::path output{"runs/default"};

  // Canonical JSON of every field except the output directory.
  std::string canonical() const;
  // SHA-256 of canonical().
  std::string hash() const;
};

// YAML; unknown keys are errors. Relative paths resolve against `base_dir`.
// Throws ConfigError.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace rdbssl::config
